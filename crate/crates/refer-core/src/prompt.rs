//! Prompt construction from the five-section evaluation schema.
//!
//! A schema document carries the section texts (task intro, criteria, steps,
//! guidelines, evaluation form) and the ordered input slots; rendering is a
//! pure function of (schema, sample, role, peer reviews, strategy) and is
//! byte-deterministic. Slot substitution uses literal `{{Slot Name}}`
//! placeholders; placeholders that name no declared slot are a validation
//! issue, never silently blanked.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::gateway::{CallParams, Gateway, GatewayError, ModelHandle};
use crate::parser::{PeerContent, PeerReview};
use crate::score::{Rational, ScoreScale};

pub type PromptText = String;

pub const SCHEMA_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Peer,
    AreaChair,
}

impl Role {
    pub fn file_stem(&self) -> &'static str {
        match self {
            Role::Peer => "peer",
            Role::AreaChair => "area_chair",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Rating,
    Reasoning,
}

/// Which peer content the area chair sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommunicationStrategy {
    ScoreOnly,
    CommentOnly,
    Both,
}

/// One input line of the prompt: a named slot filled from the sample, or a
/// fixed line (e.g. an image placement note) that consumes no sample data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    /// Display label; defaults to the slot name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Fixed text rendered instead of a sample value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<String>,
}

impl SlotSpec {
    pub fn named(name: &str) -> Self {
        SlotSpec {
            name: name.to_string(),
            label: None,
            fixed: None,
        }
    }

    pub fn labeled(name: &str, label: &str) -> Self {
        SlotSpec {
            name: name.to_string(),
            label: Some(label.to_string()),
            fixed: None,
        }
    }

    fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

/// The structured evaluation prompt for one (metric, role).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSchema {
    pub metric_name: String,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScoreScale>,
    pub task_intro: String,
    #[serde(default)]
    pub criteria: String,
    #[serde(default)]
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidelines: Option<String>,
    pub input_slots: Vec<SlotSpec>,
    pub eval_form: String,
}

/// A named violation of a schema invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaIssue {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("sample lacks a value for slot {slot:?}")]
    MissingSlot { slot: String },
    #[error("area-chair render requires at least one peer review")]
    EmptyPeerSet,
    #[error("peer render must not receive peer reviews")]
    UnexpectedPeerReviews,
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{([^{}]+)\}\}").unwrap());

/// Empty iff every schema invariant holds; each issue names the violated
/// field and rule.
pub fn validate_schema(schema: &PromptSchema) -> Vec<SchemaIssue> {
    let mut issues = Vec::new();
    let issue = |field: &str, rule: String| SchemaIssue {
        field: field.to_string(),
        rule,
    };

    if schema.input_slots.is_empty() {
        issues.push(issue("input_slots", "must declare at least one slot".into()));
    }
    let mut seen = BTreeSet::new();
    for slot in &schema.input_slots {
        if !seen.insert(slot.name.as_str()) {
            issues.push(issue(
                "input_slots",
                format!("duplicate slot name {:?}", slot.name),
            ));
        }
    }

    match schema.task_kind {
        TaskKind::Rating => match &schema.scale {
            None => issues.push(issue("scale", "rating schemas must declare a scale".into())),
            Some(scale) if !scale.is_valid() => {
                issues.push(issue("scale", "scale.min must be < scale.max".into()))
            }
            _ => {}
        },
        TaskKind::Reasoning => {
            // Answer space travels with the dataset; nothing to check here.
        }
    }

    if !schema.eval_form.contains("Analysis:") {
        issues.push(issue("eval_form", "missing the literal \"Analysis:\" marker".into()));
    }
    let terminal = match schema.task_kind {
        TaskKind::Rating => "Rating",
        TaskKind::Reasoning => "Answer:",
    };
    let occurrences = schema.eval_form.matches(terminal).count();
    if occurrences != 1 {
        issues.push(issue(
            "eval_form",
            format!("needs exactly one {terminal:?} marker, found {occurrences}"),
        ));
    }

    let declared: BTreeSet<&str> = schema.input_slots.iter().map(|s| s.name.as_str()).collect();
    for (field, text) in section_texts(schema) {
        for cap in PLACEHOLDER.captures_iter(&text) {
            let name = cap[1].trim();
            if !declared.contains(name) {
                issues.push(issue(field, format!("unknown placeholder {{{{{name}}}}}")));
            }
        }
    }

    issues
}

fn section_texts(schema: &PromptSchema) -> Vec<(&'static str, String)> {
    let mut texts = vec![
        ("task_intro", schema.task_intro.clone()),
        ("criteria", schema.criteria.clone()),
        ("eval_form", schema.eval_form.clone()),
    ];
    for step in &schema.steps {
        texts.push(("steps", step.clone()));
    }
    if let Some(g) = &schema.guidelines {
        texts.push(("guidelines", g.clone()));
    }
    for slot in &schema.input_slots {
        if let Some(fixed) = &slot.fixed {
            texts.push(("input_slots", fixed.clone()));
        }
    }
    texts
}

fn substitute(
    text: &str,
    values: &BTreeMap<&str, &str>,
) -> Result<String, PromptError> {
    let mut missing: Option<String> = None;
    let out = PLACEHOLDER.replace_all(text, |cap: &regex::Captures<'_>| {
        let name = cap[1].trim();
        match values.get(name) {
            Some(v) => (*v).to_string(),
            None => {
                if missing.is_none() {
                    missing = Some(name.to_string());
                }
                String::new()
            }
        }
    });
    match missing {
        Some(slot) => Err(PromptError::MissingSlot { slot }),
        None => Ok(out.into_owned()),
    }
}

fn ordinal(index: usize) -> String {
    const WORDS: [&str; 12] = [
        "First", "Second", "Third", "Fourth", "Fifth", "Sixth", "Seventh", "Eighth", "Ninth",
        "Tenth", "Eleventh", "Twelfth",
    ];
    match WORDS.get(index) {
        Some(w) => (*w).to_string(),
        None => format!("{}th", index + 1),
    }
}

/// What one peer contributes to the area-chair prompt under a strategy.
fn peer_entry_content(review: &PeerReview, strategy: CommunicationStrategy) -> String {
    match (strategy, &review.content) {
        (CommunicationStrategy::ScoreOnly, PeerContent::Rating(r)) => {
            format!("Rating: {}", r.score)
        }
        (CommunicationStrategy::ScoreOnly, PeerContent::Answer(a)) => {
            format!("Answer: {}", a.answer)
        }
        (CommunicationStrategy::CommentOnly, content) => content.analysis().to_string(),
        (CommunicationStrategy::Both, PeerContent::Rating(r)) => {
            format!("Analysis: {}\nRating: {}", r.analysis, r.score)
        }
        (CommunicationStrategy::Both, PeerContent::Answer(a)) => {
            format!("Analysis: {}\nAnswer: {}", a.analysis, a.answer)
        }
    }
}

/// Renders the prompt for one role over one sample.
///
/// Section order is fixed: task intro, criteria, steps, guidelines, input
/// block, peer-review block (area chair only), evaluation form, and — for
/// rating tasks — the terminal `<metric>:` cue. Identical inputs produce
/// byte-identical output, and peer renders are independent of the
/// communication strategy.
pub fn render_prompt(
    schema: &PromptSchema,
    sample: &Sample,
    role: Role,
    peer_reviews: Option<&[PeerReview]>,
    strategy: CommunicationStrategy,
) -> Result<PromptText, PromptError> {
    let reviews = match (role, peer_reviews) {
        (Role::AreaChair, Some(reviews)) if !reviews.is_empty() => Some(reviews),
        (Role::AreaChair, _) => return Err(PromptError::EmptyPeerSet),
        (Role::Peer, Some(_)) => return Err(PromptError::UnexpectedPeerReviews),
        (Role::Peer, None) => None,
    };

    let values: BTreeMap<&str, &str> = sample
        .slots
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();

    let mut sections: Vec<String> = Vec::new();
    let mut push = |text: String| {
        if !text.trim().is_empty() {
            sections.push(text);
        }
    };

    push(substitute(&schema.task_intro, &values)?);

    if !schema.criteria.trim().is_empty() {
        push(format!(
            "Evaluation Criteria:\n\n{}",
            substitute(&schema.criteria, &values)?
        ));
    }

    if !schema.steps.is_empty() {
        let (header, bullet_numbers) = match schema.task_kind {
            TaskKind::Rating => ("Evaluation Steps:", true),
            TaskKind::Reasoning => ("Instructions:", false),
        };
        let mut lines = vec![header.to_string()];
        for (i, step) in schema.steps.iter().enumerate() {
            let step = substitute(step, &values)?;
            if bullet_numbers {
                lines.push(format!("{}. {}", i + 1, step));
            } else {
                lines.push(format!("- {step}"));
            }
        }
        push(lines.join("\n"));
    }

    if let Some(guidelines) = &schema.guidelines {
        if !guidelines.trim().is_empty() {
            push(format!(
                "Evaluation Guidelines:\n\n{}",
                substitute(guidelines, &values)?
            ));
        }
    }

    let mut input_lines: Vec<String> = Vec::new();
    if schema.task_kind == TaskKind::Rating {
        input_lines.push("Example:".to_string());
    }
    for slot in &schema.input_slots {
        let value = match &slot.fixed {
            Some(fixed) => substitute(fixed, &values)?,
            None => values
                .get(slot.name.as_str())
                .map(|v| (*v).to_string())
                .ok_or_else(|| PromptError::MissingSlot {
                    slot: slot.name.clone(),
                })?,
        };
        input_lines.push(format!("{}: {}", slot.label(), value));
    }
    push(input_lines.join("\n\n"));

    if let Some(reviews) = reviews {
        let mut entries: Vec<String> = Vec::new();
        if schema.task_kind == TaskKind::Reasoning {
            entries.push("Answers from Other LLMs:".to_string());
        }
        for (i, review) in reviews.iter().enumerate() {
            let header = match schema.task_kind {
                TaskKind::Rating => format!("{} Assistant's Evaluation:", ordinal(i)),
                TaskKind::Reasoning => format!("LLM {} Answer:", i + 1),
            };
            entries.push(format!("{header}\n{}", peer_entry_content(review, strategy)));
        }
        push(entries.join("\n\n"));
    }

    push(substitute(&schema.eval_form, &values)?);

    if schema.task_kind == TaskKind::Rating {
        push(format!("{}:", schema.metric_name));
    }

    Ok(sections.join("\n\n"))
}

// ---------------------------------------------------------------------------
// Auto-prompt: drafting evaluation guidelines from structure + examples
// ---------------------------------------------------------------------------

/// A dataset example shown to the guideline-drafting model: labeled input
/// lines plus the human rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub lines: Vec<(String, String)>,
    pub rating: Rational,
}

pub const AUTO_PROMPT_PREAMBLE: &str = "You are tasked with creating a clear and concise prompt for a task based on the provided prompt structure and examples from dataset. The prompt should be written in such a way that it can be easily understood and followed by another LLM or human user performing the task. Your prompt should include the following:

- A brief overview of the task.
- Evaluation criteria explaining what metric the evaluation is going to be on.
- Clear instructions for how to approach the task or evaluation steps.
- Use the examples of dataset, analyze and understand how it is evaluated for the given metric and give a detailed Evaluation guidelines which will tell when to give a particular score.";

/// Builds the guideline-drafting prompt from a prompt structure and
/// annotated examples.
pub fn build_auto_prompt(structure: &str, examples: &[AnnotatedExample]) -> PromptText {
    let mut sections = vec![
        AUTO_PROMPT_PREAMBLE.to_string(),
        format!("Example Prompt Structure:\n\n{structure}"),
        "Examples for Task:".to_string(),
    ];
    for (i, example) in examples.iter().enumerate() {
        let mut lines = vec![format!("Example {}:", i + 1)];
        for (label, value) in &example.lines {
            lines.push(format!("{label}: {value}"));
        }
        lines.push(format!("Rating: {}", example.rating));
        sections.push(lines.join("\n\n"));
    }
    sections.join("\n\n")
}

/// The longest contiguous non-blank block following a line that starts with
/// "Evaluation Guidelines" (case-insensitive).
pub fn extract_guidelines(completion: &str) -> Option<String> {
    static HEADER: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"(?i)^[^A-Za-z0-9\n]*evaluation guidelines").unwrap());
    let lines: Vec<&str> = completion.lines().collect();
    let mut best: Option<String> = None;
    for (i, line) in lines.iter().enumerate() {
        if !HEADER.is_match(line) {
            continue;
        }
        let mut j = i + 1;
        while j < lines.len() && lines[j].trim().is_empty() {
            j += 1;
        }
        let mut block = Vec::new();
        while j < lines.len() && !lines[j].trim().is_empty() {
            block.push(lines[j]);
            j += 1;
        }
        let block = block.join("\n");
        if !block.is_empty() && best.as_ref().map_or(true, |b| block.len() > b.len()) {
            best = Some(block);
        }
    }
    best
}

#[derive(Debug, thiserror::Error)]
pub enum GuidelineError {
    #[error("auto-prompt needs at least one annotated example")]
    NoExamples,
    #[error("backend failure: {0}")]
    Backend(#[from] GatewayError),
    #[error("completion contains no extractable guideline section")]
    UnparseableCompletion,
}

/// Asks `handle` to draft evaluation guidelines and extracts the guideline
/// block from its completion. The caller stores the result into the schema's
/// `guidelines` field.
pub fn generate_guidelines(
    structure: &str,
    examples: &[AnnotatedExample],
    gateway: &Gateway,
    handle: &ModelHandle,
    params: &CallParams,
) -> Result<String, GuidelineError> {
    if examples.is_empty() {
        return Err(GuidelineError::NoExamples);
    }
    let prompt = build_auto_prompt(structure, examples);
    let response = gateway.invoke(&params.request(prompt, 1), handle)?;
    extract_guidelines(&response.completions[0]).ok_or(GuidelineError::UnparseableCompletion)
}

// ---------------------------------------------------------------------------
// Schema documents on disk
// ---------------------------------------------------------------------------

/// The peer and area-chair schema documents for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaPair {
    pub peer: PromptSchema,
    pub area_chair: PromptSchema,
}

/// metric → schema pair, as loaded from a schema directory.
pub type SchemaSet = BTreeMap<String, SchemaPair>;

#[derive(Debug, thiserror::Error)]
pub enum SchemaLoadError {
    #[error("schema file {path} is missing (metric {metric:?}, role {role})")]
    MissingFile {
        path: String,
        metric: String,
        role: &'static str,
    },
    #[error("schema file {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("schema file {path} is invalid: {issues:?}")]
    Invalid {
        path: String,
        issues: Vec<SchemaIssue>,
    },
}

#[derive(Deserialize)]
struct SchemaFile {
    version: u32,
    metric: String,
    task: TaskKind,
    #[serde(default)]
    scale: Option<ScoreScale>,
    task_intro: String,
    #[serde(default)]
    criteria: String,
    #[serde(default)]
    steps: Vec<String>,
    #[serde(default)]
    guidelines: Option<String>,
    #[serde(default)]
    input: Vec<SlotSpec>,
    eval_form: String,
}

/// Loads one schema document.
pub fn load_schema(path: &Path) -> Result<PromptSchema, SchemaLoadError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| SchemaLoadError::Malformed {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let file: SchemaFile = toml::from_str(&text).map_err(|e| SchemaLoadError::Malformed {
        path: display.clone(),
        message: e.to_string(),
    })?;
    if file.version != SCHEMA_FILE_VERSION {
        return Err(SchemaLoadError::Malformed {
            path: display.clone(),
            message: format!("unknown schema version {}", file.version),
        });
    }
    let schema = PromptSchema {
        metric_name: file.metric,
        task_kind: file.task,
        scale: file.scale,
        task_intro: file.task_intro,
        criteria: file.criteria,
        steps: file.steps,
        guidelines: file.guidelines,
        input_slots: file.input,
        eval_form: file.eval_form,
    };
    let issues = validate_schema(&schema);
    if !issues.is_empty() {
        return Err(SchemaLoadError::Invalid {
            path: display,
            issues,
        });
    }
    Ok(schema)
}

/// Loads `<dir>/<dataset>/<metric>.<role>.toml` for every requested metric.
pub fn load_schema_set(
    schema_dir: &Path,
    dataset_name: &str,
    metrics: &[String],
) -> Result<SchemaSet, SchemaLoadError> {
    let base = schema_dir.join(dataset_name);
    let mut set = SchemaSet::new();
    for metric in metrics {
        let mut roles = Vec::new();
        for role in [Role::Peer, Role::AreaChair] {
            let path = base.join(format!("{metric}.{}.toml", role.file_stem()));
            if !path.exists() {
                return Err(SchemaLoadError::MissingFile {
                    path: path.display().to_string(),
                    metric: metric.clone(),
                    role: role.file_stem(),
                });
            }
            roles.push(load_schema(&path)?);
        }
        let area_chair = roles.pop().expect("two roles loaded");
        let peer = roles.pop().expect("two roles loaded");
        set.insert(metric.clone(), SchemaPair { peer, area_chair });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::ReviewOutcome;

    fn sample() -> Sample {
        Sample {
            id: "s1".into(),
            slots: [
                ("Conversation".to_string(), "A: hello\nB: hi there".to_string()),
                ("Contextual Fact".to_string(), "Flamingos are pink.".to_string()),
                ("Generated Response".to_string(), "Did you know they eat shrimp?".to_string()),
            ]
            .into(),
            image: None,
            human_scores: BTreeMap::new(),
            gold_answer: None,
            scale: Some(ScoreScale::integer(1, 3)),
        }
    }

    fn schema() -> PromptSchema {
        PromptSchema {
            metric_name: "Engagingness".into(),
            task_kind: TaskKind::Rating,
            scale: Some(ScoreScale::integer(1, 3)),
            task_intro: "You will be given a conversation between two individuals.".into(),
            criteria: "Engagingness (1-3): Is the response dull/interesting?".into(),
            steps: vec![
                "Read the conversation, the corresponding fact and the response carefully.".into(),
                "Rate the response on a scale of 1-3 for engagingness.".into(),
            ],
            guidelines: Some("- A score of 1 (dull) means that the response is generic.".into()),
            input_slots: vec![
                SlotSpec::labeled("Conversation", "Conversation History"),
                SlotSpec::labeled("Contextual Fact", "Corresponding Fact"),
                SlotSpec::labeled("Generated Response", "Response"),
            ],
            eval_form: "Evaluation Form (Answer by starting with \"Analysis:\" and then give the numeric rating on the next line by \"Rating\".)".into(),
        }
    }

    fn review(peer: &str, analysis: &str, score: i64) -> PeerReview {
        PeerReview {
            peer: peer.into(),
            content: PeerContent::Rating(ReviewOutcome {
                analysis: analysis.into(),
                score: Rational::from_integer(score),
                raw: format!("Analysis: {analysis}\nRating: {score}"),
            }),
        }
    }

    #[test]
    fn peer_render_has_fixed_section_order() {
        let text = render_prompt(
            &schema(),
            &sample(),
            Role::Peer,
            None,
            CommunicationStrategy::ScoreOnly,
        )
        .unwrap();
        let order = [
            "You will be given a conversation",
            "Evaluation Criteria:",
            "Evaluation Steps:",
            "Evaluation Guidelines:",
            "Example:",
            "Conversation History: A: hello",
            "Corresponding Fact: Flamingos are pink.",
            "Response: Did you know they eat shrimp?",
            "Evaluation Form",
            "Engagingness:",
        ];
        let mut last = 0;
        for marker in order {
            let pos = text[last..]
                .find(marker)
                .unwrap_or_else(|| panic!("marker {marker:?} missing or out of order\n{text}"));
            last += pos;
        }
        assert!(text.ends_with("Engagingness:"));
    }

    #[test]
    fn rendering_is_deterministic_and_strategy_independent_for_peers() {
        let a = render_prompt(&schema(), &sample(), Role::Peer, None, CommunicationStrategy::ScoreOnly)
            .unwrap();
        let b = render_prompt(&schema(), &sample(), Role::Peer, None, CommunicationStrategy::Both)
            .unwrap();
        let c = render_prompt(&schema(), &sample(), Role::Peer, None, CommunicationStrategy::ScoreOnly)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn ac_render_labels_peers_ordinally_in_peer_order() {
        let reviews = vec![
            review("p1", "thoughtful", 2),
            review("p2", "engaging", 3),
            review("p3", "fine", 3),
        ];
        let text = render_prompt(
            &schema(),
            &sample(),
            Role::AreaChair,
            Some(&reviews),
            CommunicationStrategy::ScoreOnly,
        )
        .unwrap();
        let first = text.find("First Assistant's Evaluation:\nRating: 2").unwrap();
        let second = text.find("Second Assistant's Evaluation:\nRating: 3").unwrap();
        let third = text.find("Third Assistant's Evaluation:\nRating: 3").unwrap();
        assert!(first < second && second < third);
    }

    #[test]
    fn score_only_strips_all_peer_analysis() {
        let reviews = vec![review("p1", "SENTINEL_ANALYSIS_XYZZY", 2)];
        let text = render_prompt(
            &schema(),
            &sample(),
            Role::AreaChair,
            Some(&reviews),
            CommunicationStrategy::ScoreOnly,
        )
        .unwrap();
        assert!(!text.contains("SENTINEL_ANALYSIS_XYZZY"));
        assert!(text.contains("Rating: 2"));
    }

    #[test]
    fn comment_only_strips_all_peer_scores() {
        let schema = PromptSchema {
            scale: Some(ScoreScale::integer(0, 100)),
            ..schema()
        };
        let reviews = vec![PeerReview {
            peer: "p1".into(),
            content: PeerContent::Rating(ReviewOutcome {
                analysis: "a distinctive take".into(),
                score: Rational::from_integer(73),
                raw: String::new(),
            }),
        }];
        let text = render_prompt(
            &schema,
            &sample(),
            Role::AreaChair,
            Some(&reviews),
            CommunicationStrategy::CommentOnly,
        )
        .unwrap();
        assert!(text.contains("a distinctive take"));
        assert!(!text.contains("73"));
    }

    #[test]
    fn both_strategy_includes_full_parsed_text() {
        let reviews = vec![review("p1", "balanced view", 2)];
        let text = render_prompt(
            &schema(),
            &sample(),
            Role::AreaChair,
            Some(&reviews),
            CommunicationStrategy::Both,
        )
        .unwrap();
        assert!(text.contains("Analysis: balanced view\nRating: 2"));
    }

    #[test]
    fn ac_without_reviews_is_empty_peer_set() {
        assert_eq!(
            render_prompt(&schema(), &sample(), Role::AreaChair, None, CommunicationStrategy::Both)
                .unwrap_err(),
            PromptError::EmptyPeerSet
        );
        assert_eq!(
            render_prompt(
                &schema(),
                &sample(),
                Role::AreaChair,
                Some(&[]),
                CommunicationStrategy::Both
            )
            .unwrap_err(),
            PromptError::EmptyPeerSet
        );
    }

    #[test]
    fn missing_slot_is_reported_by_name() {
        let mut sample = sample();
        sample.slots.remove("Contextual Fact");
        let err = render_prompt(&schema(), &sample, Role::Peer, None, CommunicationStrategy::Both)
            .unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingSlot {
                slot: "Contextual Fact".into()
            }
        );
    }

    #[test]
    fn placeholders_substitute_inside_sections() {
        let mut schema = schema();
        schema.task_intro = "Consider this fact: {{Contextual Fact}}".into();
        let text = render_prompt(&schema, &sample(), Role::Peer, None, CommunicationStrategy::Both)
            .unwrap();
        assert!(text.starts_with("Consider this fact: Flamingos are pink."));
        // Values containing braces are not re-expanded.
        let mut sample2 = sample();
        sample2
            .slots
            .insert("Contextual Fact".into(), "{{Generated Response}}".into());
        let text = render_prompt(&schema, &sample2, Role::Peer, None, CommunicationStrategy::Both)
            .unwrap();
        assert!(text.starts_with("Consider this fact: {{Generated Response}}"));
    }

    #[test]
    fn fixed_slots_render_without_sample_data() {
        let mut schema = schema();
        schema.input_slots.push(SlotSpec {
            name: "_image".into(),
            label: Some("Generated Image".into()),
            fixed: Some("[Image is attached below]".into()),
        });
        let text = render_prompt(&schema, &sample(), Role::Peer, None, CommunicationStrategy::Both)
            .unwrap();
        assert!(text.contains("Generated Image: [Image is attached below]"));
    }

    #[test]
    fn validate_accepts_well_formed_schema() {
        assert!(validate_schema(&schema()).is_empty());
    }

    #[test]
    fn validate_flags_each_broken_invariant() {
        let mut s = schema();
        s.eval_form = "Give a number.".into();
        let issues = validate_schema(&s);
        assert!(issues.iter().any(|i| i.field == "eval_form" && i.rule.contains("Analysis:")));
        assert!(issues.iter().any(|i| i.field == "eval_form" && i.rule.contains("Rating")));

        let mut s = schema();
        s.input_slots.push(SlotSpec::named("Conversation"));
        assert!(validate_schema(&s).iter().any(|i| i.field == "input_slots"));

        let mut s = schema();
        s.scale = None;
        assert!(validate_schema(&s).iter().any(|i| i.field == "scale"));

        let mut s = schema();
        s.criteria = "Uses {{Nonexistent Slot}} here.".into();
        assert!(validate_schema(&s)
            .iter()
            .any(|i| i.rule.contains("Nonexistent Slot")));
    }

    #[test]
    fn reasoning_render_uses_reasoning_furniture() {
        let schema = PromptSchema {
            metric_name: "Answer".into(),
            task_kind: TaskKind::Reasoning,
            scale: None,
            task_intro: "You will be provided with a problem.".into(),
            criteria: String::new(),
            steps: vec!["Read the problem statement carefully.".into()],
            guidelines: None,
            input_slots: vec![
                SlotSpec::labeled("question", "Problem Statement"),
                SlotSpec::labeled("options", "Provided Options"),
            ],
            eval_form: "Evaluation Form:\n- Analysis: [Start with \"Analysis:\"]\n- Answer: [state the final answer label only]".into(),
        };
        let mut sample = sample();
        sample.slots.insert("question".into(), "2+2?".into());
        sample.slots.insert("options".into(), "A) 3 B) 4".into());

        let peer = render_prompt(&schema, &sample, Role::Peer, None, CommunicationStrategy::Both)
            .unwrap();
        assert!(peer.contains("Instructions:\n- Read the problem statement carefully."));
        assert!(peer.contains("Problem Statement: 2+2?"));
        assert!(!peer.contains("Example:"));
        assert!(!peer.ends_with("Answer:"));

        let reviews = vec![PeerReview {
            peer: "p1".into(),
            content: PeerContent::Answer(crate::parser::AnswerOutcome {
                analysis: "adding".into(),
                answer: crate::parser::Answer::Label('B'),
                raw: "Analysis: adding\nAnswer: B".into(),
            }),
        }];
        let ac = render_prompt(
            &schema,
            &sample,
            Role::AreaChair,
            Some(&reviews),
            CommunicationStrategy::Both,
        )
        .unwrap();
        assert!(ac.contains("Answers from Other LLMs:"));
        assert!(ac.contains("LLM 1 Answer:\nAnalysis: adding\nAnswer: B"));
    }

    #[test]
    fn auto_prompt_embeds_structure_and_examples() {
        let examples = vec![AnnotatedExample {
            lines: vec![
                ("Conversation History".into(), "A: hi".into()),
                ("Response".into(), "It was fine.".into()),
            ],
            rating: Rational::from_integer(1),
        }];
        let prompt = build_auto_prompt("STRUCTURE GOES HERE", &examples);
        assert!(prompt.contains("Example Prompt Structure:\n\nSTRUCTURE GOES HERE"));
        assert!(prompt.contains("Examples for Task:"));
        assert!(prompt.contains("Example 1:"));
        assert!(prompt.contains("Rating: 1"));
    }

    #[test]
    fn guideline_extraction_takes_longest_block_and_drops_prose() {
        let completion = "Here is a prompt you could use.\n\nEvaluation Guidelines:\n- A score of 1 (dull) means the response is generic.\n- A score of 2 means somewhat interesting.\n- A score of 3 means very interesting.\n\nI hope this helps!";
        let block = extract_guidelines(completion).unwrap();
        assert!(block.starts_with("- A score of 1"));
        assert!(block.ends_with("very interesting."));
        assert!(!block.contains("hope this helps"));
        assert_eq!(extract_guidelines("no guidelines here"), None);
        assert_eq!(extract_guidelines("Evaluation Guidelines:\n\n"), None);
    }

    #[test]
    fn guideline_extraction_prefers_longest_of_multiple_headers() {
        let completion = "evaluation guidelines\nshort block\n\nEvaluation Guidelines:\n- a much longer block line one\n- and line two of it";
        let block = extract_guidelines(completion).unwrap();
        assert!(block.contains("much longer block"));
    }
}
