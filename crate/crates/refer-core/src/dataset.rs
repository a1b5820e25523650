//! Dataset loading, run persistence, and the instruction-tuning export.
//!
//! One line-delimited JSON schema covers every dataset shape: the first line
//! is a header carrying name, kind, metrics, and the score scale or answer
//! space; each following line is one sample. Public releases ship in
//! heterogeneous formats — small adapter scripts convert them into this
//! interchange form (see README).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::ImageLocator;
use crate::orchestrator::{RunRecord, UnitOutcome};
use crate::parser::{Answer, AnswerSpace};
use crate::prompt::{render_prompt, Role, SchemaSet};
use crate::score::{Rational, ScoreScale};

pub const DATASET_FORMAT: &str = "refer.dataset";
pub const DATASET_VERSION: u32 = 1;
/// Pseudo-metric name under which reasoning verdicts are keyed.
pub const REASONING_METRIC: &str = "answer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    NlgRating,
    MultimodalRating,
    Reasoning,
}

impl DatasetKind {
    pub fn is_rating(&self) -> bool {
        !matches!(self, DatasetKind::Reasoning)
    }

    pub fn is_multimodal(&self) -> bool {
        matches!(self, DatasetKind::MultimodalRating)
    }
}

/// One evaluable unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Named slot values substituted into prompt templates.
    pub slots: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageLocator>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub human_scores: BTreeMap<String, Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<Answer>,
    #[serde(skip)]
    pub scale: Option<ScoreScale>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub kind: DatasetKind,
    pub samples: Vec<Sample>,
    pub metrics: Vec<String>,
    pub scale: Option<ScoreScale>,
    pub answer_space: Option<AnswerSpace>,
}

impl Dataset {
    pub fn sample_by_id(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}, field {field}: {message}")]
    SchemaViolation {
        line: usize,
        field: String,
        message: String,
    },
    #[error("rating dataset header is missing its score scale")]
    MissingScale,
    #[error("line {line}: duplicate sample id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    name: String,
    kind: DatasetKind,
    #[serde(default)]
    metrics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<ScoreScale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_space: Option<AnswerSpace>,
}

fn violation(line: usize, field: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::SchemaViolation {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

/// Reads only the header's `kind` field.
pub fn peek_kind(path: &Path) -> Result<DatasetKind, DatasetError> {
    let text = fs::read_to_string(path)?;
    let header_line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| violation(1, "header", "empty dataset file"))?;
    #[derive(Deserialize)]
    struct KindOnly {
        kind: DatasetKind,
    }
    let header: KindOnly = serde_json::from_str(header_line)
        .map_err(|e| violation(1, "header", format!("unparseable header: {e}")))?;
    Ok(header.kind)
}

/// Loads and validates a dataset, preserving sample order.
pub fn load_dataset(path: &Path, expected_kind: DatasetKind) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (_, header_line) = lines
        .next()
        .ok_or_else(|| violation(1, "header", "empty dataset file"))?;
    let header: DatasetHeader = serde_json::from_str(header_line)
        .map_err(|e| violation(1, "header", format!("unparseable header: {e}")))?;
    if header.format != DATASET_FORMAT {
        return Err(violation(1, "format", format!("expected {DATASET_FORMAT}, got {}", header.format)));
    }
    if header.version != DATASET_VERSION {
        return Err(violation(1, "version", format!("unknown dataset version {}", header.version)));
    }
    if header.kind != expected_kind {
        return Err(violation(1, "kind", format!("expected {expected_kind:?}, got {:?}", header.kind)));
    }

    let metrics = if header.kind.is_rating() {
        if header.metrics.is_empty() {
            return Err(violation(1, "metrics", "rating dataset declares no metrics"));
        }
        header.metrics.clone()
    } else {
        vec![REASONING_METRIC.to_string()]
    };
    if header.kind.is_rating() && header.scale.is_none() {
        return Err(DatasetError::MissingScale);
    }
    if let Some(scale) = &header.scale {
        if !scale.is_valid() {
            return Err(violation(1, "scale", "scale.min must be < scale.max"));
        }
    }
    if header.kind == DatasetKind::Reasoning {
        match &header.answer_space {
            None => return Err(violation(1, "answer_space", "reasoning dataset needs an answer space")),
            Some(space) if !space.is_valid() => {
                return Err(violation(1, "answer_space", "label answer space is empty"))
            }
            _ => {}
        }
    }

    let mut samples = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let mut sample: Sample = serde_json::from_str(line)
            .map_err(|e| violation(line_no, "sample", format!("unparseable sample: {e}")))?;
        if sample.id.is_empty() {
            return Err(violation(line_no, "id", "empty sample id"));
        }
        if !seen.insert(sample.id.clone()) {
            return Err(DatasetError::DuplicateId {
                line: line_no,
                id: sample.id,
            });
        }
        match header.kind {
            DatasetKind::NlgRating | DatasetKind::MultimodalRating => {
                for metric in &metrics {
                    if !sample.human_scores.contains_key(metric) {
                        return Err(violation(
                            line_no,
                            "human_scores",
                            format!("sample {:?} lacks a human score for {metric:?}", sample.id),
                        ));
                    }
                }
                if sample.gold_answer.is_some() {
                    return Err(violation(line_no, "gold_answer", "rating samples carry human_scores, not gold_answer"));
                }
            }
            DatasetKind::Reasoning => {
                let answer = sample.gold_answer.as_ref().ok_or_else(|| {
                    violation(line_no, "gold_answer", format!("sample {:?} lacks a gold answer", sample.id))
                })?;
                match (&header.answer_space, answer) {
                    (Some(AnswerSpace::Labels { labels }), Answer::Label(l)) if !labels.contains(l) => {
                        return Err(violation(line_no, "gold_answer", format!("label {l} outside answer space")));
                    }
                    (Some(AnswerSpace::Labels { .. }), Answer::Number(_)) => {
                        return Err(violation(line_no, "gold_answer", "numeric answer in a label space"));
                    }
                    (Some(AnswerSpace::Number), Answer::Label(_)) => {
                        return Err(violation(line_no, "gold_answer", "label answer in a numeric space"));
                    }
                    _ => {}
                }
            }
        }
        if header.kind.is_multimodal() && sample.image.is_none() {
            return Err(violation(line_no, "image", "multimodal sample lacks an image reference"));
        }
        if !header.kind.is_multimodal() && sample.image.is_some() {
            return Err(violation(line_no, "image", "non-multimodal sample carries an image"));
        }
        sample.scale = header.scale;
        samples.push(sample);
    }

    if samples.is_empty() {
        return Err(violation(1, "samples", "dataset has no samples"));
    }

    Ok(Dataset {
        name: header.name,
        kind: header.kind,
        samples,
        metrics,
        scale: header.scale,
        answer_space: header.answer_space,
    })
}

/// Writes a dataset back out in the interchange format.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_string(),
        version: DATASET_VERSION,
        name: dataset.name.clone(),
        kind: dataset.kind,
        metrics: if dataset.kind.is_rating() {
            dataset.metrics.clone()
        } else {
            Vec::new()
        },
        scale: dataset.scale,
        answer_space: dataset.answer_space.clone(),
    };
    let mut out = fs::File::create(path)?;
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for sample in &dataset.samples {
        writeln!(out, "{}", serde_json::to_string(sample)?)?;
    }
    Ok(())
}

impl From<serde_json::Error> for DatasetError {
    fn from(e: serde_json::Error) -> Self {
        DatasetError::Io(std::io::Error::other(e))
    }
}

/// Seeded score-stratified subsampling: samples are binned by their mean
/// human score and drawn round-robin across bins so the result spreads over
/// the rating range.
pub fn stratified_subsample(dataset: &Dataset, target: usize, seed: u64) -> Dataset {
    let scale = match dataset.scale {
        Some(s) => s,
        None => return dataset.clone(),
    };
    let bins = 10usize;
    let span = scale.span().to_f64();
    let mut by_bin: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, sample) in dataset.samples.iter().enumerate() {
        let scores: Vec<Rational> = sample.human_scores.values().copied().collect();
        let mean = Rational::mean(&scores).unwrap_or(scale.min).to_f64();
        let frac = ((mean - scale.min.to_f64()) / span).clamp(0.0, 1.0);
        let bin = ((frac * bins as f64) as usize).min(bins - 1);
        by_bin[bin].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for bin in &mut by_bin {
        bin.shuffle(&mut rng);
    }
    let mut picked = Vec::new();
    let mut round = 0;
    while picked.len() < target.min(dataset.samples.len()) {
        let mut advanced = false;
        for bin in &by_bin {
            if let Some(&idx) = bin.get(round) {
                picked.push(idx);
                advanced = true;
                if picked.len() == target {
                    break;
                }
            }
        }
        if !advanced {
            break;
        }
        round += 1;
    }
    picked.sort_unstable(); // keep original dataset order
    Dataset {
        samples: picked.iter().map(|&i| dataset.samples[i].clone()).collect(),
        metrics: dataset.metrics.clone(),
        answer_space: dataset.answer_space.clone(),
        name: dataset.name.clone(),
        ..*dataset
    }
}

// ---------------------------------------------------------------------------
// Run persistence
// ---------------------------------------------------------------------------

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, thiserror::Error)]
pub enum RunIoError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: unknown format/version {found}")]
    UnknownVersion { path: String, found: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunIoError + '_ {
    move |source| RunIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Persists a run as `records.jsonl` (header line + one verdict per line)
/// plus `summary.json` (config snapshot, ledger totals, timing percentiles)
/// inside `dir`.
pub fn persist_run(run: &RunRecord, dir: &Path) -> Result<(), RunIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let records_path = dir.join(RECORDS_FILE);
    let mut out = Vec::new();
    let header = serde_json::json!({
        "format": crate::orchestrator::RECORDS_FORMAT,
        "version": crate::orchestrator::RUN_FORMAT_VERSION,
        "run": run.header,
    });
    out.extend_from_slice(serde_json::to_string(&header).expect("header serializes").as_bytes());
    out.push(b'\n');
    for record in &run.records {
        out.extend_from_slice(serde_json::to_string(record).expect("record serializes").as_bytes());
        out.push(b'\n');
    }
    fs::write(&records_path, out).map_err(io_err(&records_path))?;

    let summary_path = dir.join(SUMMARY_FILE);
    let summary = run.summary_document();
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(io_err(&summary_path))?;
    Ok(())
}

/// Loads a run directory (or a bare records file) back into a [`RunRecord`].
pub fn load_run(path: &Path) -> Result<RunRecord, RunIoError> {
    let (records_path, summary_path) = if path.is_dir() {
        (path.join(RECORDS_FILE), Some(path.join(SUMMARY_FILE)))
    } else {
        (path.to_path_buf(), None)
    };
    let text = fs::read_to_string(&records_path).map_err(io_err(&records_path))?;
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or_else(|| RunIoError::Malformed {
        path: records_path.display().to_string(),
        line: 1,
        message: "empty records file".into(),
    })?;

    #[derive(Deserialize)]
    struct RecordsHeader {
        format: String,
        version: u32,
        run: crate::orchestrator::RunHeader,
    }
    let header: RecordsHeader =
        serde_json::from_str(header_line).map_err(|e| RunIoError::Malformed {
            path: records_path.display().to_string(),
            line: 1,
            message: format!("unparseable run header: {e}"),
        })?;
    if header.format != crate::orchestrator::RECORDS_FORMAT
        || header.version != crate::orchestrator::RUN_FORMAT_VERSION
    {
        return Err(RunIoError::UnknownVersion {
            path: records_path.display().to_string(),
            found: format!("{} v{}", header.format, header.version),
        });
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| RunIoError::Malformed {
            path: records_path.display().to_string(),
            line: idx + 1,
            message: format!("unparseable record: {e}"),
        })?;
        records.push(record);
    }

    let mut run = RunRecord::from_parts(header.run, records);
    if let Some(summary_path) = summary_path {
        if summary_path.exists() {
            let text = fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?;
            run.apply_summary(&text).map_err(|message| RunIoError::Malformed {
                path: summary_path.display().to_string(),
                line: 1,
                message,
            })?;
        }
    }
    Ok(run)
}

// ---------------------------------------------------------------------------
// Instruction-tuning export
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExportReport {
    pub written: usize,
    pub skipped: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("run has no exportable verdicts")]
    EmptyRun,
    #[error("run is not a rating run")]
    NotARatingRun,
    #[error("sample {0:?} from the run is missing in the dataset")]
    UnknownSample(String),
    #[error("no schema for metric {0:?}")]
    MissingSchema(String),
    #[error("render: {0}")]
    Render(#[from] crate::prompt::PromptError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One instruction-tuning record: the peer prompt as the instruction, the
/// area chair's analysis and final score as the target output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningRecord {
    pub sample_id: String,
    pub metric: String,
    pub instruction: String,
    pub output: String,
}

/// Exports `{instruction, output}` records for every clean verdict; verdicts
/// that failed are skipped and counted.
pub fn export_instruction_tuning(
    run: &RunRecord,
    dataset: &Dataset,
    schemas: &SchemaSet,
    path: &Path,
) -> Result<ExportReport, ExportError> {
    if run.header.task != crate::prompt::TaskKind::Rating {
        return Err(ExportError::NotARatingRun);
    }
    if run.records.is_empty() {
        return Err(ExportError::EmptyRun);
    }
    let mut written = 0;
    let mut skipped = 0;
    let mut out = Vec::new();
    for record in &run.records {
        let verdict = match &record.outcome {
            UnitOutcome::Verdict(v) => v,
            UnitOutcome::Failure { .. } => {
                skipped += 1;
                continue;
            }
        };
        let sample = dataset
            .sample_by_id(&record.sample_id)
            .ok_or_else(|| ExportError::UnknownSample(record.sample_id.clone()))?;
        let pair = schemas
            .get(&record.metric)
            .ok_or_else(|| ExportError::MissingSchema(record.metric.clone()))?;
        let instruction = render_prompt(
            &pair.peer,
            sample,
            Role::Peer,
            None,
            crate::prompt::CommunicationStrategy::ScoreOnly,
        )?;
        let Some(final_score) = verdict.ac.final_score() else {
            skipped += 1;
            continue;
        };
        let tuning = TuningRecord {
            sample_id: record.sample_id.clone(),
            metric: record.metric.clone(),
            instruction,
            output: format!(
                "Analysis: {}\nRating: {}",
                verdict.ac.final_comment,
                final_score.to_decimal_lossy(4)
            ),
        };
        out.extend_from_slice(serde_json::to_string(&tuning).expect("record serializes").as_bytes());
        out.push(b'\n');
        written += 1;
    }
    if written == 0 {
        return Err(ExportError::EmptyRun);
    }
    fs::write(path, out)?;
    Ok(ExportReport { written, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating_header() -> String {
        serde_json::json!({
            "format": DATASET_FORMAT,
            "version": DATASET_VERSION,
            "name": "mini",
            "kind": "nlg_rating",
            "metrics": ["Engagingness"],
            "scale": {"min": "1", "max": "3", "granularity": "integer"},
        })
        .to_string()
    }

    fn write_dataset(lines: &[String]) -> tempfile::NamedTempFile {
        let file = tempfile::NamedTempFile::new().unwrap();
        fs::write(file.path(), lines.join("\n")).unwrap();
        file
    }

    fn sample_line(id: &str, score: &str) -> String {
        serde_json::json!({
            "id": id,
            "slots": {"Conversation": "hi", "Contextual Fact": "f", "Generated Response": "r"},
            "human_scores": {"Engagingness": score},
        })
        .to_string()
    }

    #[test]
    fn loads_valid_rating_dataset_in_order() {
        let file = write_dataset(&[
            rating_header(),
            sample_line("s1", "2.33"),
            sample_line("s2", "3"),
        ]);
        let dataset = load_dataset(file.path(), DatasetKind::NlgRating).unwrap();
        assert_eq!(dataset.samples.len(), 2);
        assert_eq!(dataset.samples[0].id, "s1");
        assert_eq!(
            dataset.samples[0].human_scores["Engagingness"],
            Rational::new(233, 100)
        );
        assert_eq!(dataset.samples[1].scale, Some(ScoreScale::integer(1, 3)));
        assert_eq!(dataset.metrics, vec!["Engagingness"]);
    }

    #[test]
    fn duplicate_id_is_reported_with_line() {
        let file = write_dataset(&[
            rating_header(),
            sample_line("s1", "2"),
            sample_line("s1", "3"),
        ]);
        match load_dataset(file.path(), DatasetKind::NlgRating).unwrap_err() {
            DatasetError::DuplicateId { line, id } => {
                assert_eq!(line, 3);
                assert_eq!(id, "s1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_human_score_is_a_schema_violation() {
        let bad = serde_json::json!({"id": "s1", "slots": {}}).to_string();
        let file = write_dataset(&[rating_header(), bad]);
        match load_dataset(file.path(), DatasetKind::NlgRating).unwrap_err() {
            DatasetError::SchemaViolation { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "human_scores");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rating_header_without_scale_is_missing_scale() {
        let header = serde_json::json!({
            "format": DATASET_FORMAT, "version": DATASET_VERSION,
            "name": "x", "kind": "nlg_rating", "metrics": ["M"],
        })
        .to_string();
        let file = write_dataset(&[header, sample_line("s1", "1")]);
        assert!(matches!(
            load_dataset(file.path(), DatasetKind::NlgRating).unwrap_err(),
            DatasetError::MissingScale
        ));
    }

    #[test]
    fn reasoning_sample_without_gold_answer_is_rejected() {
        let header = serde_json::json!({
            "format": DATASET_FORMAT, "version": DATASET_VERSION,
            "name": "aqua-mini", "kind": "reasoning",
            "answer_space": {"kind": "labels", "labels": ["A", "B", "C", "D", "E"]},
        })
        .to_string();
        let good = serde_json::json!({
            "id": "q1", "slots": {"question": "?", "options": "A) 1 B) 2"}, "gold_answer": "C",
        })
        .to_string();
        let bad = serde_json::json!({"id": "q2", "slots": {"question": "?"}}).to_string();

        let file = write_dataset(&[header.clone(), good.clone(), bad]);
        match load_dataset(file.path(), DatasetKind::Reasoning).unwrap_err() {
            DatasetError::SchemaViolation { line, field, .. } => {
                assert_eq!((line, field.as_str()), (3, "gold_answer"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let file = write_dataset(&[header, good]);
        let dataset = load_dataset(file.path(), DatasetKind::Reasoning).unwrap();
        assert_eq!(dataset.metrics, vec![REASONING_METRIC]);
        assert_eq!(dataset.samples[0].gold_answer, Some(Answer::Label('C')));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let file = write_dataset(&[rating_header(), sample_line("s1", "2")]);
        assert!(matches!(
            load_dataset(file.path(), DatasetKind::Reasoning).unwrap_err(),
            DatasetError::SchemaViolation { line: 1, .. }
        ));
    }

    #[test]
    fn unknown_version_is_rejected_loudly() {
        let header = rating_header().replace("\"version\":1", "\"version\":9");
        let file = write_dataset(&[header, sample_line("s1", "2")]);
        assert!(matches!(
            load_dataset(file.path(), DatasetKind::NlgRating).unwrap_err(),
            DatasetError::SchemaViolation { line: 1, field, .. } if field == "version"
        ));
    }

    #[test]
    fn save_load_round_trips() {
        let file = write_dataset(&[
            rating_header(),
            sample_line("s1", "2.33"),
            sample_line("s2", "1"),
        ]);
        let dataset = load_dataset(file.path(), DatasetKind::NlgRating).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_dataset(&dataset, out.path()).unwrap();
        let reloaded = load_dataset(out.path(), DatasetKind::NlgRating).unwrap();
        assert_eq!(dataset, reloaded);
    }

    #[test]
    fn stratified_subsample_is_seed_deterministic_and_spread() {
        let mut lines = vec![rating_header()];
        for i in 0..60 {
            let score = match i % 3 {
                0 => "1",
                1 => "2",
                _ => "3",
            };
            lines.push(sample_line(&format!("s{i}"), score));
        }
        let file = write_dataset(&lines);
        let dataset = load_dataset(file.path(), DatasetKind::NlgRating).unwrap();
        let a = stratified_subsample(&dataset, 12, 7);
        let b = stratified_subsample(&dataset, 12, 7);
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 12);
        let ones = a
            .samples
            .iter()
            .filter(|s| s.human_scores["Engagingness"] == Rational::ONE)
            .count();
        assert!(ones >= 3, "low-score bin underrepresented: {ones}");
        let c = stratified_subsample(&dataset, 12, 8);
        assert_ne!(a.samples, c.samples);
    }
}
