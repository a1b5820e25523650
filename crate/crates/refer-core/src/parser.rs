//! Turns raw model completions into structured reviews.
//!
//! Rating completions follow the evaluation form: an `Analysis:` section and
//! a numeric rating introduced by `Rating:` (or the metric name) on its own
//! line. Reasoning completions end with an `Answer:` line carrying a label or
//! a number. Models deviate from the form in predictable ways — restated
//! rating lines, markdown emphasis, parenthesized labels, comma-grouped
//! numerals — and the grammar here absorbs those without ever silently
//! clamping an out-of-range score.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::score::{Granularity, Rational, ScoreScale};

/// A parsed rating-task review: the free-text analysis and the score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    pub analysis: String,
    pub score: Rational,
    pub raw: String,
}

/// A parsed reasoning-task response: the analysis and the normalized answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub analysis: String,
    pub answer: Answer,
    pub raw: String,
}

/// A normalized final answer: a single option letter or an exact number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Label(char),
    Number(Rational),
}

impl std::fmt::Display for Answer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Answer::Label(c) => write!(f, "{c}"),
            Answer::Number(n) => write!(f, "{n}"),
        }
    }
}

/// What counts as a valid answer for a reasoning dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerSpace {
    Labels { labels: BTreeSet<char> },
    Number,
}

impl AnswerSpace {
    pub fn labels_through(last: char) -> Self {
        AnswerSpace::Labels {
            labels: ('A'..=last).collect(),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            AnswerSpace::Labels { labels } => !labels.is_empty(),
            AnswerSpace::Number => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no rating line found for metric {metric:?}")]
    NoRatingFound { metric: String },
    #[error("rating {found} outside scale [{min}, {max}]")]
    OutOfScale {
        found: Rational,
        min: Rational,
        max: Rational,
    },
    #[error("no answer found after an Answer marker")]
    NoAnswerFound,
    #[error("label {label} outside the answer space")]
    LabelOutsideSpace { label: char },
}

static ANALYSIS_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[^A-Za-z0-9\n]*analysis\s*[*_]*\s*:[*_]*").unwrap());
static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?|[+-]?\d+(?:\.\d+)?").unwrap());
static BARE_NUMBER_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*[+-]?\d+(?:\.\d+)?\.?\s*$").unwrap());
static ANSWER_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\banswer\b").unwrap());
static LABEL_TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?:^|[\s(\[*"'`])([A-Fa-f])(?:[)\].,!?:;*"'`]|\s|$)"#).unwrap()
});

/// Matches a line that introduces a value with `<marker>:`, tolerating
/// leading list bullets or markdown emphasis.
fn marker_line(marker: &str) -> Regex {
    let escaped = regex::escape(marker);
    Regex::new(&format!(r"(?i)^[^A-Za-z0-9\n]*{escaped}\s*[*_]*\s*:")).unwrap()
}

/// Extracts the analysis and numeric rating from a rating-task completion.
///
/// Candidate rating lines are searched in priority order: lines introduced by
/// `Rating:`, then by `<metric_name>:`, then bare-number lines after the
/// analysis. Within a class the last line wins (models restate). The first
/// number on the winning line is the score; integer scales round half away
/// from zero before the range check. Out-of-range values are an error, never
/// clamped.
pub fn parse_rating(
    text: &str,
    scale: &ScoreScale,
    metric_name: &str,
) -> Result<ReviewOutcome, ParseError> {
    let lines = line_spans(text);
    let rating_re = marker_line("Rating");
    let metric_re = marker_line(metric_name);

    let analysis_start = ANALYSIS_MARKER.find(text).map(|m| m.end());

    let pick = |matches_line: &dyn Fn(&str) -> bool, from: usize| -> Option<(usize, Rational)> {
        lines
            .iter()
            .filter(|(start, _, line)| *start >= from && matches_line(line))
            .filter_map(|(start, _, line)| {
                NUMBER
                    .find(line)
                    .and_then(|m| Rational::parse(&m.as_str().replace(',', "")).ok())
                    .map(|score| (*start, score))
            })
            .last()
    };

    let chosen = pick(&|l| rating_re.is_match(l), 0)
        .or_else(|| pick(&|l| metric_re.is_match(l), 0))
        .or_else(|| {
            // Bare-number fallback only applies after the analysis started;
            // a leading stray numeral is not a rating.
            analysis_start.and_then(|from| pick(&|l| BARE_NUMBER_LINE.is_match(l), from))
        })
        .ok_or_else(|| ParseError::NoRatingFound {
            metric: metric_name.to_string(),
        })?;
    let (line_start, mut score) = chosen;

    if scale.granularity == Granularity::Integer && !score.is_integer() {
        score = Rational::from_integer(score.round_half_away_from_zero());
    }
    if !scale.contains(score) {
        return Err(ParseError::OutOfScale {
            found: score,
            min: scale.min,
            max: scale.max,
        });
    }

    let analysis = match analysis_start {
        Some(start) if start <= line_start => text[start..line_start].trim().to_string(),
        Some(start) => text[start..].trim().to_string(),
        None => String::new(),
    };

    Ok(ReviewOutcome {
        analysis,
        score,
        raw: text.to_string(),
    })
}

/// Extracts the analysis and final answer from a reasoning-task completion.
///
/// The answer region starts at the first `Answer` marker. Label spaces take
/// the last standalone `A`–`F` token in the region (parentheses and
/// punctuation stripped, lowercased letters accepted only when bracketed);
/// number spaces take the last numeral with thousands separators removed and
/// anything trailing it (units, punctuation) ignored.
pub fn parse_answer(text: &str, space: &AnswerSpace) -> Result<AnswerOutcome, ParseError> {
    let marker = ANSWER_MARKER.find(text).ok_or(ParseError::NoAnswerFound)?;
    let region = &text[marker.end()..];

    let answer = match space {
        AnswerSpace::Labels { labels } => {
            let mut last: Option<char> = None;
            for cap in LABEL_TOKEN.captures_iter(region) {
                let m = cap.get(1).unwrap();
                let ch = m.as_str().chars().next().unwrap();
                if ch.is_ascii_lowercase() && !bracketed(region, m.start(), m.end()) {
                    // "a"/"b" as prose words; only (b) or [b] read as labels.
                    continue;
                }
                last = Some(ch.to_ascii_uppercase());
            }
            let label = last.ok_or(ParseError::NoAnswerFound)?;
            if !labels.contains(&label) {
                return Err(ParseError::LabelOutsideSpace { label });
            }
            Answer::Label(label)
        }
        AnswerSpace::Number => {
            let m = NUMBER
                .find_iter(region)
                .last()
                .ok_or(ParseError::NoAnswerFound)?;
            let value = Rational::parse(&m.as_str().replace(',', ""))
                .map_err(|_| ParseError::NoAnswerFound)?;
            Answer::Number(value)
        }
    };

    let analysis = match ANALYSIS_MARKER.find(text).map(|m| m.end()) {
        Some(start) if start <= marker.start() => {
            let answer_line_start = text[..marker.start()]
                .rfind('\n')
                .map(|p| p + 1)
                .unwrap_or(0);
            let end = answer_line_start.max(start);
            text[start..end].trim().to_string()
        }
        Some(start) => text[start..].trim().to_string(),
        None => String::new(),
    };

    Ok(AnswerOutcome {
        analysis,
        answer,
        raw: text.to_string(),
    })
}

fn bracketed(region: &str, start: usize, end: usize) -> bool {
    let before = region[..start].chars().next_back();
    let after = region[end..].chars().next();
    matches!(before, Some('(') | Some('[')) || matches!(after, Some(')') | Some(']'))
}

/// (start offset, end offset, line text) for each line.
fn line_spans(text: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        out.push((start, start + trimmed.len(), trimmed));
        start += line.len();
    }
    out
}

/// One peer's parsed contribution, in configured peer order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerReview {
    /// Name of the model handle that produced the review.
    pub peer: String,
    #[serde(flatten)]
    pub content: PeerContent,
}

/// Rating tasks carry a scored review; reasoning tasks carry an answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PeerContent {
    Rating(ReviewOutcome),
    Answer(AnswerOutcome),
}

impl PeerContent {
    pub fn analysis(&self) -> &str {
        match self {
            PeerContent::Rating(r) => &r.analysis,
            PeerContent::Answer(a) => &a.analysis,
        }
    }

    pub fn raw(&self) -> &str {
        match self {
            PeerContent::Rating(r) => &r.raw,
            PeerContent::Answer(a) => &a.raw,
        }
    }

    pub fn score(&self) -> Option<Rational> {
        match self {
            PeerContent::Rating(r) => Some(r.score),
            PeerContent::Answer(_) => None,
        }
    }

    pub fn answer(&self) -> Option<&Answer> {
        match self {
            PeerContent::Rating(_) => None,
            PeerContent::Answer(a) => Some(&a.answer),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scale_1_3() -> ScoreScale {
        ScoreScale::integer(1, 3)
    }

    #[test]
    fn parses_well_formed_review() {
        let out = parse_rating(
            "Analysis: concise and on-topic.\nRating: 3",
            &scale_1_3(),
            "Engagingness",
        )
        .unwrap();
        assert_eq!(out.analysis, "concise and on-topic.");
        assert_eq!(out.score, Rational::from_integer(3));
    }

    #[test]
    fn out_of_scale_is_an_error_not_a_clamp() {
        let err = parse_rating("Analysis: weak.\nRating: 4", &scale_1_3(), "Engagingness")
            .unwrap_err();
        assert!(matches!(err, ParseError::OutOfScale { .. }));
    }

    #[test]
    fn metric_named_line_is_second_priority() {
        let scale = ScoreScale::integer(0, 100);
        let out = parse_rating(
            "Analysis: matches the image closely.\nCaption_Quality: 85",
            &scale,
            "Caption_Quality",
        )
        .unwrap();
        assert_eq!(out.score, Rational::from_integer(85));
        assert_eq!(out.analysis, "matches the image closely.");
    }

    #[test]
    fn last_rating_line_wins() {
        let out = parse_rating(
            "Analysis: initially I thought 2.\nRating: 2\nOn reflection it is stronger.\nRating: 3",
            &scale_1_3(),
            "Engagingness",
        )
        .unwrap();
        assert_eq!(out.score, Rational::from_integer(3));
        assert_eq!(
            out.analysis,
            "initially I thought 2.\nRating: 2\nOn reflection it is stronger."
        );
    }

    #[test]
    fn decimal_on_integer_scale_rounds_half_away_from_zero() {
        let out = parse_rating("Analysis: middling.\nRating: 2.5", &scale_1_3(), "m").unwrap();
        assert_eq!(out.score, Rational::from_integer(3));
    }

    #[test]
    fn continuous_scale_keeps_decimals_exact() {
        let scale = ScoreScale::new(
            Rational::ZERO,
            Rational::from_integer(5),
            Granularity::Continuous,
        )
        .unwrap();
        let out = parse_rating("Analysis: decent.\nRating: 4.5", &scale, "Image_Quality").unwrap();
        assert_eq!(out.score, Rational::new(9, 2));
    }

    #[test]
    fn bare_number_line_only_after_analysis() {
        let out =
            parse_rating("Analysis: fine enough.\n2", &scale_1_3(), "Naturalness").unwrap();
        assert_eq!(out.score, Rational::from_integer(2));
        // Without any analysis marker the bare number is not a rating.
        let err = parse_rating("2", &scale_1_3(), "Naturalness").unwrap_err();
        assert!(matches!(err, ParseError::NoRatingFound { .. }));
    }

    #[test]
    fn missing_rating_reports_metric() {
        let err = parse_rating("Analysis: no verdict given.", &scale_1_3(), "Coherence")
            .unwrap_err();
        assert_eq!(
            err,
            ParseError::NoRatingFound {
                metric: "Coherence".into()
            }
        );
    }

    #[test]
    fn markdown_wrapped_markers_parse() {
        let out = parse_rating(
            "**Analysis:** solid reply.\n**Rating:** 2",
            &scale_1_3(),
            "m",
        )
        .unwrap();
        assert_eq!(out.score, Rational::from_integer(2));
        assert_eq!(out.analysis, "solid reply.");
    }

    #[test]
    fn parses_label_answers() {
        let space = AnswerSpace::labels_through('E');
        let out = parse_answer("Analysis: algebra steps.\nAnswer: C", &space).unwrap();
        assert_eq!(out.answer, Answer::Label('C'));
        assert_eq!(out.analysis, "algebra steps.");
    }

    #[test]
    fn label_normalization_strips_parens_and_prose() {
        let space = AnswerSpace::labels_through('E');
        let out = parse_answer("Analysis: ...\nAnswer: The answer is (B).", &space).unwrap();
        assert_eq!(out.answer, Answer::Label('B'));
        let out = parse_answer("Answer: (c)", &space).unwrap();
        assert_eq!(out.answer, Answer::Label('C'));
    }

    #[test]
    fn lowercase_prose_letters_are_not_labels() {
        let space = AnswerSpace::labels_through('E');
        // "a" is an article here, not an option; the real label follows.
        let out = parse_answer("Answer: it is a tie, but D fits best. D", &space).unwrap();
        assert_eq!(out.answer, Answer::Label('D'));
    }

    #[test]
    fn label_outside_space_is_rejected() {
        let space = AnswerSpace::labels_through('E');
        let err = parse_answer("Answer: F", &space).unwrap_err();
        assert_eq!(err, ParseError::LabelOutsideSpace { label: 'F' });
    }

    #[test]
    fn numeric_answers_strip_separators_and_units() {
        let out = parse_answer("Answer: 1,234", &AnswerSpace::Number).unwrap();
        assert_eq!(out.answer, Answer::Number(Rational::from_integer(1234)));
        let out = parse_answer("Answer: 72 dollars", &AnswerSpace::Number).unwrap();
        assert_eq!(out.answer, Answer::Number(Rational::from_integer(72)));
        let out = parse_answer(
            "Analysis: 5 workers times 3 days.\nAnswer: The total is 15.",
            &AnswerSpace::Number,
        )
        .unwrap();
        assert_eq!(out.answer, Answer::Number(Rational::from_integer(15)));
        assert_eq!(out.analysis, "5 workers times 3 days.");
    }

    #[test]
    fn no_answer_marker_is_an_error() {
        let err = parse_answer("I believe it is C.", &AnswerSpace::labels_through('E'))
            .unwrap_err();
        assert_eq!(err, ParseError::NoAnswerFound);
        let err = parse_answer("Answer: none given", &AnswerSpace::Number).unwrap_err();
        assert_eq!(err, ParseError::NoAnswerFound);
    }

    #[test]
    fn parsing_raw_is_idempotent() {
        let text = "Analysis: detailed look.\nRating: 2";
        let first = parse_rating(text, &scale_1_3(), "m").unwrap();
        let second = parse_rating(&first.raw, &scale_1_3(), "m").unwrap();
        assert_eq!(first, second);
    }
}
