//! The two-phase evaluation protocol.
//!
//! Phase 1 sends each configured peer one independent single-response
//! request over the peer prompt. Phase 2 renders the area-chair prompt with
//! the surviving reviews under the communication strategy and asks the area
//! chair for n responses (n = 1 in the lite variant); the final score is the
//! exact mean of the parsed area-chair scores, and reasoning runs take the
//! majority answer with ties broken by first occurrence.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetKind, Sample, REASONING_METRIC};
use crate::gateway::{
    CacheMode, CallParams, ChatRequest, CostLedger, Gateway, GatewayError, ImageAttachment,
    ImageLocator, LedgerRow, ModelHandle,
};
use crate::parser::{
    parse_answer, parse_rating, Answer, AnswerOutcome, AnswerSpace, ParseError, PeerContent,
    PeerReview, ReviewOutcome,
};
use crate::prompt::{
    render_prompt, CommunicationStrategy, PromptError, PromptSchema, Role, SchemaSet, TaskKind,
};
use crate::score::Rational;

pub const RECORDS_FORMAT: &str = "refer.run.records";
pub const SUMMARY_FORMAT: &str = "refer.run.summary";
pub const RUN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Turbo,
    Lite,
}

/// Per-role sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub peer: CallParams,
    pub area_chair: CallParams,
    pub auto_prompt: CallParams,
}

impl HyperParams {
    /// Defaults by task: area-chair rating calls cap output at 256 tokens;
    /// peer caps are 128 (text rating), 192 (multimodal rating), 256
    /// (reasoning); reasoning area-chair calls are uncapped.
    pub fn defaults(task: TaskKind, dataset_kind: DatasetKind) -> Self {
        let peer_max = match (task, dataset_kind) {
            (TaskKind::Reasoning, _) => Some(256),
            (TaskKind::Rating, DatasetKind::MultimodalRating) => Some(192),
            (TaskKind::Rating, _) => Some(128),
        };
        let ac_max = match task {
            TaskKind::Rating => Some(256),
            TaskKind::Reasoning => None,
        };
        let params = |max_tokens| CallParams {
            temperature: 1.0,
            top_p: 1.0,
            max_tokens,
        };
        HyperParams {
            peer: params(peer_max),
            area_chair: params(ac_max),
            auto_prompt: params(Some(256)),
        }
    }
}

/// Everything one run needs besides the dataset and the gateway.
#[derive(Clone)]
pub struct RunConfig {
    /// Ledger/report tag for this method, e.g. "refer-lite".
    pub method: String,
    pub peers: Vec<ModelHandle>,
    pub area_chair: ModelHandle,
    pub variant: Variant,
    /// Area-chair responses per sample; forced to 1 by the lite variant.
    pub n: u32,
    pub strategy: CommunicationStrategy,
    pub min_peers: usize,
    pub schemas: SchemaSet,
    pub task_kind: TaskKind,
    pub answer_space: Option<AnswerSpace>,
    pub hyper: HyperParams,
    pub seed_tag: String,
    pub fail_fast: bool,
}

impl RunConfig {
    pub fn k(&self) -> usize {
        self.peers.len()
    }

    /// Default drop-tolerance: all peers but one must survive.
    pub fn default_min_peers(k: usize) -> usize {
        k.saturating_sub(1).max(1)
    }

    pub fn ac_n(&self) -> u32 {
        match self.variant {
            Variant::Turbo => self.n,
            Variant::Lite => 1,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.peers.is_empty() {
            return Err("at least one peer is required".into());
        }
        if self.n < 1 {
            return Err("n must be >= 1".into());
        }
        if self.variant == Variant::Lite && self.n != 1 {
            return Err(format!("lite variant requires n=1, got n={}", self.n));
        }
        if self.min_peers < 1 || self.min_peers > self.k() {
            return Err(format!(
                "min_peers must be in [1, {}], got {}",
                self.k(),
                self.min_peers
            ));
        }
        if self.task_kind == TaskKind::Reasoning && self.answer_space.is_none() {
            return Err("reasoning runs need an answer space".into());
        }
        Ok(())
    }
}

/// The area chair's parsed responses and the aggregate they yield.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AcDecision {
    Rating {
        responses: Vec<ReviewOutcome>,
        final_score: Rational,
    },
    Answer {
        responses: Vec<AnswerOutcome>,
        final_answer: Answer,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ACVerdict {
    #[serde(flatten)]
    pub decision: AcDecision,
    /// The designated comment: the first response's analysis. All analyses
    /// stay available in `decision`.
    pub final_comment: String,
    /// True when fewer than K peer reviews reached the area chair.
    pub degraded: bool,
}

impl ACVerdict {
    pub fn final_score(&self) -> Option<Rational> {
        match &self.decision {
            AcDecision::Rating { final_score, .. } => Some(*final_score),
            AcDecision::Answer { .. } => None,
        }
    }

    pub fn final_answer(&self) -> Option<&Answer> {
        match &self.decision {
            AcDecision::Rating { .. } => None,
            AcDecision::Answer { final_answer, .. } => Some(final_answer),
        }
    }

    /// Responses that survived parsing.
    pub fn n_effective(&self) -> usize {
        match &self.decision {
            AcDecision::Rating { responses, .. } => responses.len(),
            AcDecision::Answer { responses, .. } => responses.len(),
        }
    }
}

/// Per-stage wall-clock durations for one (sample, metric) unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub peers_ms: u64,
    pub ac_ms: u64,
    pub total_ms: u64,
}

/// One fully-evaluated (sample, metric) unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub sample_id: String,
    pub metric: String,
    pub peer_reviews: Vec<PeerReview>,
    pub ac: ACVerdict,
    pub timing: Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Render,
    Image,
    Peers,
    AreaChair,
    Parse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitFailure {
    pub stage: Stage,
    pub kind: String,
    pub message: String,
}

/// A verdict or an embedded per-unit failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UnitOutcome {
    #[serde(rename = "verdict")]
    Verdict(VerdictBody),
    #[serde(rename = "error")]
    Failure(UnitFailure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictBody {
    pub peer_reviews: Vec<PeerReview>,
    pub ac: ACVerdict,
}

/// One line of the persisted records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub sample_id: String,
    pub metric: String,
    #[serde(flatten)]
    pub outcome: UnitOutcome,
    pub timing: Timing,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("only {usable} usable peer review(s), need {min}")]
    InsufficientPeers { usable: usize, min: usize },
    #[error("area chair failed: {0}")]
    ACFailure(GatewayError),
    #[error("unparseable completion after retry: {0}")]
    ParseFailure(ParseError),
    #[error("render failed: {0}")]
    Render(#[from] PromptError),
    #[error("image attachment failed: {0}")]
    Image(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl EvalError {
    fn unit_failure(&self) -> UnitFailure {
        let (stage, kind) = match self {
            EvalError::InsufficientPeers { .. } => (Stage::Peers, "insufficient_peers"),
            EvalError::ACFailure(_) => (Stage::AreaChair, "backend_exhausted"),
            EvalError::ParseFailure(_) => (Stage::Parse, "parse_failure"),
            EvalError::Render(_) => (Stage::Render, "render"),
            EvalError::Image(_) => (Stage::Image, "image"),
            EvalError::InvalidConfig(_) => (Stage::Render, "invalid_config"),
        };
        UnitFailure {
            stage,
            kind: kind.to_string(),
            message: self.to_string(),
        }
    }
}

/// Shared counters surfaced in run diagnostics.
#[derive(Debug, Default)]
pub struct EvalStats {
    pub parse_retries: AtomicU64,
    pub dropped_peers: AtomicU64,
}

fn attachment(sample: &Sample) -> Result<Option<ImageAttachment>, EvalError> {
    match &sample.image {
        None => Ok(None),
        Some(ImageLocator::Url(url)) => Ok(Some(ImageAttachment::from_url(url.clone()))),
        Some(ImageLocator::Path(path)) => ImageAttachment::from_path(path.clone())
            .map(Some)
            .map_err(|e| EvalError::Image(format!("{}: {e}", path.display()))),
    }
}

fn parse_content(
    text: &str,
    schema: &PromptSchema,
    answer_space: Option<&AnswerSpace>,
) -> Result<PeerContent, ParseError> {
    match schema.task_kind {
        TaskKind::Rating => {
            let scale = schema.scale.as_ref().expect("rating schema has a scale");
            parse_rating(text, scale, &schema.metric_name).map(PeerContent::Rating)
        }
        TaskKind::Reasoning => {
            let space = answer_space.expect("reasoning run has an answer space");
            parse_answer(text, space).map(PeerContent::Answer)
        }
    }
}

/// Majority answer, ties broken by the answer that appeared first.
fn majority_answer(answers: &[Answer]) -> Answer {
    let mut tally: Vec<(&Answer, usize)> = Vec::new();
    for answer in answers {
        match tally.iter_mut().find(|(a, _)| *a == answer) {
            Some(entry) => entry.1 += 1,
            None => tally.push((answer, 1)),
        }
    }
    let mut best = &tally[0];
    for entry in &tally[1..] {
        if entry.1 > best.1 {
            best = entry;
        }
    }
    best.0.clone()
}

enum PeerError {
    Backend(GatewayError),
    Parse(ParseError),
}

/// Invokes one peer (n = 1) and parses its completion, re-sampling once on a
/// parse failure. The re-sample bypasses the cache read so the store ends up
/// holding the accepted completion.
fn peer_review(
    gateway: &Gateway,
    ledger: &CostLedger,
    stats: &EvalStats,
    cfg: &RunConfig,
    handle: &ModelHandle,
    request: &ChatRequest,
    schema: &PromptSchema,
) -> Result<PeerContent, PeerError> {
    let response = gateway.invoke(request, handle).map_err(PeerError::Backend)?;
    if !response.from_cache {
        ledger.record(&cfg.method, handle, &response);
    }
    match parse_content(&response.completions[0], schema, cfg.answer_space.as_ref()) {
        Ok(content) => Ok(content),
        Err(_) => {
            stats.parse_retries.fetch_add(1, Ordering::SeqCst);
            let fresh = gateway
                .invoke_with(request, handle, gateway.retry_policy(), CacheMode::WriteOnly)
                .map_err(PeerError::Backend)?;
            if !fresh.from_cache {
                ledger.record(&cfg.method, handle, &fresh);
            }
            parse_content(&fresh.completions[0], schema, cfg.answer_space.as_ref())
                .map_err(PeerError::Parse)
        }
    }
}

/// Runs the full two-phase protocol for one (sample, metric) unit.
///
/// Exactly one n=1 request goes to every configured peer; peers whose call
/// or parse fails are dropped as long as `min_peers` reviews survive (the
/// verdict is then marked degraded). The area chair gets one request with
/// n = cfg.n (turbo) or 1 (lite); completions that fail to parse are
/// dropped, and only if all of them fail is the call re-sampled once before
/// failing.
pub fn evaluate_sample(
    sample: &Sample,
    metric: &str,
    cfg: &RunConfig,
    gateway: &Gateway,
    ledger: &CostLedger,
    stats: &EvalStats,
) -> Result<SampleVerdict, EvalError> {
    let pair = cfg
        .schemas
        .get(metric)
        .ok_or_else(|| EvalError::InvalidConfig(format!("no schema for metric {metric:?}")))?;
    let clock = gateway.clock().clone();
    let started = clock.monotonic();

    let image = attachment(sample)?;
    let peer_prompt = render_prompt(&pair.peer, sample, Role::Peer, None, cfg.strategy)?;

    let mut reviews: Vec<PeerReview> = Vec::with_capacity(cfg.k());
    for handle in &cfg.peers {
        let mut request = cfg.hyper.peer.request(peer_prompt.clone(), 1);
        request.image = image.clone();
        match peer_review(gateway, ledger, stats, cfg, handle, &request, &pair.peer) {
            Ok(content) => reviews.push(PeerReview {
                peer: handle.name.clone(),
                content,
            }),
            Err(e) => {
                stats.dropped_peers.fetch_add(1, Ordering::SeqCst);
                match e {
                    PeerError::Backend(err) => {
                        log::warn!("peer {} dropped on sample {}: {err}", handle.name, sample.id)
                    }
                    PeerError::Parse(err) => {
                        log::warn!("peer {} dropped on sample {}: {err}", handle.name, sample.id)
                    }
                }
            }
        }
    }
    if reviews.len() < cfg.min_peers {
        return Err(EvalError::InsufficientPeers {
            usable: reviews.len(),
            min: cfg.min_peers,
        });
    }
    let degraded = reviews.len() < cfg.k();
    let peers_done = clock.monotonic();

    let ac_prompt = render_prompt(
        &pair.area_chair,
        sample,
        Role::AreaChair,
        Some(&reviews),
        cfg.strategy,
    )?;
    let mut ac_request = cfg.hyper.area_chair.request(ac_prompt, cfg.ac_n());
    ac_request.image = image;

    let mut response = gateway
        .invoke(&ac_request, &cfg.area_chair)
        .map_err(EvalError::ACFailure)?;
    if !response.from_cache {
        ledger.record(&cfg.method, &cfg.area_chair, &response);
    }

    let parse_all = |completions: &[String]| -> (Vec<PeerContent>, Option<ParseError>) {
        let mut parsed = Vec::new();
        let mut last_err = None;
        for text in completions {
            match parse_content(text, &pair.area_chair, cfg.answer_space.as_ref()) {
                Ok(content) => parsed.push(content),
                Err(e) => last_err = Some(e),
            }
        }
        (parsed, last_err)
    };

    let (mut parsed, mut last_err) = parse_all(&response.completions);
    if parsed.is_empty() {
        stats.parse_retries.fetch_add(1, Ordering::SeqCst);
        response = gateway
            .invoke_with(&ac_request, &cfg.area_chair, gateway.retry_policy(), CacheMode::WriteOnly)
            .map_err(EvalError::ACFailure)?;
        if !response.from_cache {
            ledger.record(&cfg.method, &cfg.area_chair, &response);
        }
        (parsed, last_err) = parse_all(&response.completions);
        if parsed.is_empty() {
            return Err(EvalError::ParseFailure(last_err.expect("empty parse has an error")));
        }
    }

    let final_comment = parsed[0].analysis().to_string();
    let decision = match cfg.task_kind {
        TaskKind::Rating => {
            let responses: Vec<ReviewOutcome> = parsed
                .into_iter()
                .map(|c| match c {
                    PeerContent::Rating(r) => r,
                    PeerContent::Answer(_) => unreachable!("rating run parsed an answer"),
                })
                .collect();
            let scores: Vec<Rational> = responses.iter().map(|r| r.score).collect();
            AcDecision::Rating {
                final_score: Rational::mean(&scores).expect("non-empty responses"),
                responses,
            }
        }
        TaskKind::Reasoning => {
            let responses: Vec<AnswerOutcome> = parsed
                .into_iter()
                .map(|c| match c {
                    PeerContent::Answer(a) => a,
                    PeerContent::Rating(_) => unreachable!("reasoning run parsed a rating"),
                })
                .collect();
            let answers: Vec<Answer> = responses.iter().map(|r| r.answer.clone()).collect();
            AcDecision::Answer {
                final_answer: majority_answer(&answers),
                responses,
            }
        }
    };

    let done = clock.monotonic();
    Ok(SampleVerdict {
        sample_id: sample.id.clone(),
        metric: metric.to_string(),
        peer_reviews: reviews,
        ac: ACVerdict {
            decision,
            final_comment,
            degraded,
        },
        timing: Timing {
            peers_ms: peers_done.saturating_sub(started).as_millis() as u64,
            ac_ms: done.saturating_sub(peers_done).as_millis() as u64,
            total_ms: done.saturating_sub(started).as_millis() as u64,
        },
    })
}

// ---------------------------------------------------------------------------
// Dataset runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub method: String,
    pub variant: Variant,
    pub task: TaskKind,
    pub dataset: String,
    pub metrics: Vec<String>,
    pub peers: Vec<String>,
    pub area_chair: String,
    pub k: usize,
    pub n: u32,
    pub min_peers: usize,
    pub strategy: CommunicationStrategy,
    pub seed_tag: String,
    pub started_unix_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTimingStats {
    pub mean_ms: u64,
    pub p50_ms: u64,
    pub p90_ms: u64,
    pub p99_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTiming {
    pub total_ms: u64,
    pub per_unit: UnitTimingStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub failed_units: u64,
    pub parse_retries: u64,
    pub dropped_peers: u64,
}

/// Full transcript of one dataset run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RunHeader,
    pub records: Vec<VerdictRecord>,
    pub ledger_rows: Vec<LedgerRow>,
    pub total_cost: Rational,
    pub timing: RunTiming,
    pub diagnostics: Diagnostics,
    /// Resolved configuration snapshot, embedded in the summary document.
    pub config_snapshot: Option<serde_json::Value>,
}

impl RunRecord {
    pub fn from_parts(header: RunHeader, records: Vec<VerdictRecord>) -> Self {
        RunRecord {
            header,
            records,
            ledger_rows: Vec::new(),
            total_cost: Rational::ZERO,
            timing: RunTiming::default(),
            diagnostics: Diagnostics::default(),
            config_snapshot: None,
        }
    }

    pub fn verdicts(&self) -> impl Iterator<Item = (&VerdictRecord, &VerdictBody)> {
        self.records.iter().filter_map(|r| match &r.outcome {
            UnitOutcome::Verdict(body) => Some((r, body)),
            UnitOutcome::Failure(_) => None,
        })
    }

    pub fn summary_document(&self) -> serde_json::Value {
        serde_json::json!({
            "format": SUMMARY_FORMAT,
            "version": RUN_FORMAT_VERSION,
            "run": self.header,
            "config": self.config_snapshot,
            "ledger": {
                "rows": self.ledger_rows,
                "total_cost": self.total_cost,
            },
            "timing": self.timing,
            "diagnostics": self.diagnostics,
        })
    }

    /// Restores the summary-held fields when loading a persisted run.
    pub fn apply_summary(&mut self, text: &str) -> Result<(), String> {
        #[derive(Deserialize)]
        struct LedgerDoc {
            rows: Vec<LedgerRow>,
            total_cost: Rational,
        }
        #[derive(Deserialize)]
        struct SummaryDoc {
            format: String,
            version: u32,
            config: Option<serde_json::Value>,
            ledger: LedgerDoc,
            timing: RunTiming,
            diagnostics: Diagnostics,
        }
        let doc: SummaryDoc = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if doc.format != SUMMARY_FORMAT || doc.version != RUN_FORMAT_VERSION {
            return Err(format!("unknown summary format {} v{}", doc.format, doc.version));
        }
        self.ledger_rows = doc.ledger.rows;
        self.total_cost = doc.ledger.total_cost;
        self.timing = doc.timing;
        self.diagnostics = doc.diagnostics;
        self.config_snapshot = doc.config;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("fail-fast abort on sample {sample_id:?} metric {metric:?}: {source}")]
    FailFast {
        sample_id: String,
        metric: String,
        source: EvalError,
    },
}

fn percentile(sorted_ms: &[u64], q: f64) -> u64 {
    if sorted_ms.is_empty() {
        return 0;
    }
    let rank = ((q * sorted_ms.len() as f64).ceil() as usize).clamp(1, sorted_ms.len());
    sorted_ms[rank - 1]
}

/// Evaluates every (sample, metric) unit of a dataset with a bounded worker
/// pool. Verdict order in the record equals dataset order (metrics inner)
/// regardless of completion order; per-unit failures are embedded unless
/// `cfg.fail_fast` is set.
pub fn run_dataset(
    dataset: &Dataset,
    metrics: &[String],
    cfg: &RunConfig,
    gateway: &Gateway,
    concurrency_limit: usize,
) -> Result<RunRecord, RunError> {
    cfg.validate().map_err(RunError::InvalidConfig)?;
    if metrics.is_empty() {
        return Err(RunError::InvalidConfig("no metrics requested".into()));
    }
    if dataset.samples.is_empty() {
        return Err(RunError::InvalidConfig("dataset has no samples".into()));
    }
    for metric in metrics {
        if !cfg.schemas.contains_key(metric) {
            return Err(RunError::InvalidConfig(format!(
                "no schema loaded for metric {metric:?}"
            )));
        }
    }

    let clock = gateway.clock().clone();
    let run_started_ms = clock.unix_millis();
    let run_started = clock.monotonic();
    let ledger = CostLedger::new();
    let stats = EvalStats::default();

    let units: Vec<(usize, usize)> = (0..dataset.samples.len())
        .flat_map(|s| (0..metrics.len()).map(move |m| (s, m)))
        .collect();
    let results: Vec<Mutex<Option<VerdictRecord>>> =
        units.iter().map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fail_fast_error: Mutex<Option<RunError>> = Mutex::new(None);

    let workers = concurrency_limit.clamp(1, units.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let unit = cursor.fetch_add(1, Ordering::SeqCst);
                if unit >= units.len() {
                    return;
                }
                let (sample_idx, metric_idx) = units[unit];
                let sample = &dataset.samples[sample_idx];
                let metric = &metrics[metric_idx];
                let unit_started = clock.monotonic();
                let record = match evaluate_sample(sample, metric, cfg, gateway, &ledger, &stats) {
                    Ok(verdict) => VerdictRecord {
                        sample_id: verdict.sample_id,
                        metric: verdict.metric,
                        outcome: UnitOutcome::Verdict(VerdictBody {
                            peer_reviews: verdict.peer_reviews,
                            ac: verdict.ac,
                        }),
                        timing: verdict.timing,
                    },
                    Err(error) => {
                        if cfg.fail_fast {
                            abort.store(true, Ordering::SeqCst);
                            let mut slot = fail_fast_error.lock().unwrap();
                            if slot.is_none() {
                                *slot = Some(RunError::FailFast {
                                    sample_id: sample.id.clone(),
                                    metric: metric.clone(),
                                    source: error,
                                });
                            }
                            return;
                        }
                        let elapsed =
                            clock.monotonic().saturating_sub(unit_started).as_millis() as u64;
                        VerdictRecord {
                            sample_id: sample.id.clone(),
                            metric: metric.clone(),
                            outcome: UnitOutcome::Failure(error.unit_failure()),
                            timing: Timing {
                                peers_ms: 0,
                                ac_ms: 0,
                                total_ms: elapsed,
                            },
                        }
                    }
                };
                *results[unit].lock().unwrap() = Some(record);
            });
        }
    });

    if let Some(err) = fail_fast_error.into_inner().unwrap() {
        return Err(err);
    }

    let records: Vec<VerdictRecord> = results
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("all units completed"))
        .collect();

    let mut unit_ms: Vec<u64> = records.iter().map(|r| r.timing.total_ms).collect();
    unit_ms.sort_unstable();
    let mean_ms = unit_ms.iter().sum::<u64>() / unit_ms.len() as u64;
    let failed_units = records
        .iter()
        .filter(|r| matches!(r.outcome, UnitOutcome::Failure(_)))
        .count() as u64;

    let header = RunHeader {
        method: cfg.method.clone(),
        variant: cfg.variant,
        task: cfg.task_kind,
        dataset: dataset.name.clone(),
        metrics: metrics.to_vec(),
        peers: cfg.peers.iter().map(|p| p.name.clone()).collect(),
        area_chair: cfg.area_chair.name.clone(),
        k: cfg.k(),
        n: cfg.ac_n(),
        min_peers: cfg.min_peers,
        strategy: cfg.strategy,
        seed_tag: cfg.seed_tag.clone(),
        started_unix_ms: run_started_ms,
    };

    Ok(RunRecord {
        header,
        records,
        ledger_rows: ledger.rows(),
        total_cost: ledger.total_cost(),
        timing: RunTiming {
            total_ms: clock.monotonic().saturating_sub(run_started).as_millis() as u64,
            per_unit: UnitTimingStats {
                mean_ms,
                p50_ms: percentile(&unit_ms, 0.50),
                p90_ms: percentile(&unit_ms, 0.90),
                p99_ms: percentile(&unit_ms, 0.99),
            },
        },
        diagnostics: Diagnostics {
            backend_calls: gateway.backend_calls(),
            cache_hits: gateway.cache_hits(),
            failed_units,
            parse_retries: stats.parse_retries.load(Ordering::SeqCst),
            dropped_peers: stats.dropped_peers.load(Ordering::SeqCst),
        },
        config_snapshot: None,
    })
}

/// Reasoning entry point: same protocol, answers instead of ratings,
/// verdicts keyed under the reasoning pseudo-metric.
pub fn run_reasoning(
    dataset: &Dataset,
    cfg: &RunConfig,
    gateway: &Gateway,
    concurrency_limit: usize,
) -> Result<RunRecord, RunError> {
    if cfg.task_kind != TaskKind::Reasoning {
        return Err(RunError::InvalidConfig(
            "run_reasoning requires a reasoning task config".into(),
        ));
    }
    run_dataset(
        dataset,
        &[REASONING_METRIC.to_string()],
        cfg,
        gateway,
        concurrency_limit,
    )
}

/// Machine scores per metric, aligned with the dataset's sample order.
pub fn machine_scores(run: &RunRecord) -> BTreeMap<String, Vec<(String, Rational)>> {
    let mut out: BTreeMap<String, Vec<(String, Rational)>> = BTreeMap::new();
    for (record, body) in run.verdicts() {
        if let Some(score) = body.ac.final_score() {
            out.entry(record.metric.clone())
                .or_default()
                .push((record.sample_id.clone(), score));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_prefers_count_then_first_occurrence() {
        let c = Answer::Label('C');
        let b = Answer::Label('B');
        assert_eq!(majority_answer(&[c.clone(), c.clone(), b.clone()]), c);
        // Tie: first occurrence wins.
        assert_eq!(majority_answer(&[b.clone(), c.clone()]), b);
        assert_eq!(majority_answer(&[c.clone(), b.clone(), b.clone(), c.clone()]), c);
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let ms = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(percentile(&ms, 0.5), 5);
        assert_eq!(percentile(&ms, 0.9), 9);
        assert_eq!(percentile(&ms, 0.99), 10);
        assert_eq!(percentile(&[], 0.5), 0);
    }

    #[test]
    fn lite_with_n_above_one_is_invalid() {
        let handle = ModelHandle {
            name: "p".into(),
            provider: "mock".into(),
            model_id: "p".into(),
            pricing: crate::gateway::Pricing::free(),
            supports_n: true,
            supports_images: false,
        };
        let cfg = RunConfig {
            method: "m".into(),
            peers: vec![handle.clone()],
            area_chair: handle,
            variant: Variant::Lite,
            n: 5,
            strategy: CommunicationStrategy::ScoreOnly,
            min_peers: 1,
            schemas: SchemaSet::new(),
            task_kind: TaskKind::Rating,
            answer_space: None,
            hyper: HyperParams::defaults(TaskKind::Rating, DatasetKind::NlgRating),
            seed_tag: String::new(),
            fail_fast: false,
        };
        assert!(cfg.validate().is_err());
        assert!(RunConfig { n: 1, ..cfg }.validate().is_ok());
    }

    #[test]
    fn hyper_defaults_follow_task_and_modality() {
        let nlg = HyperParams::defaults(TaskKind::Rating, DatasetKind::NlgRating);
        assert_eq!(nlg.peer.max_tokens, Some(128));
        assert_eq!(nlg.area_chair.max_tokens, Some(256));
        let mm = HyperParams::defaults(TaskKind::Rating, DatasetKind::MultimodalRating);
        assert_eq!(mm.peer.max_tokens, Some(192));
        let reasoning = HyperParams::defaults(TaskKind::Reasoning, DatasetKind::Reasoning);
        assert_eq!(reasoning.peer.max_tokens, Some(256));
        assert_eq!(reasoning.area_chair.max_tokens, None);
    }
}
