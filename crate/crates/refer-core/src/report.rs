//! Report layer: pairing machine scores with ground truth, per-metric
//! correlations, reasoning accuracy, relative costs, and the human/machine
//! output formats.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset::{Dataset, REASONING_METRIC};
use crate::metrics::{self, MetricsError};
use crate::orchestrator::{RunRecord, UnitOutcome};
use crate::parser::Answer;
use crate::prompt::TaskKind;

pub const CORRELATION_FORMAT: &str = "refer.correlation";
pub const REPORT_FORMAT: &str = "refer.report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("sample {sample_id:?} from the run does not exist in the dataset")]
    IdMismatch { sample_id: String },
    #[error("sample {sample_id:?} has no ground truth for metric {metric:?}")]
    MissingTruth { sample_id: String, metric: String },
    #[error("correlation requires a rating run; this run is {0:?}")]
    NotARatingRun(TaskKind),
    #[error("runs mix task kinds or metric sets")]
    MixedRuns,
    #[error("no runs given")]
    NoRuns,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricCorrelation {
    pub metric: String,
    pub rho: f64,
    pub tau: f64,
    pub n_pairs: usize,
    /// Units excluded because their verdict failed.
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub dataset: String,
    pub method: String,
    pub per_metric: Vec<MetricCorrelation>,
    pub avg_rho: f64,
    pub avg_tau: f64,
}

/// Pairs a rating run's final scores with the dataset's human scores and
/// computes both rank correlations per metric.
pub fn correlate_run(run: &RunRecord, dataset: &Dataset) -> Result<CorrelationReport, ReportError> {
    if run.header.task != TaskKind::Rating {
        return Err(ReportError::NotARatingRun(run.header.task));
    }
    let mut per_metric = Vec::new();
    for metric in &run.header.metrics {
        let mut machine = Vec::new();
        let mut human = Vec::new();
        let mut skipped = 0usize;
        for record in run.records.iter().filter(|r| &r.metric == metric) {
            let body = match &record.outcome {
                UnitOutcome::Verdict(body) => body,
                UnitOutcome::Failure(_) => {
                    skipped += 1;
                    continue;
                }
            };
            let sample = dataset
                .sample_by_id(&record.sample_id)
                .ok_or_else(|| ReportError::IdMismatch {
                    sample_id: record.sample_id.clone(),
                })?;
            let truth = sample
                .human_scores
                .get(metric)
                .ok_or_else(|| ReportError::MissingTruth {
                    sample_id: record.sample_id.clone(),
                    metric: metric.clone(),
                })?;
            let score = body.ac.final_score().expect("rating run verdicts carry scores");
            machine.push(score.to_f64());
            human.push(truth.to_f64());
        }
        let rho = metrics::spearman(&machine, &human)?;
        let tau = metrics::kendall_tau_b(&machine, &human)?;
        per_metric.push(MetricCorrelation {
            metric: metric.clone(),
            rho: rho.value,
            tau: tau.value,
            n_pairs: machine.len(),
            skipped,
        });
    }
    let avg_rho = per_metric.iter().map(|m| m.rho).sum::<f64>() / per_metric.len() as f64;
    let avg_tau = per_metric.iter().map(|m| m.tau).sum::<f64>() / per_metric.len() as f64;
    Ok(CorrelationReport {
        dataset: dataset.name.clone(),
        method: run.header.method.clone(),
        per_metric,
        avg_rho,
        avg_tau,
    })
}

/// Accuracy of a reasoning run against the dataset's gold answers.
pub fn reasoning_accuracy(run: &RunRecord, dataset: &Dataset) -> Result<(f64, usize), ReportError> {
    let mut pred: Vec<Answer> = Vec::new();
    let mut gold: Vec<Answer> = Vec::new();
    for (record, body) in run.verdicts() {
        let sample = dataset
            .sample_by_id(&record.sample_id)
            .ok_or_else(|| ReportError::IdMismatch {
                sample_id: record.sample_id.clone(),
            })?;
        let truth = sample
            .gold_answer
            .clone()
            .ok_or_else(|| ReportError::MissingTruth {
                sample_id: record.sample_id.clone(),
                metric: REASONING_METRIC.into(),
            })?;
        pred.push(body.ac.final_answer().expect("reasoning verdicts carry answers").clone());
        gold.push(truth);
    }
    let n = pred.len();
    Ok((metrics::accuracy(&pred, &gold)?, n))
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// Plain-text correlation table (tab-delimited, versioned).
pub fn correlation_text(report: &CorrelationReport) -> String {
    let mut out = format!("# {CORRELATION_FORMAT} v{REPORT_VERSION}\n");
    out.push_str(&format!("dataset\t{}\n", report.dataset));
    out.push_str(&format!("method\t{}\n", report.method));
    out.push_str("metric\trho\ttau\tn_pairs\tskipped\n");
    for m in &report.per_metric {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            m.metric,
            fmt4(m.rho),
            fmt4(m.tau),
            m.n_pairs,
            m.skipped
        ));
    }
    out.push_str(&format!(
        "average\t{}\t{}\t-\t-\n",
        fmt4(report.avg_rho),
        fmt4(report.avg_tau)
    ));
    out
}

pub fn correlation_json(report: &CorrelationReport) -> serde_json::Value {
    serde_json::json!({
        "format": CORRELATION_FORMAT,
        "version": REPORT_VERSION,
        "dataset": report.dataset,
        "method": report.method,
        "per_metric": report.per_metric,
        "average": { "rho": report.avg_rho, "tau": report.avg_tau },
    })
}

// ---------------------------------------------------------------------------
// Combined multi-run report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum MetricValue {
    Correlation { rho: f64, tau: f64 },
    Accuracy { accuracy: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub label: String,
    pub method: String,
    pub per_metric: BTreeMap<String, MetricValue>,
    pub average: MetricValue,
    pub mean_latency_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub task: TaskKind,
    pub dataset: String,
    pub metrics: Vec<String>,
    pub per_run: Vec<RunRow>,
    /// Mean across runs, per metric and overall.
    pub averaged: RunRow,
    /// Method → cost as a fraction of the most expensive method; empty when
    /// every method cost zero.
    pub relative_costs: BTreeMap<String, f64>,
}

fn average_values(values: &[&MetricValue]) -> MetricValue {
    let n = values.len() as f64;
    match values[0] {
        MetricValue::Correlation { .. } => {
            let (mut rho, mut tau) = (0.0, 0.0);
            for v in values {
                if let MetricValue::Correlation { rho: r, tau: t } = v {
                    rho += r;
                    tau += t;
                }
            }
            MetricValue::Correlation {
                rho: rho / n,
                tau: tau / n,
            }
        }
        MetricValue::Accuracy { .. } => {
            let mut acc = 0.0;
            for v in values {
                if let MetricValue::Accuracy { accuracy } = v {
                    acc += accuracy;
                }
            }
            MetricValue::Accuracy { accuracy: acc / n }
        }
    }
}

/// Builds the combined table for one or more runs over the same dataset:
/// per-run rows plus a row of across-run means, relative costs, and mean
/// per-instance latency.
pub fn build_report(
    runs: &[(String, RunRecord)],
    dataset: &Dataset,
) -> Result<Report, ReportError> {
    let Some((_, first)) = runs.first() else {
        return Err(ReportError::NoRuns);
    };
    let task = first.header.task;
    let metrics_list = first.header.metrics.clone();
    if runs
        .iter()
        .any(|(_, r)| r.header.task != task || r.header.metrics != metrics_list)
    {
        return Err(ReportError::MixedRuns);
    }

    let mut per_run = Vec::new();
    for (label, run) in runs {
        let mut per_metric = BTreeMap::new();
        let average = match task {
            TaskKind::Rating => {
                let report = correlate_run(run, dataset)?;
                for m in &report.per_metric {
                    per_metric.insert(
                        m.metric.clone(),
                        MetricValue::Correlation {
                            rho: m.rho,
                            tau: m.tau,
                        },
                    );
                }
                MetricValue::Correlation {
                    rho: report.avg_rho,
                    tau: report.avg_tau,
                }
            }
            TaskKind::Reasoning => {
                let (accuracy, _) = reasoning_accuracy(run, dataset)?;
                per_metric.insert(REASONING_METRIC.to_string(), MetricValue::Accuracy { accuracy });
                MetricValue::Accuracy { accuracy }
            }
        };
        per_run.push(RunRow {
            label: label.clone(),
            method: run.header.method.clone(),
            per_metric,
            average,
            mean_latency_ms: run.timing.per_unit.mean_ms,
        });
    }

    let mut averaged_metrics = BTreeMap::new();
    for metric in &metrics_list {
        let values: Vec<&MetricValue> = per_run.iter().map(|r| &r.per_metric[metric]).collect();
        averaged_metrics.insert(metric.clone(), average_values(&values));
    }
    let overall: Vec<&MetricValue> = per_run.iter().map(|r| &r.average).collect();
    let averaged = RunRow {
        label: "average".into(),
        method: "-".into(),
        per_metric: averaged_metrics,
        average: average_values(&overall),
        mean_latency_ms: per_run.iter().map(|r| r.mean_latency_ms).sum::<u64>()
            / per_run.len() as u64,
    };

    let merged = crate::gateway::CostLedger::from_rows(
        runs.iter().flat_map(|(_, r)| r.ledger_rows.iter().cloned()),
    );
    let relative_costs = match metrics::relative_costs(&merged) {
        Ok(costs) => costs,
        Err(MetricsError::AllZeroCosts) => BTreeMap::new(),
        Err(e) => return Err(e.into()),
    };

    Ok(Report {
        task,
        dataset: dataset.name.clone(),
        metrics: metrics_list,
        per_run,
        averaged,
        relative_costs,
    })
}

fn row_cells(row: &RunRow, metrics_list: &[String]) -> String {
    let mut cells = vec![row.label.clone(), row.method.clone()];
    for metric in metrics_list {
        match &row.per_metric[metric] {
            MetricValue::Correlation { rho, tau } => {
                cells.push(fmt4(*rho));
                cells.push(fmt4(*tau));
            }
            MetricValue::Accuracy { accuracy } => cells.push(fmt4(*accuracy)),
        }
    }
    match &row.average {
        MetricValue::Correlation { rho, tau } => {
            cells.push(fmt4(*rho));
            cells.push(fmt4(*tau));
        }
        MetricValue::Accuracy { accuracy } => cells.push(fmt4(*accuracy)),
    }
    cells.push(row.mean_latency_ms.to_string());
    cells.join("\t")
}

/// Plain-text combined report (tab-delimited, versioned).
pub fn report_text(report: &Report) -> String {
    let mut out = format!("# {REPORT_FORMAT} v{REPORT_VERSION}\n");
    out.push_str(&format!("dataset\t{}\n", report.dataset));
    out.push_str(&format!("runs\t{}\n", report.per_run.len()));

    let mut header = vec!["run".to_string(), "method".to_string()];
    for metric in &report.metrics {
        match report.task {
            TaskKind::Rating => {
                header.push(format!("{metric}.rho"));
                header.push(format!("{metric}.tau"));
            }
            TaskKind::Reasoning => header.push(format!("{metric}.accuracy")),
        }
    }
    match report.task {
        TaskKind::Rating => {
            header.push("avg.rho".into());
            header.push("avg.tau".into());
        }
        TaskKind::Reasoning => header.push("avg.accuracy".into()),
    }
    header.push("mean_latency_ms".into());
    out.push_str(&header.join("\t"));
    out.push('\n');

    for row in &report.per_run {
        out.push_str(&row_cells(row, &report.metrics));
        out.push('\n');
    }
    out.push_str(&row_cells(&report.averaged, &report.metrics));
    out.push('\n');

    out.push_str("method\trelative_cost\n");
    if report.relative_costs.is_empty() {
        out.push_str("-\t-\n");
    } else {
        for (method, cost) in &report.relative_costs {
            out.push_str(&format!("{method}\t{}\n", fmt4(*cost)));
        }
    }
    out
}

pub fn report_json(report: &Report) -> serde_json::Value {
    serde_json::json!({
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "task": report.task,
        "dataset": report.dataset,
        "metrics": report.metrics,
        "per_run": report.per_run,
        "averaged": report.averaged,
        "relative_costs": report.relative_costs,
    })
}
