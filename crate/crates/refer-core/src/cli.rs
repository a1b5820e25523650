//! Batch command-line entry points.
//!
//! Exit codes are part of the contract: 0 success (including runs with
//! embedded per-sample failures), 2 configuration/schema/dataset problems,
//! 3 backend exhaustion under `--fail-fast`, 1 unexpected runtime failures.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{self, LoadedConfig};
use crate::dataset::{self, Dataset, DatasetKind, ExportError};
use crate::gateway::Gateway;
use crate::orchestrator::{run_dataset, EvalError, RunConfig, RunError, RunRecord};
use crate::parser::{Answer, AnswerOutcome, AnswerSpace, PeerContent, PeerReview, ReviewOutcome};
use crate::prompt::{
    load_schema_set, render_prompt, validate_schema, Role, SchemaSet, TaskKind,
};
use crate::report;
use crate::score::Rational;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Parser)]
#[command(name = "refer", version, about = "Hierarchical peer/area-chair evaluation of generative outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a rating evaluation over a dataset.
    Evaluate(EvaluateArgs),
    /// Run a reasoning benchmark over a dataset.
    Reason(EvaluateArgs),
    /// Correlate a run's scores with human annotations.
    Correlate(CorrelateArgs),
    /// Combined table over one or more runs: correlations or accuracy,
    /// relative costs, mean per-instance latency.
    Report(ReportArgs),
    /// Export (instruction, output) records from a run's area-chair verdicts.
    ExportTuning(ExportArgs),
    /// Validate a config file and the schema documents for a dataset.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    schema_dir: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory; receives records.jsonl and summary.json.
    #[arg(long)]
    out: PathBuf,
    /// turbo | lite
    #[arg(long)]
    variant: Option<String>,
    /// Area-chair responses per sample (turbo).
    #[arg(long)]
    n: Option<u32>,
    /// score_only | comment_only | both
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated model names overriding [run].peers.
    #[arg(long)]
    peers: Option<String>,
    #[arg(long)]
    area_chair: Option<String>,
    #[arg(long)]
    min_peers: Option<usize>,
    /// Bound on in-flight backend calls.
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    seed_tag: Option<String>,
    /// Render every prompt into --out without any backend calls.
    #[arg(long)]
    dry_run: bool,
    /// Abort the run on the first failed sample.
    #[arg(long)]
    fail_fast: bool,
    /// Dotted-path config override, e.g. -S run.n=20 (repeatable, last wins).
    #[arg(long = "set", short = 'S')]
    overrides: Vec<String>,
}

#[derive(Args)]
struct CorrelateArgs {
    /// Run directory (or records.jsonl path).
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Also write correlation.txt and correlation.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Also write report.txt and report.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run directories, one per run.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    schema_dir: PathBuf,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    schema_dir: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long = "set", short = 'S')]
    overrides: Vec<String>,
}

/// Parses `args` (not including argv[0]) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let mut argv: Vec<String> = vec!["refer".to_string()];
    argv.extend(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version are success paths.
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Evaluate(args) => cmd_evaluate(args, TaskKind::Rating),
        Command::Reason(args) => cmd_evaluate(args, TaskKind::Reasoning),
        Command::Correlate(args) => cmd_correlate(args),
        Command::Report(args) => cmd_report(args),
        Command::ExportTuning(args) => cmd_export_tuning(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn fail(code: i32, message: impl std::fmt::Display) -> i32 {
    eprintln!("refer: {message}");
    code
}

fn load_dataset_for(path: &Path, task: TaskKind) -> Result<Dataset, String> {
    let kind = dataset::peek_kind(path).map_err(|e| e.to_string())?;
    match (task, kind) {
        (TaskKind::Rating, DatasetKind::Reasoning) => {
            return Err("evaluate needs a rating dataset; this one is reasoning (use `refer reason`)".into())
        }
        (TaskKind::Reasoning, k) if k != DatasetKind::Reasoning => {
            return Err("reason needs a reasoning dataset (use `refer evaluate`)".into())
        }
        _ => {}
    }
    dataset::load_dataset(path, kind).map_err(|e| e.to_string())
}

/// Translates CLI flags into dotted-path overrides so that flags, --set, and
/// the file all flow through one merge path (file < --set < flags).
fn flag_overrides(args: &EvaluateArgs) -> Vec<String> {
    let mut overrides = args.overrides.clone();
    if let Some(v) = &args.variant {
        overrides.push(format!("run.variant={v}"));
    }
    if let Some(n) = args.n {
        overrides.push(format!("run.n={n}"));
    }
    if let Some(s) = &args.strategy {
        overrides.push(format!("run.strategy={s}"));
    }
    if let Some(peers) = &args.peers {
        let list = peers
            .split(',')
            .map(|p| format!("\"{}\"", p.trim()))
            .collect::<Vec<_>>()
            .join(", ");
        overrides.push(format!("run.peers=[{list}]"));
    }
    if let Some(ac) = &args.area_chair {
        overrides.push(format!("run.area_chair={ac}"));
    }
    if let Some(m) = args.min_peers {
        overrides.push(format!("run.min_peers={m}"));
    }
    if let Some(c) = args.concurrency {
        overrides.push(format!("run.concurrency={c}"));
    }
    if let Some(tag) = &args.seed_tag {
        overrides.push(format!("run.seed_tag={tag}"));
    }
    if args.fail_fast {
        overrides.push("run.fail_fast=true".to_string());
    }
    overrides
}

struct Prepared {
    config: LoadedConfig,
    dataset: Dataset,
    run_config: RunConfig,
    gateway: Gateway,
}

fn prepare(args: &EvaluateArgs, task: TaskKind) -> Result<Prepared, String> {
    let config = config::load_config(&args.config, &flag_overrides(args)).map_err(|e| e.to_string())?;
    let dataset = load_dataset_for(&args.dataset, task)?;
    let schemas: SchemaSet =
        load_schema_set(&args.schema_dir, &dataset.name, &dataset.metrics).map_err(|e| e.to_string())?;
    let clock = config.document.clock();
    let gateway = config::build_gateway(&config, args.cache_dir.as_deref(), clock)
        .map_err(|e| e.to_string())?;
    let run_config =
        config::build_run_config(&config, &dataset, task, schemas).map_err(|e| e.to_string())?;
    Ok(Prepared {
        config,
        dataset,
        run_config,
        gateway,
    })
}

fn cmd_evaluate(args: EvaluateArgs, task: TaskKind) -> i32 {
    let prepared = match prepare(&args, task) {
        Ok(p) => p,
        Err(message) => return fail(EXIT_CONFIG, message),
    };
    let Prepared {
        config,
        dataset,
        run_config,
        gateway,
    } = prepared;

    if args.dry_run {
        return match write_dry_run(&args.out, &dataset, &run_config) {
            Ok(count) => {
                println!("dry run: {count} prompt file(s) written to {}", args.out.display());
                EXIT_OK
            }
            Err(message) => fail(EXIT_RUNTIME, message),
        };
    }

    let concurrency = config.document.run.concurrency.max(1);
    let result = run_dataset(&dataset, &dataset.metrics.clone(), &run_config, &gateway, concurrency);
    let mut run = match result {
        Ok(run) => run,
        Err(RunError::InvalidConfig(message)) => return fail(EXIT_CONFIG, message),
        Err(err @ RunError::FailFast { .. }) => {
            let code = match &err {
                RunError::FailFast { source, .. } => match source {
                    EvalError::ACFailure(_) | EvalError::InsufficientPeers { .. } => EXIT_BACKEND,
                    EvalError::Render(_) | EvalError::InvalidConfig(_) => EXIT_CONFIG,
                    _ => EXIT_RUNTIME,
                },
                _ => EXIT_RUNTIME,
            };
            return fail(code, err);
        }
    };
    run.config_snapshot = Some(config.snapshot.clone());

    if let Err(e) = dataset::persist_run(&run, &args.out) {
        return fail(EXIT_RUNTIME, e);
    }
    let failed = run.diagnostics.failed_units;
    if failed > 0 {
        eprintln!("refer: {failed} of {} unit(s) failed; failures are embedded in the records", run.records.len());
    }
    println!(
        "run complete: {} verdict(s), {} backend call(s), cache hits {}, written to {}",
        run.records.len() - failed as usize,
        run.diagnostics.backend_calls,
        run.diagnostics.cache_hits,
        args.out.display()
    );
    EXIT_OK
}

/// Renders every prompt to files under `out` without any backend calls.
/// Area-chair prompts use placeholder peer reviews (peer outputs do not
/// exist without calls).
fn write_dry_run(out: &Path, dataset: &Dataset, cfg: &RunConfig) -> Result<usize, String> {
    let mut count = 0usize;
    for sample in &dataset.samples {
        let sample_dir = out.join(&sample.id);
        std::fs::create_dir_all(&sample_dir).map_err(|e| e.to_string())?;
        for (metric, pair) in &cfg.schemas {
            let peer = render_prompt(&pair.peer, sample, Role::Peer, None, cfg.strategy)
                .map_err(|e| format!("sample {:?} metric {metric:?}: {e}", sample.id))?;
            let placeholders: Vec<PeerReview> = (0..cfg.k())
                .map(|i| PeerReview {
                    peer: cfg.peers[i].name.clone(),
                    content: placeholder_content(cfg, i),
                })
                .collect();
            let ac = render_prompt(
                &pair.area_chair,
                sample,
                Role::AreaChair,
                Some(&placeholders),
                cfg.strategy,
            )
            .map_err(|e| format!("sample {:?} metric {metric:?}: {e}", sample.id))?;
            std::fs::write(sample_dir.join(format!("{metric}.peer.txt")), peer)
                .map_err(|e| e.to_string())?;
            std::fs::write(sample_dir.join(format!("{metric}.area_chair.txt")), ac)
                .map_err(|e| e.to_string())?;
            count += 2;
        }
    }
    Ok(count)
}

fn placeholder_content(cfg: &RunConfig, index: usize) -> PeerContent {
    let analysis = format!("[peer {} analysis placeholder]", index + 1);
    match cfg.task_kind {
        TaskKind::Rating => {
            let scale = cfg
                .schemas
                .values()
                .next()
                .and_then(|pair| pair.peer.scale)
                .expect("rating schemas carry scales");
            PeerContent::Rating(ReviewOutcome {
                analysis,
                score: scale.min,
                raw: String::new(),
            })
        }
        TaskKind::Reasoning => {
            let answer = match &cfg.answer_space {
                Some(AnswerSpace::Labels { labels }) => {
                    Answer::Label(*labels.iter().next().expect("non-empty label space"))
                }
                _ => Answer::Number(Rational::ZERO),
            };
            PeerContent::Answer(AnswerOutcome {
                analysis,
                answer,
                raw: String::new(),
            })
        }
    }
}

fn load_run_and_dataset(run_path: &Path, dataset_path: &Path) -> Result<(RunRecord, Dataset), String> {
    let run = dataset::load_run(run_path).map_err(|e| e.to_string())?;
    let kind = dataset::peek_kind(dataset_path).map_err(|e| e.to_string())?;
    let dataset = dataset::load_dataset(dataset_path, kind).map_err(|e| e.to_string())?;
    Ok((run, dataset))
}

fn cmd_correlate(args: CorrelateArgs) -> i32 {
    let (run, dataset) = match load_run_and_dataset(&args.run, &args.dataset) {
        Ok(v) => v,
        Err(message) => return fail(EXIT_CONFIG, message),
    };
    let correlation = match report::correlate_run(&run, &dataset) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let text = report::correlation_text(&correlation);
    print!("{text}");
    if let Some(out) = &args.out {
        if let Err(e) = write_pair(out, "correlation", &text, &report::correlation_json(&correlation)) {
            return fail(EXIT_RUNTIME, e);
        }
    }
    EXIT_OK
}

fn cmd_report(args: ReportArgs) -> i32 {
    let kind = match dataset::peek_kind(&args.dataset) {
        Ok(kind) => kind,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let dataset = match dataset::load_dataset(&args.dataset, kind) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let mut runs = Vec::new();
    for path in &args.runs {
        match dataset::load_run(path) {
            Ok(run) => runs.push((path.display().to_string(), run)),
            Err(e) => return fail(EXIT_CONFIG, e),
        }
    }
    let built = match report::build_report(&runs, &dataset) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let text = report::report_text(&built);
    print!("{text}");
    if let Some(out) = &args.out {
        if let Err(e) = write_pair(out, "report", &text, &report::report_json(&built)) {
            return fail(EXIT_RUNTIME, e);
        }
    }
    EXIT_OK
}

fn write_pair(dir: &Path, stem: &str, text: &str, json: &serde_json::Value) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    std::fs::write(dir.join(format!("{stem}.txt")), text).map_err(|e| e.to_string())?;
    let pretty = serde_json::to_string_pretty(json).map_err(|e| e.to_string())?;
    std::fs::write(dir.join(format!("{stem}.json")), pretty).map_err(|e| e.to_string())?;
    Ok(())
}

fn cmd_export_tuning(args: ExportArgs) -> i32 {
    let (run, dataset) = match load_run_and_dataset(&args.run, &args.dataset) {
        Ok(v) => v,
        Err(message) => return fail(EXIT_CONFIG, message),
    };
    let schemas = match load_schema_set(&args.schema_dir, &dataset.name, &dataset.metrics) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    match dataset::export_instruction_tuning(&run, &dataset, &schemas, &args.out) {
        Ok(report) => {
            println!("exported {} record(s), skipped {}", report.written, report.skipped);
            EXIT_OK
        }
        Err(e @ ExportError::Io(_)) => fail(EXIT_RUNTIME, e),
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn cmd_validate(args: ValidateArgs) -> i32 {
    let config = match config::load_config(&args.config, &args.overrides) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };

    let mut problems = 0usize;
    for name in config
        .document
        .run
        .peers
        .iter()
        .chain(std::iter::once(&config.document.run.area_chair))
    {
        if let Err(e) = config.document.model_handle(name) {
            eprintln!("refer: {e}");
            problems += 1;
        }
    }

    if let (Some(schema_dir), Some(dataset_path)) = (&args.schema_dir, &args.dataset) {
        let dataset = match dataset::peek_kind(dataset_path)
            .and_then(|kind| dataset::load_dataset(dataset_path, kind))
        {
            Ok(d) => d,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        match load_schema_set(schema_dir, &dataset.name, &dataset.metrics) {
            Ok(schemas) => {
                for (metric, pair) in &schemas {
                    for (role, schema) in [("peer", &pair.peer), ("area_chair", &pair.area_chair)] {
                        for issue in validate_schema(schema) {
                            eprintln!("refer: schema {metric}.{role}: {issue}");
                            problems += 1;
                        }
                    }
                }
            }
            Err(e) => return fail(EXIT_CONFIG, e),
        }
    }

    if problems > 0 {
        return fail(EXIT_CONFIG, format!("{problems} problem(s) found"));
    }
    println!("configuration valid");
    EXIT_OK
}
