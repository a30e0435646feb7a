//! The `visent` command line.
//!
//! Every command reads one TOML [`PipelineConfig`] (`--config`, default
//! `visent.toml`) and writes into a directory under `--out`. Exit codes:
//! 0 success, 2 partial (some images or rows failed), 1 fatal.

mod artifacts;
mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use artifacts::{check_leakage, FoldManifest, InstanceRef, PredictionRow, RunDir};
pub use config::{DatasetConfig, FewshotConfig, LexiconConfig, PipelineConfig, TunerConfig};
pub use run::{
    caption_images, run_cross_dataset, run_task, CaptionFailure, CaptionSummary, CrossOutcome, CrossSpec, RunOutcome,
    RunSpec, Task,
};

use crate::corpus::{ingest_lenient, stats, CorpusError, DatasetId};
use crate::evalkit::{annotate_comparisons, emit_report, EvalError, EvalReport};
use crate::gateway::{GatewayError, PromptError};
use crate::labeling::{build_subset, exclusion_counts, LabelingError, ProblemSetup};
use crate::lexicon::LexiconError;
use crate::tuner::{TrainMode, TunerError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("no endpoint named {0} in the config")]
    UnknownEndpoint(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Tuner(TunerError),
    #[error("tuner unavailable: {0}")]
    TunerUnavailable(String),
    #[error("{missing} instance(s) lack a cached caption from {model}, e.g. {example}; run `visent caption` first")]
    MissingCaptions { model: String, missing: usize, example: String },
    #[error("fold {fold}: {count} evaluation instance(s) also used for training, e.g. {example}")]
    LeakageDetected { fold: usize, count: usize, example: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Parser)]
#[command(name = "visent", version, about = "Visual sentiment evaluation pipeline")]
pub struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "visent.toml")]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an annotation file and write dataset statistics.
    Ingest(IngestArgs),
    /// Write the labelled subset of one problem setup.
    Derive(SetupArgs),
    /// Caption images into the cache.
    Caption(CaptionArgs),
    /// Run one task under cross-validation and write its report.
    Run(RunArgs),
    /// Train on PerceptSent, evaluate on DeepSent.
    CrossDataset(CrossArgs),
    /// Merge report files and add pairwise comparisons.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub dataset: DatasetId,
    /// Reads this file instead of the configured path.
    #[arg(long)]
    pub path: Option<PathBuf>,
    /// Collect invalid rows into `rejected.json` instead of aborting.
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Debug, Args)]
pub struct SetupArgs {
    #[arg(long)]
    pub dataset: DatasetId,
    /// Setup key such as `s3p5` (threshold 3, five classes).
    #[arg(long)]
    pub setup: String,
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[arg(long)]
    pub dataset: DatasetId,
    /// Endpoint alias.
    #[arg(long)]
    pub model: String,
    /// Restrict to one setup's subset.
    #[arg(long)]
    pub setup: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long)]
    pub dataset: DatasetId,
    #[arg(long)]
    pub setup: String,
    /// Classifying endpoint (task1, task2a_fewshot).
    #[arg(long)]
    pub model: Option<String>,
    /// Captioning endpoint whose cached captions are used (task2 variants).
    #[arg(long)]
    pub captioner: Option<String>,
    /// Tuner base model (task2a_probe, task2b).
    #[arg(long)]
    pub base_model: Option<String>,
    /// Few-shot examples per prompt.
    #[arg(long)]
    pub shots: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CrossArgs {
    #[arg(long)]
    pub captioner: String,
    #[arg(long, value_parser = parse_mode, default_value = "finetune")]
    pub mode: TrainMode,
    #[arg(long)]
    pub base_model: Option<String>,
    #[arg(long, default_value = "s3p2")]
    pub train_setup: String,
    #[arg(long, value_delimiter = ',', default_value = "s3p2,s5p2")]
    pub eval_setups: Vec<String>,
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    match s {
        "probe" => Ok(TrainMode::Probe),
        "finetune" => Ok(TrainMode::Finetune),
        other => Err(format!("unknown mode {other}; use probe or finetune")),
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` files written by earlier runs.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output subdirectory name.
    #[arg(long, default_value = "report")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Partial,
}

/// What a command did: its directory and the lines printed to stdout.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub dir: PathBuf,
    pub lines: Vec<String>,
}

impl Outcome {
    fn new(status: Status, dir: &Path, lines: Vec<String>) -> Self {
        Outcome {
            status,
            dir: dir.to_path_buf(),
            lines,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.status {
            Status::Success => 0,
            Status::Partial => 2,
        }
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '-' })
        .collect()
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut config = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn command_line() -> Vec<String> {
    std::env::args().skip(1).collect()
}

fn status_of(partial: bool) -> Status {
    if partial {
        Status::Partial
    } else {
        Status::Success
    }
}

fn write_reports(dir: &RunDir, reports: &[EvalReport]) -> Result<(), CliError> {
    emit_report(reports, dir.path(), true)?;
    Ok(())
}

/// Runs one parsed command line.
pub async fn execute(cli: Cli) -> Result<Outcome, CliError> {
    if let Command::Report(args) = &cli.command {
        return report(&cli, args);
    }
    let config = load_config(&cli)?;
    let argv = command_line();
    match &cli.command {
        Command::Ingest(args) => {
            let ds = config.dataset(args.dataset).ok();
            let path = args
                .path
                .clone()
                .or_else(|| ds.map(|d| d.path.clone()))
                .ok_or_else(|| CliError::Config(format!("dataset {} is not configured", args.dataset)))?;
            let profile = ds
                .map(|d| d.profile_for(args.dataset))
                .unwrap_or_else(|| crate::corpus::IngestProfile::normalized(args.dataset));
            let (dataset, rejected) = if args.skip_invalid {
                ingest_lenient(&path, &profile)?
            } else {
                (crate::corpus::ingest(&path, &profile)?, Vec::new())
            };
            let dir = RunDir::create(config.out.join(format!("ingest-{}", args.dataset)))?;
            dir.write_provenance(&config, &argv)?;
            let s = stats(&dataset);
            dir.write_json("stats.json", &s)?;
            let mut lines = vec![format!(
                "{}: {} records, {} votes",
                args.dataset, s.records, s.total_votes
            )];
            if args.skip_invalid {
                dir.write_json("rejected.json", &rejected)?;
                lines.push(format!("{} row(s) rejected", rejected.len()));
                for r in &rejected {
                    lines.push(format!("  line {}: {}", r.line, r.reason));
                }
            }
            Ok(Outcome::new(status_of(!rejected.is_empty()), dir.path(), lines))
        }
        Command::Derive(args) => {
            let setup = ProblemSetup::from_key(args.dataset, &args.setup)?;
            let dataset = run::load_dataset(&config, args.dataset)?;
            let subset = build_subset(&dataset, &setup)?;
            let (below, ties) = exclusion_counts(&dataset, &setup)?;
            let dir = RunDir::create(config.out.join(format!("derive-{}-{}", args.dataset, setup.key())))?;
            dir.write_provenance(&config, &argv)?;
            dir.write_jsonl("subset.jsonl", &subset)?;
            Ok(Outcome::new(
                Status::Success,
                dir.path(),
                vec![format!(
                    "{} {}: {} instances (excluded: {below} below threshold, {ties} ties)",
                    args.dataset,
                    setup.key(),
                    subset.len()
                )],
            ))
        }
        Command::Caption(args) => {
            let setup = args
                .setup
                .as_deref()
                .map(|k| ProblemSetup::from_key(args.dataset, k))
                .transpose()?;
            let summary = caption_images(&config, args.dataset, setup.as_ref(), &args.model).await?;
            let dir = RunDir::create(config.out.join(format!("caption-{}-{}", args.dataset, slug(&args.model))))?;
            dir.write_provenance(&config, &argv)?;
            dir.write_json("summary.json", &summary)?;
            let mut lines = vec![format!(
                "{} {}: {} requested, {} cached, {} captioned, {} failed",
                args.dataset,
                args.model,
                summary.requested,
                summary.already_cached,
                summary.captioned,
                summary.failed.len()
            )];
            lines.extend(summary.failed.iter().map(|f| format!("  {}: {}", f.image_id, f.error)));
            Ok(Outcome::new(status_of(!summary.failed.is_empty()), dir.path(), lines))
        }
        Command::Run(args) => {
            let spec = RunSpec {
                task: args.task,
                setup: ProblemSetup::from_key(args.dataset, &args.setup)?,
                model: args.model.clone(),
                captioner: args.captioner.clone(),
                base_model: args.base_model.clone(),
                shots: args.shots,
            };
            let outcome = run_task(&config, &spec).await?;
            let r = &outcome.report;
            let dir = RunDir::create(config.out.join(format!(
                "run-{}-{}-{}",
                args.dataset,
                spec.setup.key(),
                slug(&r.system_id)
            )))?;
            dir.write_provenance(&config, &argv)?;
            write_reports(&dir, std::slice::from_ref(r))?;
            dir.write_json("folds.json", &outcome.plan)?;
            dir.write_json("manifests.json", &outcome.manifests)?;
            dir.write_jsonl("predictions.jsonl", &outcome.predictions)?;
            let score = match (r.flagged_invalid, r.mean) {
                (false, Some(m)) => format!(
                    "{:.4} ± {:.4}",
                    m,
                    r.ci95_halfwidth.unwrap_or(0.0)
                ),
                _ => format!("— (invalid rate {:.1}%)", r.invalid_rate * 100.0),
            };
            let mut lines = vec![format!("{} {} {}: {} {score}", r.system_id, args.dataset, spec.setup.key(), r.metric.as_str())];
            if outcome.failures > 0 {
                lines.push(format!("{} request(s) failed and were scored as invalid", outcome.failures));
            }
            Ok(Outcome::new(status_of(outcome.failures > 0), dir.path(), lines))
        }
        Command::CrossDataset(args) => {
            let spec = CrossSpec {
                captioner: args.captioner.clone(),
                mode: args.mode,
                base_model: args.base_model.clone(),
                train_key: args.train_setup.clone(),
                eval_keys: args.eval_setups.clone(),
            };
            let mut outcome = run_cross_dataset(&config, &spec).await?;
            annotate_comparisons(&mut outcome.reports);
            let system = outcome.reports.first().map(|r| slug(&r.system_id)).unwrap_or_default();
            let dir = RunDir::create(config.out.join(format!("cross-dataset-{system}")))?;
            dir.write_provenance(&config, &argv)?;
            write_reports(&dir, &outcome.reports)?;
            dir.write_json("manifests.json", &outcome.manifests)?;
            for (key, rows) in &outcome.predictions {
                dir.write_jsonl(&format!("predictions-{key}.jsonl"), rows)?;
            }
            let lines = outcome
                .reports
                .iter()
                .map(|r| {
                    format!(
                        "{} deep2 {}: accuracy {:.4} ± {:.4}",
                        r.system_id,
                        r.setup.key(),
                        r.mean.unwrap_or(f64::NAN),
                        r.ci95_halfwidth.unwrap_or(0.0)
                    )
                })
                .collect();
            Ok(Outcome::new(Status::Success, dir.path(), lines))
        }
        Command::Report(_) => unreachable!("handled above"),
    }
}

#[derive(serde::Deserialize)]
struct ReportFile {
    schema_version: u32,
    reports: Vec<EvalReport>,
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<Outcome, CliError> {
    let out = match &cli.out {
        Some(o) => o.clone(),
        None if cli.config.exists() => load_config(cli)?.out,
        None => PathBuf::from("runs"),
    };
    let mut reports = Vec::new();
    for path in &args.inputs {
        let io = |message: String| CliError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let file: ReportFile = serde_json::from_str(&text).map_err(|e| io(e.to_string()))?;
        if file.schema_version != crate::evalkit::REPORT_SCHEMA_VERSION {
            return Err(io(format!("unsupported report schema {}", file.schema_version)));
        }
        reports.extend(file.reports);
    }
    annotate_comparisons(&mut reports);
    let dir = RunDir::create(out.join(slug(&args.name)))?;
    write_reports(&dir, &reports)?;
    let table = std::fs::read_to_string(dir.path().join("report.txt")).unwrap_or_default();
    Ok(Outcome::new(
        Status::Success,
        dir.path(),
        table.lines().map(str::to_string).collect(),
    ))
}

/// Entry point of the `visent` binary.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(execute(cli)) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            println!("wrote {}", outcome.dir.display());
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
