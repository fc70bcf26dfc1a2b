//! trafficlab: calibrate, evaluate, and iteratively improve traffic models.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error,
//! 3 improvement target not reached.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use trafficlab::agent::{self, JsonlSink, TrialLog, TrialStatus};
use trafficlab::calibration::{calibrate_model, write_curve_csv, ModelSpec};
use trafficlab::datasets::{load_carfollow_events, load_flow_samples, load_lanechange_samples};
use trafficlab::dsl::{parse_candidate, validate_candidate};
use trafficlab::evaluation::{evaluate, BoundModel, Dataset};
use trafficlab::llm::{ChatBackend, HttpBackend, ReplayBackend};
use trafficlab::models::{get_variant, ModelFamily, ParamsDoc};
use trafficlab::report::{format_loss_block, render_trial};

use crate::config::FileConfig;

/// Calibrate, evaluate, and iteratively improve analytic traffic models.
#[derive(Debug, Parser)]
#[command(name = "trafficlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model variant to a dataset with the genetic algorithm.
    Calibrate(CalibrateArgs),
    /// Score a calibrated model on a dataset and print its report.
    Evaluate(EvaluateArgs),
    /// Run the iterative model-improvement trial against a chat backend.
    Improve(ImproveArgs),
    /// Render a recorded trial log as a readable report.
    Report(ReportArgs),
}

/// Model family, as a flag value.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    /// Car-following acceleration models.
    Idm,
    /// Lane-change decision models.
    Mobil,
    /// Macroscopic density-to-speed relations.
    Lwr,
}

impl From<FamilyArg> for ModelFamily {
    fn from(arg: FamilyArg) -> ModelFamily {
        match arg {
            FamilyArg::Idm => ModelFamily::Idm,
            FamilyArg::Mobil => ModelFamily::Mobil,
            FamilyArg::Lwr => ModelFamily::Lwr,
        }
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Model family to calibrate.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Native variant name (for example `baseline`).
    #[arg(long)]
    variant: Option<String>,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Genetic-algorithm seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output parameters JSON; the loss curve lands next to it as `*.curve.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = ArgGroup::new("model").required(true).args(["variant", "candidate"]))]
struct EvaluateArgs {
    /// Model family to evaluate.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Native variant name.
    #[arg(long)]
    variant: Option<String>,
    /// Candidate model source file (expression DSL).
    #[arg(long)]
    candidate: Option<PathBuf>,
    /// Calibrated parameters JSON (as written by `calibrate`).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImproveArgs {
    /// Model family to improve.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// TOML configuration file (dataset, GA settings, trial budget, backend).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV (overrides the config file).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Chat backend: `live` or `replay:<transcript.jsonl>`.
    #[arg(long)]
    backend: String,
    /// Trial log output (JSON Lines, flushed after every event).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Trial log written by `improve`.
    #[arg(long)]
    trial: PathBuf,
}

/// Failures split by exit code: usage problems (2) versus runtime errors (1).
enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> CliError {
        CliError::Runtime(err)
    }
}

impl From<trafficlab::Error> for CliError {
    fn from(err: trafficlab::Error) -> CliError {
        CliError::Runtime(err.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

/// Print a line to stdout, tolerating a reader that closed the pipe early
/// (for example `trafficlab report ... | head`).
fn emit(text: impl std::fmt::Display) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Improve(args) => cmd_improve(args),
        Command::Report(args) => cmd_report(args),
    }
}

/// A setting required from either a flag or the config file.
fn require<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T, CliError> {
    flag.or(file).ok_or_else(|| {
        CliError::Usage(format!("missing {what}; pass the flag or set it in the config file"))
    })
}

fn resolve_family(flag: Option<FamilyArg>, file: &FileConfig) -> Result<ModelFamily, CliError> {
    if let Some(family) = flag {
        return Ok(family.into());
    }
    file.family()?
        .ok_or_else(|| CliError::Usage("missing --family (or `family` in the config file)".into()))
}

fn load_dataset(family: ModelFamily, path: &Path) -> trafficlab::Result<Dataset> {
    Ok(match family {
        ModelFamily::Idm => Dataset::CarFollow(load_carfollow_events(path)?),
        ModelFamily::Mobil => Dataset::LaneChange(load_lanechange_samples(path)?),
        ModelFamily::Lwr => Dataset::Flow(load_flow_samples(path)?),
    })
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let family = resolve_family(args.family, &file)?;
    let variant_name = require(args.variant, file.variant.clone(), "--variant")?;
    let data_path = require(args.data, file.data.clone(), "--data")?;
    let out_path = require(args.out, file.out.clone(), "--out")?;

    let variant = get_variant(family, &variant_name)?;
    let dataset = load_dataset(family, &data_path)?;
    let spec = ModelSpec::Native(variant);
    let bounds = file.apply_bounds(spec.default_bounds()?)?;
    let mut ga = file.ga.clone();
    if let Some(seed) = args.seed {
        ga.seed = seed;
    }

    let result = calibrate_model(&spec, &dataset, &bounds, &ga)?;

    let doc = ParamsDoc { family, variant: variant_name.clone(), params: result.best_params.clone() };
    doc.save(&out_path)?;
    let curve_path = out_path.with_extension("curve.csv");
    write_curve_csv(&curve_path, &result.curve)?;

    emit(format_args!(
        "Calibrated {} '{}' on {} records over {} generations.",
        family.name(),
        variant_name,
        dataset.len(),
        result.curve.len()
    ));
    for (name, value) in variant.param_names.iter().zip(&result.best_params) {
        emit(format_args!("  {name} = {value}"));
    }
    emit(format_args!("Best loss: {}", result.best_loss));
    emit(format_args!("Wrote {} and {}.", out_path.display(), curve_path.display()));
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let family = resolve_family(args.family, &file)?;
    let params_path = require(args.params, None, "--params")?;
    let data_path = require(args.data, file.data.clone(), "--data")?;

    let doc = ParamsDoc::load(&params_path)?;
    if doc.family != family {
        return Err(trafficlab::Error::Config(format!(
            "params file {} holds {} parameters, not {}",
            params_path.display(),
            doc.family,
            family
        ))
        .into());
    }
    let dataset = load_dataset(family, &data_path)?;

    let bound = if let Some(candidate_path) = &args.candidate {
        let source = std::fs::read_to_string(candidate_path)
            .map_err(|e| trafficlab::Error::io(candidate_path, e))?;
        let candidate = parse_candidate(&source)?;
        if candidate.family != family {
            return Err(trafficlab::Error::Config(format!(
                "candidate {} declares family '{}', not '{}'",
                candidate_path.display(),
                candidate.family,
                family
            ))
            .into());
        }
        let diagnostics = validate_candidate(&candidate);
        if !diagnostics.is_ok() {
            return Err(trafficlab::Error::CandidateInvalid(diagnostics.to_string()).into());
        }
        BoundModel::from_candidate(&candidate, &doc.params)?
    } else {
        // The arg group guarantees a variant when no candidate is given.
        let variant = get_variant(family, args.variant.as_deref().unwrap_or("baseline"))?;
        BoundModel::from_native(variant, &doc.params)?
    };

    let report = evaluate(&bound, &dataset, &file.thresholds)?;
    emit(format_loss_block(&report, false));
    if let Some(out) = &args.out {
        let text = serde_json::to_string_pretty(&report).expect("report serialize");
        std::fs::write(out, text + "\n").map_err(|e| trafficlab::Error::io(out, e))?;
        emit(format_args!("Wrote {}.", out.display()));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_improve(args: ImproveArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let family = resolve_family(args.family, &file)?;
    let data_path = require(args.data, file.data.clone(), "--data")?;
    let out_path = require(args.out, file.out.clone(), "--out")?;

    let trial_config = file.trial_config(family);
    let dataset = load_dataset(family, &data_path)?;
    let corpus = match &file.corpus_dir {
        Some(dir) => trafficlab::agent::retrieval::CorpusIndex::from_dir(dir)?,
        None => trafficlab::agent::retrieval::CorpusIndex::default(),
    };
    let templates = match &file.prompts_dir {
        Some(dir) => trafficlab::agent::prompts::PromptSet::from_dir(dir)?,
        None => trafficlab::agent::prompts::PromptSet::defaults(),
    };
    let mut backend = make_backend(&args.backend, &file)?;
    let mut sink = JsonlSink::create(&out_path)?;

    let log = match agent::run_trial(
        &trial_config,
        &dataset,
        &corpus,
        &templates,
        backend.as_mut(),
        &mut sink,
    ) {
        Ok(log) => log,
        Err(err) => {
            eprintln!("trial aborted; partial log preserved at {}", out_path.display());
            return Err(err.into());
        }
    };

    emit(render_trial(&log));
    emit(format_args!("Wrote {}.", out_path.display()));
    match log.status {
        Some(TrialStatus::ImprovedModelFound) => Ok(ExitCode::SUCCESS),
        _ => Ok(ExitCode::from(3)),
    }
}

fn make_backend(spec: &str, file: &FileConfig) -> Result<Box<dyn ChatBackend>, CliError> {
    if spec == "live" {
        let endpoint = file.backend.endpoint.clone().ok_or_else(|| {
            CliError::Usage(
                "missing `[backend] endpoint` in the config file for --backend live".into(),
            )
        })?;
        Ok(Box::new(HttpBackend::new(endpoint)?))
    } else if let Some(path) = spec.strip_prefix("replay:") {
        Ok(Box::new(ReplayBackend::from_path(Path::new(path))?))
    } else {
        Err(CliError::Usage(format!(
            "--backend must be `live` or `replay:<transcript>`, got `{spec}`"
        )))
    }
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode, CliError> {
    let events = agent::read_trial_log(&args.trial)?;
    let log = TrialLog::from_events(events)?;
    emit(render_trial(&log));
    Ok(ExitCode::SUCCESS)
}
