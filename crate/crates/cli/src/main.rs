use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use siclop::experiment::{
    self, bench, generated_scenarios, mean_score, run_eval, run_training, ExperimentConfig, ExperimentError,
    MetricsRow, MetricsWriter, TrainingEvent,
};
use siclop::model::{self, CheckpointError, ModelParams};
use siclop::replay::{ReplayError, ReplayLog};
use siclop::scenario::{self, ScenarioError};
use siclop::trainer::PlannerKind;

#[derive(Parser)]
#[command(name = "siclop", version, about = "Multi-agent grid planning: self-play training, evaluation and timing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Self-play training; writes per-episode metrics and checkpoints.
    Train(Common),
    /// Planning-only episodes on a scenario file or generated scenarios.
    Eval(Common),
    /// Times individual plan calls.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Number of plan calls.
        #[arg(long, default_value_t = 200)]
        calls: usize,
    },
    /// Writes generated scenarios to a file.
    Scenarios {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
}

#[derive(Args)]
struct Common {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint to write (train) or read (eval, bench).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Scenario file for eval; without it `episodes` scenarios are generated.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    planner: Option<PlannerKind>,
    /// Output file: metrics CSV, or the scenario file for `scenarios`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(experiment::ConfigError::Io { path, source }) => {
                CliError::Io(format!("{}: {source}", path.display()))
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

fn scenario_error(path: &Path, e: ScenarioError) -> CliError {
    match e {
        ScenarioError::Io(e) => io_err(path)(e),
        other => CliError::Config(format!("{}: {other}", path.display())),
    }
}

fn replay_error(path: &Path, e: ReplayError) -> CliError {
    match e {
        ReplayError::Io(e) => io_err(path)(e),
        other => CliError::Config(format!("{}: {other}", path.display())),
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut c = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(ExperimentError::from)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        c.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        c.jobs = jobs;
    }
    if let Some(planner) = common.planner {
        c.planner = planner;
    }
    if let Some(out) = &common.out {
        c.metrics = out.clone();
    }
    if let Some(ckpt) = &common.checkpoint {
        c.checkpoint = ckpt.clone();
    }
    c.validate().map_err(ExperimentError::from)?;
    Ok(c)
}

fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<(), CliError> {
    std::fs::write(path, model::save(params)).map_err(io_err(path))
}

fn read_checkpoint(path: &Path, config: &ExperimentConfig) -> Result<ModelParams, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    model::load_expecting(&bytes, &config.model_config())
        .map_err(|e: CheckpointError| CliError::Config(format!("{}: {e}", path.display())))
}

fn metrics_writer(path: &Path) -> Result<MetricsWriter<BufWriter<File>>, CliError> {
    Ok(MetricsWriter::new(BufWriter::new(File::create(path).map_err(io_err(path))?)))
}

fn summarize(rows: &[MetricsRow]) -> String {
    let n = rows.len().max(1) as f64;
    let total = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    format!(
        "episodes {}  mean score/agent {:.3}  collisions {:.2}  oob {:.2}  goals {:.2}  ms/action {:.1}",
        rows.len(),
        mean_score(rows),
        total(|r| f64::from(r.collisions)),
        total(|r| f64::from(r.oob)),
        total(|r| f64::from(r.goals)),
        total(|r| r.ms_per_action),
    )
}

fn train(common: &Common) -> Result<(), CliError> {
    let config = load_config(common)?;
    let mut writer = metrics_writer(&config.metrics)?;
    let mut replay = match &config.replay_log {
        Some(p) => Some((ReplayLog::open(p).map_err(|e| replay_error(p, e))?, p.clone())),
        None => None,
    };
    let mut failure: Option<CliError> = None;
    let outcome = run_training(&config, |event| {
        if failure.is_some() {
            return;
        }
        let result = match event {
            TrainingEvent::Episode(row, record) => {
                eprintln!(
                    "episode {:>4}  score {:>7.3}  collisions {}  oob {}  goals {}",
                    row.episode, row.mean_score, row.collisions, row.oob, row.goals
                );
                let logged = match &mut replay {
                    Some((log, p)) => log.append(record).map_err(|e| replay_error(p, e)),
                    None => Ok(()),
                };
                logged.and_then(|()| writer.write(row).map_err(io_err(&config.metrics)))
            }
            TrainingEvent::Checkpoint { episodes, params } => {
                let path = if episodes == config.episodes {
                    config.checkpoint.clone()
                } else {
                    let mut p = config.checkpoint.clone().into_os_string();
                    p.push(format!(".{episodes}"));
                    PathBuf::from(p)
                };
                write_checkpoint(&path, params)
            }
        };
        if let Err(e) = result {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    writer.finish().map_err(io_err(&config.metrics))?;
    println!("{}", summarize(&outcome.rows));
    println!("checkpoint written to {}", config.checkpoint.display());
    Ok(())
}

fn maybe_params(common: &Common, config: &ExperimentConfig) -> Result<Option<ModelParams>, CliError> {
    match (&common.checkpoint, config.planner) {
        (Some(path), _) => read_checkpoint(path, config).map(Some),
        (None, PlannerKind::Siclop) => Err(CliError::Config("the siclop planner needs --checkpoint".into())),
        (None, _) => Ok(None),
    }
}

fn eval(common: &Common) -> Result<(), CliError> {
    let config = load_config(common)?;
    let params = maybe_params(common, &config)?;
    let scenarios = match &common.scenarios {
        Some(path) => scenario::load_scenarios(path).map_err(|e| scenario_error(path, e))?,
        None => generated_scenarios(&config, config.episodes).map_err(ExperimentError::from)?,
    };
    let rows = run_eval(&config, params.as_ref(), &scenarios)?;
    let mut writer = metrics_writer(&config.metrics)?;
    for row in &rows {
        writer.write(row).map_err(io_err(&config.metrics))?;
    }
    writer.finish().map_err(io_err(&config.metrics))?;
    println!("{}  planner {}", summarize(&rows), config.planner);
    Ok(())
}

fn run_bench(common: &Common, calls: usize) -> Result<(), CliError> {
    let config = load_config(common)?;
    let params = maybe_params(common, &config)?;
    let report = bench(&config, params.as_ref(), calls)?;
    println!(
        "planner {}  calls {}  mean {:.2} ms  p50 {:.2} ms  p99 {:.2} ms  max {:.2} ms  fallbacks {}",
        config.planner,
        report.calls(),
        report.mean_ms(),
        report.quantile_ms(0.5),
        report.quantile_ms(0.99),
        report.max_ms(),
        report.fallbacks
    );
    Ok(())
}

fn write_scenarios(common: &Common, count: usize) -> Result<(), CliError> {
    let config = load_config(common)?;
    let states = generated_scenarios(&config, count).map_err(ExperimentError::from)?;
    let text = scenario::format_scenarios(&states);
    match &common.out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path)),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => train(c),
        Command::Eval(c) => eval(c),
        Command::Bench { common, calls } => run_bench(common, *calls),
        Command::Scenarios { common, count } => write_scenarios(common, *count),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
