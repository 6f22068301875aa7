//! Command-line entry point.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "cdrscore",
    version,
    about = "Credit scoring from mobile-phone transaction logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for every random choice; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Also write roc.svg and acceptance.svg.
    #[arg(long, global = true)]
    plots: bool,

    /// Also build early/late offset feature files.
    #[arg(long, global = true)]
    offset: bool,

    /// Add train-early, test-late results to the evaluation.
    #[arg(long = "out-of-time", global = true)]
    out_of_time: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic event log, loan table and ground truth.
    Synth,
    /// Ingest, clip and build the feature matrix.
    Featurize,
    /// Fit one model artifact per configured family.
    Train,
    /// Cross-validate the configured families and write the report.
    Evaluate,
    /// Run synth (when configured), featurize, train and evaluate.
    Pipeline,
}

fn threads() -> Result<Option<usize>, Failure> {
    match std::env::var("CDRSCORE_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Config(anyhow::anyhow!(
                "CDRSCORE_THREADS must be a positive integer, got '{v}'"
            ))),
        },
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = threads()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("--config PATH is required")))?;
    let overrides = Overrides {
        seed: cli.seed,
        plots: cli.plots,
        offset: cli.offset,
        out_of_time: cli.out_of_time,
    };
    let config = RunConfig::load(path, &overrides)?;
    match cli.command {
        Command::Synth => commands::synth(&config),
        Command::Featurize => commands::featurize(&config),
        Command::Train => commands::train_models(&config),
        Command::Evaluate => commands::evaluate(&config),
        Command::Pipeline => commands::pipeline(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
