//! Configuration-driven experiments on the driven-chain decoherence model:
//! single runs, parameter sweeps, the built-in validation suite, and the
//! information-backflow analysis.

// `!(x > 0.0)`-style guards reject NaN as well; keep them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;
mod output;
mod runner;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("validation failed")]
    Validation,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
            CliError::Validation => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dephasim",
    version,
    about = "Decoherence of a central qubit coupled to a linearly driven Ising ring, with optional drive-field noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration entry, e.g. --set model.n=200 or
    /// --set sweep.xi=[0.005,0.01]. Repeatable; values are TOML-typed.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Master seed override (ensemble and validation streams).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread count (default: all cores). Results are identical for
    /// any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory override.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write series.csv / modes.csv.
    Run,
    /// Run a parameter grid and write scaling.csv / fits.json.
    Sweep,
    /// Execute the built-in cross-validation suite.
    Validate,
    /// Compute the information-backflow measure of one configuration.
    Nonmarkov,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::Validation) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run_cli(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed = seed;
        cfg.validate.seed = seed;
    }
    if let Some(dir) = &cli.output {
        cfg.output.dir = dir.display().to_string();
    }
    let out_dir = PathBuf::from(&cfg.output.dir);

    match cli.command {
        Command::Run => commands::run(cfg, &out_dir),
        Command::Sweep => commands::sweep(cfg, &out_dir),
        Command::Nonmarkov => commands::nonmarkov(cfg, &out_dir),
        Command::Validate => {
            if validate::validate(cfg)? {
                Ok(())
            } else {
                Err(CliError::Validation)
            }
        }
    }
}
