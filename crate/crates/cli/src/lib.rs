//! Command-line front end: runs the pipeline from a JSON config and writes
//! CSV and JSON outputs plus a digest manifest.

pub mod artifacts;
pub mod config;
pub mod pipeline;

use std::path::Path;

use clap::ValueEnum;
use susy_core::ErrorClass;

pub use artifacts::{Artifacts, MANIFEST};
pub use config::{Resolved, RunConfig};
pub use pipeline::{execute, Outcome};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SUSY_METRIC_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Spectrum,
    Partner,
    Metric,
    Reconstruct,
    Oracle,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Partner => "partner",
            Command::Metric => "metric",
            Command::Reconstruct => "reconstruct",
            Command::Oracle => "oracle",
            Command::All => "all",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] susy_core::Error),
    #[error("writing outputs: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => EXIT_VALIDATION,
            CliError::Core(e) => match e.class() {
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            },
        }
    }
}

/// Loads the config, runs `command` and writes its outputs. Returns the exit
/// status; diagnostics go to standard error. Nothing is written unless the
/// whole computation finishes.
pub fn run(command: Command, config: &Path, output_override: Option<&Path>) -> i32 {
    let result = RunConfig::load(config, output_override).and_then(|cfg| {
        let outcome = execute(command, &cfg)?;
        outcome.artifacts.write_to(&cfg.output_dir, command.name(), cfg.raw.seed)?;
        Ok(outcome.failures)
    });
    match result {
        Ok(failures) if failures.is_empty() => EXIT_PASS,
        Ok(failures) => {
            for f in failures {
                eprintln!("error: {f}");
            }
            EXIT_NUMERICAL
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Reads the worker cap from the environment; `None` leaves rayon's default.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}
