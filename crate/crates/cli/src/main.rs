use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use susy_cli::{run, thread_cap, Command, THREADS_ENV};

/// SUSY partner, metric square root and equivalent Hermitian operator pipeline.
#[derive(Debug, Parser)]
#[command(name = "susy-metric", version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cap = match thread_cap(std::env::var(THREADS_ENV).ok().as_deref()) {
        Ok(cap) => cap,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(n) = cap {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("global pool is set once");
    }
    ExitCode::from(run(args.command, &args.config, args.output_dir.as_deref()) as u8)
}
