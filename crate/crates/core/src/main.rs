use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trackq::cli::{self, Command};
use trackq::config::RunConfig;

/// Benchmark tracking with capital injection: closed forms, simulation,
/// q-learning, diagnostics and backtests.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration; built-in reference run when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Closed-form constants and value tables.
    Solve,
    /// Simulate state paths.
    Simulate,
    /// Run the offline q-learning algorithm.
    Train,
    /// Martingale orthogonality and convergence diagnostics.
    Diagnose,
    /// Track a benchmark on price data.
    Backtest,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRACKQ_LOG", "info")).init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        },
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let command = match args.command {
        Cmd::Solve => Command::Solve,
        Cmd::Simulate => Command::Simulate,
        Cmd::Train => Command::Train,
        Cmd::Diagnose => Command::Diagnose,
        Cmd::Backtest => Command::Backtest,
    };
    match cli::run(command, &config, &args.out) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
