//! `stablescale`: validate configs, simulate, estimate averaged drifts and run
//! convergence experiments.
//!
//! Exit codes: 0 ok, 1 validation or verdict failure (including configuration
//! errors), 2 usage, 3 I/O.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stablescale_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "stablescale",
    version,
    about = "Slow-fast averaging experiments with alpha-stable noise"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps worker threads.
    #[arg(long, global = true, env = "STABLESCALE_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Replace existing output files.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the structural assumptions and print one verdict per check.
    Validate,
    /// Simulate slow-fast trajectories to CSV.
    Simulate {
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        trajectories: usize,
    },
    /// Estimate an averaged drift at one point.
    Average {
        #[arg(long, value_enum, default_value = "evolution")]
        kind: KindArg,
        /// Time argument of the evolution average (ignored by the other kinds).
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// `initial`, `zero`, or a trajectory CSV whose last row supplies x.
        #[arg(long, default_value = "initial")]
        x_from: String,
    },
    /// Strong-error sweep over eps with a rate fit.
    Converge {
        /// 1: evolution average, 2: periodic average, 3: asymptotic average with the composite bound.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        theorem: u8,
        #[arg(long, value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
        #[arg(long)]
        p: Option<f64>,
        /// Coupled pairs per eps.
        #[arg(short = 'M', long = "pairs")]
        pairs: Option<usize>,
    },
    /// Moment, increment, auxiliary-gap and contraction sweeps.
    Lemmas,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindArg {
    Evolution,
    Periodic,
    Asymptotic,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    /// A check or verdict failed; the report was still written.
    Verdict,
    Usage(String),
    Invalid(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            Error::Parse { .. } | Error::Domain(_) | Error::Dimension { .. } => Failure::Usage(e.to_string()),
            Error::Config(_) | Error::Unsupported(_) => Failure::Invalid(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict) => ExitCode::from(1),
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
