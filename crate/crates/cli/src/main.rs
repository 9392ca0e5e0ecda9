//! `wavekin` command-line driver.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "wavekin", version, about = "Wave kinetic laboratory for the cubic NLS on generic tori")]
pub struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "wavekin-out")]
    pub out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Work budget override (enumeration terms for trees and counting).
    #[arg(long, global = true)]
    pub budget: Option<f64>,
    /// Treat non-converged results and failed verdicts as errors (exit 3).
    #[arg(long, global = true)]
    pub strict: bool,
    /// Root seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte Carlo ensemble of the mode equations.
    Simulate,
    /// Tree correlations and the second-order second moment.
    Trees,
    /// Collision values and finite-time kernels.
    Collision,
    /// Lattice point counts.
    Count {
        #[arg(long, value_enum, default_value_t = Method::Fast)]
        method: Method,
    },
    /// Ladder reports: equidistribution, audits, concentration, Strichartz, regimes.
    Report,
    /// Built-in identity checks.
    Check {
        #[arg(value_enum)]
        what: CheckKind,
        /// Largest total order checked.
        #[arg(long = "S", default_value_t = 4)]
        s: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Brute,
    Fast,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Cancellation,
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or input (exit 2).
    Validation(String),
    /// Flagged result under `--strict` (exit 3).
    Flagged(String),
    /// Work budget exceeded (exit 4).
    Budget(String),
    /// Numerical failure during a run (exit 1).
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Flagged(_) => 3,
            Failure::Budget(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Flagged(m) | Failure::Budget(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<wavekin::Error> for Failure {
    fn from(e: wavekin::Error) -> Self {
        match e {
            wavekin::Error::Invalid(_) | wavekin::Error::Unsupported(_) => Failure::Validation(e.to_string()),
            wavekin::Error::Budget { .. } => Failure::Budget(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("io: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut manifest = Manifest::start(&cli);
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: worker pool: {e}");
        }
    }
    let outcome = std::fs::create_dir_all(&cli.out)
        .map_err(Failure::from)
        .and_then(|_| commands::dispatch(&cli, &mut manifest));
    let code = match &outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    };
    if let Err(e) = manifest.finish(&cli.out, code) {
        eprintln!("error: writing manifest: {e}");
    }
    ExitCode::from(code)
}
