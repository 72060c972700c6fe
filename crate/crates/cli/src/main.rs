//! `bmapinf` command-line interface.
//!
//! Exit status: 0 success, 1 unstable verdict under `stability --strict`,
//! 2 input error, 3 internal check failure. Failures print a JSON error
//! object with a stable `code` on stderr.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use bmapinf::{Execution, QueueSelector};
use clap::{Args, Parser, Subcommand};

use error::CliError;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncommit: ",
    env!("BMAPINF_GIT_COMMIT"),
    "\ntarget: ",
    env!("BMAPINF_TARGET"),
    "\nprofile: ",
    env!("BMAPINF_PROFILE"),
);

#[derive(Debug, Parser)]
#[command(name = "bmapinf", version, long_version = LONG_VERSION, about = "Stability analysis for BMAP/M/inf and MBMAP/M/inf queues")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Absolute tolerance on the row sums of D = D(0) + sum A_v.
    #[arg(long, global = true, env = "BMAPINF_GENERATOR_TOL", default_value_t = bmapinf::model::GENERATOR_TOL)]
    pub generator_tol: f64,

    /// Absolute floor for PGF identity residuals.
    #[arg(long, global = true, env = "BMAPINF_PGF_TOL", default_value_t = 1e-8)]
    pub pgf_tol: f64,

    /// Run data-parallel work on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

impl Cli {
    pub fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file and report its background chain.
    Validate {
        #[command(flatten)]
        model: ModelArg,
        /// Print the normalized model file instead of the summary.
        #[arg(long)]
        echo: bool,
    },
    /// Log-moment stability verdict.
    Stability {
        #[command(flatten)]
        model: ModelArg,
        /// Exit with status 1 when the model is unstable.
        #[arg(long)]
        strict: bool,
    },
    /// Drift vectors and a Foster certificate.
    Drift {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value = "q1")]
        queue: QueueSelector,
        /// Levels k = 0..=R in the drift table.
        #[arg(long, default_value_t = 50)]
        range: u64,
        /// Levels checked by the certificate (default 10K + 100).
        #[arg(long)]
        verified_range: Option<u64>,
        /// CSV of (k, min component of y(k)).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Truncated stationary distribution with cross-checks.
    Solve {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        cap: usize,
        #[arg(long, default_value = "q1")]
        queue: QueueSelector,
        /// Sample points for the PGF identity.
        #[arg(long, value_delimiter = ',', default_values_t = bmapinf::ctmc::DEFAULT_Z_SAMPLES)]
        z: Vec<f64>,
        /// CSV of (level, probability).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Event-driven simulation of the original queue.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Three-queue coupling with the sandwich check at every epoch.
    Couple {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Verdict, certificate, stationary solve and simulation in one report.
    Report {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        cap: usize,
        #[arg(long, default_value = "original")]
        queue: QueueSelector,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        burn_in: f64,
    },
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model file (JSON).
    #[arg(long = "model")]
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub horizon: f64,
    /// Seed of the first replication; replication r uses seed + r.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replications: u64,
    #[arg(long, default_value_t = 0.0)]
    pub burn_in: f64,
    /// CSV trace of the first replication.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Rows kept in the trace CSV.
    #[arg(long, default_value_t = 100_000)]
    pub trace_rows: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(status) => ExitCode::from(status),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.status as u8)
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
