//! `swprune`: small-world structural pruning from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<swprune::Error> for CliError {
    fn from(e: swprune::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "swprune", version, about = "Small-world structural pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Watts-Strogatz L/C curve of a ring lattice under rewiring
    WsCurve {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// Comma-separated p values (default: 0 and a log grid 1e-4..1)
        #[arg(long, value_delimiter = ',')]
        p_list: Option<Vec<f64>>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV file
        #[arg(long)]
        out: PathBuf,
    },
    /// Structure an initialised network and write the masked checkpoint
    Structure {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train under fixed masks (from a structured checkpoint, or structure first)
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Test-split accuracy of a checkpoint
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run config or bare dataset spec (JSON)
        #[arg(long)]
        data: PathBuf,
    },
    /// Train one pipeline per θ (nested masks) or per p
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            conflicts_with = "p_list",
            required_unless_present = "p_list"
        )]
        theta_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        p_list: Option<Vec<f64>>,
        /// Accuracy tolerance when choosing p
        #[arg(long, default_value_t = 0.005)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Density CSV, L/C CSV and per-layer heat maps of a checkpoint
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Calibration data for conv-layer L/C
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = swprune::harness::configure_threads()
        .map_err(CliError::from)
        .and_then(|_| commands::dispatch(cli.command));
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
