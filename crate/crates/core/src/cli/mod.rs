//! Command-line front end: `simulate <experiment> [--config FILE] [--out DIR]
//! [--seed N] [--override key=value]… [--particles N]`.
//!
//! Exit status: 0 when every invariant check passes, 1 when a check fails,
//! 2 for configuration or output-path errors (nothing is written), 3 for a
//! numerical fault during the run.

pub mod config;
pub mod csv;
pub mod run;
pub mod svg;

use std::path::PathBuf;

use clap::Parser;
use thiserror::Error;

pub use config::{ConfigFile, Experiment};
pub use run::{run, Check, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("numerical fault: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "simulate", about = "Entropy experiments on invariant measures")]
pub struct Args {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Flat TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override one configuration key; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Shorthand for `--override particles=N`.
    #[arg(long)]
    pub particles: Option<usize>,
}

impl Args {
    /// File overrides followed by the dedicated flags, which win.
    pub fn all_overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(n) = self.particles {
            o.push(format!("particles={n}"));
        }
        o
    }
}

/// Run the parsed command and return the process exit status.
pub fn execute(args: &Args) -> i32 {
    match run(args) {
        Ok(report) => {
            println!("{}", report.summary_line());
            if report.all_passed() {
                EXIT_OK
            } else {
                for c in report.checks.iter().filter(|c| !c.passed) {
                    eprintln!("FAIL {}: {}", c.name, c.detail);
                }
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
