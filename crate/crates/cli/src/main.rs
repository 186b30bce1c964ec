//! `zenolab`: batch driver for first-detection experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{BuildError, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "zenolab", version, about = "First-detection statistics: stroboscopic vs non-Hermitian monitoring")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the GUE seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write a gnuplot script next to the CSV files.
    #[arg(long, global = true)]
    pub gnuplot: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Detection-time densities per framework.
    Pdf,
    /// Detection probability, mean and variance per (tau, framework).
    Stats,
    /// Zeno-limit data and poles next to their seeds.
    Zeno,
    /// Electrostatic potentials on a grid and their stationary points.
    ElectroGrid,
    /// Infinite-line closed forms and the small-tau series comparison.
    Infline,
    /// Perturbed-return and shifted-protocol epsilon sweeps.
    Perturb,
    /// Acceptance criteria as JSON lines.
    Validate,
}

/// Terminal failure, mapped onto the exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Validation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Validation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Validation(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<zenolab::Error> for Failure {
    fn from(e: zenolab::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Config(c) => c.into(),
            BuildError::Model(m) => m.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("io: {e}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
