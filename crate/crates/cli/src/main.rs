//! `algest`: derive, simulate, estimate, sweep and demodulate from a JSON run config.
//!
//! Exit codes: 0 ok, 1 input or schema error, 2 not identifiable,
//! 3 degenerate numerics (guard-dominated estimates).

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use algest_core::Error;

#[derive(Parser)]
#[command(
    name = "algest",
    version,
    about = "Algebraic parameter estimation from sampled signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print and save the estimator plan and identifiability report.
    Derive(Common),
    /// Sample the carrier plus noise on the configured grid.
    Simulate(Common),
    /// Run the estimator on a signal CSV.
    Estimate(Common),
    /// Monte-Carlo error sweep.
    Sweep(Common),
    /// Symbol error rates of the algebraic and correlation receivers.
    Demod(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Artifact directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trials per sweep cell, overriding the config.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Print nothing but errors.
    #[arg(long)]
    pub quiet: bool,
}

/// Process outcome other than success.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NOT_IDENTIFIABLE: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotIdentifiable(_) => EXIT_NOT_IDENTIFIABLE,
            Error::DivisorTooSmall { .. } | Error::NumericalSingularity { .. } => EXIT_DEGENERATE,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own code for usage errors is 2, which is reserved here
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (run, common): (commands::Handler, Common) = match cli.command {
        Command::Derive(c) => (commands::derive, c),
        Command::Simulate(c) => (commands::simulate, c),
        Command::Estimate(c) => (commands::estimate, c),
        Command::Sweep(c) => (commands::sweep, c),
        Command::Demod(c) => (commands::demod, c),
    };
    let result = commands::Ctx::new(&common).and_then(|ctx| run(&ctx));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
