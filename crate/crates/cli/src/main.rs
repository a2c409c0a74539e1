//! `relu-rank-lab`: simulate gradient flow, build explicit constructions and
//! run the Monte Carlo experiments.
//!
//! Exit codes: 0 success, 1 a checked property failed, 2 usage or
//! configuration error, 3 numeric divergence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod construct;
mod experiment;
mod simulate;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relu_rank::Error;

#[derive(Parser)]
#[command(name = "relu-rank-lab", version, about = "Low-rank bias experiments for small ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate gradient flow from a random or given initialization.
    Simulate(simulate::Args),
    /// Build and verify an explicit network.
    Construct {
        #[command(subcommand)]
        which: construct::Which,
    },
    /// Run a Monte Carlo experiment from a JSON config.
    Experiment(experiment::Args),
}

/// A command outcome that maps onto the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    Usage(String),
    Diverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite => Failure::Diverged(e.to_string()),
            Error::Infeasible(_) => Failure::Check(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

pub type CmdResult = Result<(), Failure>;

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CmdResult {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate::run(args),
        Command::Construct { which } => construct::run(which),
        Command::Experiment(args) => experiment::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Diverged(m)) => {
            eprintln!("diverged: {m}");
            ExitCode::from(3)
        }
    }
}
