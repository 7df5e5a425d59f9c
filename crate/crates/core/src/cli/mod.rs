//! Command-line driver: data generation, simulation runs, oracle solves and
//! gap post-processing.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::controller::ControllerError;
use crate::cuts::CutError;
use crate::oracle::OracleError;
use crate::scenario::ScenarioError;
use crate::stage::StageError;

pub use config::{Overrides, RunConfig, Source};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, missing or malformed inputs, cap exceeded.
    #[error("{0}")]
    Input(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        match e {
            StageError::InvalidData(_) | StageError::DimensionMismatch(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<CutError> for CliError {
    fn from(e: CutError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<ControllerError> for CliError {
    fn from(e: ControllerError) -> Self {
        match e {
            ControllerError::TargetsOutsideBox => CliError::Input(e.to_string()),
            ControllerError::Stage(s) => s.into(),
            ControllerError::Cut(c) => c.into(),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::CapExceeded { .. } | OracleError::EmptyHistory => {
                CliError::Input(e.to_string())
            }
            OracleError::Stage(s) => s.into(),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hmpc", version, about = "Hierarchical MPC for periodic systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the scenario pool (pool.json) and a sampled series (data.csv)
    GenData(Overrides),
    /// Run the hierarchical scheme and write metrics, targets, trajectories and cuts
    Run(Overrides),
    /// Solve the periodic sample-average problem on the run's history
    Oracle(Overrides),
    /// Fill in the overall gap of a finished run from exact expected costs
    Gap {
        run_dir: PathBuf,
        /// Pool defining the expectation; defaults to the run's pool.json
        #[arg(long)]
        pool: Option<PathBuf>,
    },
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let load = |ov: &Overrides| RunConfig::load(ov).map_err(CliError::Input);
    match cli.command {
        Command::GenData(ov) => commands::gen_data(&load(&ov)?),
        Command::Run(ov) => commands::run(&load(&ov)?),
        Command::Oracle(ov) => commands::oracle(&load(&ov)?),
        Command::Gap { run_dir, pool } => commands::gap(&run_dir, pool.as_deref()),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
