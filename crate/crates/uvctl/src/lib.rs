//! Scenario-driven front end for `uvctl-core`.

pub mod commands;
pub mod model;
pub mod output;
pub mod scenario;

use clap::{Parser, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<uvctl_core::Error> for CliError {
    fn from(e: uvctl_core::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Assemble the coupling matrices and dump them as JSON.
    Matrices,
    /// Integrate the vehicle under the scenario's controls.
    Simulate,
    /// Evaluate the controllability rank conditions.
    RankCheck,
    /// Solve the local steering problem.
    Steer,
    /// Compare panel-method matrices against closed forms.
    BemVerify,
}

#[derive(Debug, Parser)]
#[command(name = "uvctl", version, about = "Underwater vehicle with flow-through controls")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory (default: `[output] dir`, else the current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Panel refinement level, overriding `[mesh] refine`.
    #[arg(long)]
    pub refine: Option<u32>,
    /// Density scale, overriding `[density] lambda_scale`.
    #[arg(long = "lambda-scale")]
    pub lambda_scale: Option<f64>,
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let mut sc = scenario::Scenario::load(&args.scenario)?;
    if let Some(r) = args.refine {
        sc.mesh.refine = r;
    }
    if let Some(l) = args.lambda_scale {
        sc.density.lambda_scale = l;
    }
    sc.validate()?;
    let out = args.out.clone().or_else(|| sc.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("--out {}: {e}", out.display())))?;
    match args.command {
        Command::Matrices => commands::matrices(&sc, &out),
        Command::Simulate => commands::simulate(&sc, &out),
        Command::RankCheck => commands::rank_check(&sc, &out),
        Command::Steer => commands::steer(&sc, &out),
        Command::BemVerify => commands::bem_verify(&sc, &out),
    }
}
