//! Command-line front end: TOML experiment configs in, CSV/JSON artifacts
//! out. See the `cli` chapter of the guide for the config format.

mod commands;
mod config;

pub use config::{EnvironmentSection, ExperimentConfig};

use clap::{Parser, Subcommand};
use std::path::PathBuf;

/// Exit code for validation/config errors.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit code for runtime failures.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "ope-lab",
    about = "Off-policy evaluation experiments: importance-sampling estimators with estimated history-dependent behavior policies",
    version
)]
pub struct Cli {
    /// Path to the experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads (default: logical cores; env OPE_LAB_WORKERS as
    /// fallback).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Replication-count override.
    #[arg(long, global = true)]
    pub replications: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Replicated comparison of the three bandit IS estimators.
    BanditDemo,
    /// Bias/variance/MSE sweep over estimators, history lengths, and sample
    /// sizes.
    Sweep,
    /// History-length selection on a dataset.
    SelectHistory,
    /// Monte Carlo (or closed-form) ground-truth value of the target policy.
    Truth,
    /// Dataset generation only.
    Simulate,
}

/// Runs the CLI; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    run_with(cli)
}

/// Entry point split out for tests.
pub fn run_with(cli: Cli) -> i32 {
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(err: &crate::OpeError) -> i32 {
    use crate::OpeError::*;
    match err {
        NotAProbability { .. } | InvalidSpec(_) | DimensionMismatch(_) | InvalidConfig(_)
        | NotEnoughData(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}
