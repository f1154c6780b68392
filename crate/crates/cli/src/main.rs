//! `mflow` command-line entry point.
//!
//! Exit codes: 0 on success, 2 for invalid input (bad flags, unknown config
//! keys, impossible settings), 1 for failures while running.

mod commands;
mod settings;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mflow", version, about = "Flow matching and DDIM policies on Euclidean space and SO(2)/SO(3)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations for the reach task.
    GenDemos(Common),
    /// Train a reach policy from demonstrations, or the circle toy field.
    Train(Common),
    /// Roll out a trained policy (or the expert replay) and record per-episode results.
    Eval(Common),
    /// Evaluate trained policies at several inference step counts.
    SweepK(Common),
    /// Paired comparison of the Euclidean and manifold formulations.
    CompareFormulations(Common),
    /// Train and evaluate the circle toy experiment.
    Circle(Common),
}

/// Flags shared by every command; each also maps to a config key.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Key-value config file (`key = value` per line, `#` comments).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Inference steps; a comma-separated list for `sweep-k`.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long, value_parser = ["cfm", "ddim"])]
    pub objective: Option<String>,
    #[arg(long, value_parser = ["euclidean", "manifold"])]
    pub formulation: Option<String>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::GenDemos(c) => ("gen-demos", c),
        Command::Train(c) => ("train", c),
        Command::Eval(c) => ("eval", c),
        Command::SweepK(c) => ("sweep-k", c),
        Command::CompareFormulations(c) => ("compare-formulations", c),
        Command::Circle(c) => ("circle", c),
    };
    match commands::run(name, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
