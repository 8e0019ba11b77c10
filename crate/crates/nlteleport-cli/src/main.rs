//! Batch experiment runner: deterministic and probabilistic sweeps,
//! parameter optimization with persistence, and the numerical invariant
//! suite. Emits CSV / flat config records for external plotting.

mod common;
mod deterministic;
mod optimize_cmd;
mod probabilistic;
mod validate;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use nlteleport::error::Error;

#[derive(Parser)]
#[command(
    name = "nlteleport",
    version,
    about = "Nonlinear-squeezing teleportation simulator"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimized analytic sweep over schemes, ancillas and squeezing budgets.
    DeterministicSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Post-selection curves from the exact Fock backend.
    ProbabilisticSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the per-mode Fock cutoff from the config file.
        #[arg(long)]
        cutoff: Option<usize>,
    },
    /// Full-parameter optimization; stores a replayable parameter record.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the parameter record and the restart log.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Runs the numerical invariant suite.
    Validate {
        #[arg(long)]
        cutoff: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized; --workers ignored");
        }
    }
    let result = match cli.command {
        Command::DeterministicSweep { config, out, seed } => {
            deterministic::run(&config, &out, seed)
        }
        Command::ProbabilisticSweep {
            config,
            out,
            seed,
            cutoff,
        } => probabilistic::run(&config, &out, seed, cutoff),
        Command::Optimize { config, out, seed } => optimize_cmd::run(&config, &out, seed),
        Command::Validate { cutoff } => validate::run(cutoff),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
