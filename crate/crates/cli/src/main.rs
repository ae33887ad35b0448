//! `trimode` command-line front end.
//!
//! Exit status: 0 on success, 1 when a run completes but misses its
//! target (fidelity target, roundtrip floor), 2 on bad arguments, bad
//! configs or malformed input files.

mod artifact;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "trimode", version, about = "Simulator and pulse compiler for a driven three-mode chi(2) cavity")]
pub struct Cli {
    /// TOML run config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List charge sectors and their bases.
    Sectors {
        #[arg(long)]
        k_max: Option<usize>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Two-stage pulse synthesis for a registry gate or a spec file.
    Synthesize {
        #[arg(long, conflicts_with = "spec")]
        gate: Option<String>,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Propagate a state through a pulse file and record populations.
    Simulate {
        #[arg(long)]
        pulse: Option<PathBuf>,
        /// Initial basis state `n_a,n_b,n_c`.
        #[arg(long)]
        state: Option<String>,
        #[arg(long)]
        record_every: Option<f64>,
    },
    /// Error-correction experiments.
    Qec {
        #[arg(value_enum)]
        experiment: QecExperiment,
        /// Roundtrip trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Hardware figure of merit.
    Fom {
        /// Built-in parameter set, used when the config has no `[fom]`.
        #[arg(long, value_enum)]
        scenario: Option<Scenario>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum QecExperiment {
    Roundtrip,
    Lifetime,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scenario {
    LithiumNiobate,
    Projected,
}

/// How a command ended, beyond plain success.
pub enum Outcome {
    Done,
    TargetMissed(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::TargetMissed(msg)) => {
            eprintln!("target not met: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
