use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use sirv_core::model::TruncationMode;

#[derive(Parser, Debug)]
#[command(
    name = "sirv",
    version,
    about = "Spatial SIR epidemics with individually varying infectivity: \
             exact event-driven runs, limit solves, convergence studies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and validate an experiment config, reporting derived
    /// quantities.
    Validate {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the stochastic simulator once and write the event log,
    /// snapshot pairings and a manifest.
    Sim {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $SIRV_OUT, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the rate mode from the config.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Base probe nodes per axis for the denominator floor estimate.
        #[arg(long, default_value_t = 9)]
        grid: usize,
    },
    /// Solve the deterministic limit system and write the solution,
    /// paired observables and an a priori bounds report.
    Meanfield {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Grid nodes per axis.
        #[arg(long, default_value_t = 32)]
        grid: usize,
        /// Time step.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Output directory (default: $SIRV_OUT, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the rate mode from the config.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Also solve at dt/2 and dt/4 and write a step-halving ratio
        /// report.
        #[arg(long)]
        halving: bool,
        /// Also run the independent scalar oracle (constant kernel,
        /// uniform densities only) and write its series and sup-error.
        #[arg(long)]
        oracle: bool,
    },
    /// Run an N-ladder convergence study against a shared limit solution.
    Converge {
        /// Study spec (TOML); its `config` key names the experiment
        /// config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: $SIRV_OUT, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for replicates; 0 means one per core. Output
        /// bytes do not depend on this.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Raw,
    Truncated,
}

impl From<ModeArg> for TruncationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Raw => TruncationMode::Raw,
            ModeArg::Truncated => TruncationMode::Truncated,
        }
    }
}
