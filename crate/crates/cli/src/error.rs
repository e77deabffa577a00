use std::path::PathBuf;

use sirv_core::meanfield::SolveError;
use sirv_core::model::ConfigError;
use sirv_core::sim::SimError;

/// Exit code contract: 2 for anything wrong with the user's inputs
/// (unparseable or invalid config or study file, bad numerical flags),
/// 1 for runtime failures (I/O, solver breakdown, too many failed
/// replicates).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a valid TOML document: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solve(SolveError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Study(#[from] StudyError),
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Config(c) => CliError::Config(c),
            other => CliError::Solve(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } | CliError::Config(_) => 2,
            CliError::Sim(SimError::Config(_)) => 2,
            CliError::Solve(SolveError::BadStep { .. }) | CliError::Solve(SolveError::EmptyGrid) => 2,
            CliError::Study(e) => e.exit_code(),
            _ => 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("n_ladder must be strictly increasing, got {0:?}")]
    LadderNotIncreasing(Vec<usize>),
    #[error("n_ladder must not be empty")]
    LadderEmpty,
    #[error("replicates must be at least 2, got {0}")]
    TooFewReplicates(usize),
    #[error("slope fit needs >= 3 ladder points, got {0}")]
    TooFewPoints(usize),
    #[error("unknown component {0:?}; expected S, F, I or R")]
    UnknownComponent(String),
    #[error("{failed} of {total} replicates failed (more than 10%); study aborted")]
    TooManyFailures { failed: usize, total: usize },
}

impl StudyError {
    pub fn exit_code(&self) -> u8 {
        match self {
            StudyError::TooManyFailures { .. } => 1,
            _ => 2,
        }
    }
}
