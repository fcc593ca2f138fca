use std::path::PathBuf;

use reachctl_core::ReachError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },

    #[error("plotting needs a planar instance, got dimension {0}")]
    UnsupportedDimension(usize),

    #[error("{0}")]
    Core(#[from] ReachError),

    #[error("assumption check failed: {0}")]
    AssumptionFailed(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Read { .. } => 2,
            CliError::Core(e) => match e {
                ReachError::Format { .. }
                | ReachError::DegenerateSimplex(_)
                | ReachError::DimensionMismatch(_)
                | ReachError::InvalidSystem(_)
                | ReachError::PointOutsideSimplex { .. }
                | ReachError::PointOutsideDomain => 2,
                ReachError::AssumptionViolated { .. } | ReachError::InfeasibleInvariance { .. } => 3,
                _ => 4,
            },
            CliError::AssumptionFailed(_) => 3,
            CliError::VerificationFailed(_) => 5,
            CliError::Write { .. } | CliError::UnsupportedDimension(_) => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
