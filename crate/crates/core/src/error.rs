use std::fmt;

use thiserror::Error;

/// Tags for the structural assumptions an instance must satisfy before the
/// reach control indices can be built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Assumption {
    /// `S ∩ O` is empty or a face of the simplex.
    FaceStructure,
    /// The equilibrium face lies in the exit facet and avoids `v0`.
    A1,
    /// `B ∩ cone(S) = {0}`.
    A2,
    /// Fewer independent admissible input directions than vertices of `G`.
    A3,
    /// Every vertex of `G` admits a nonzero input direction.
    A4,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Assumption::FaceStructure => "face",
            Assumption::A1 => "A1",
            Assumption::A2 => "A2",
            Assumption::A3 => "A3",
            Assumption::A4 => "A4",
        };
        f.write_str(tag)
    }
}

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("degenerate simplex: {0}")]
    DegenerateSimplex(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("face index set is empty")]
    EmptyIndexSet,

    #[error("vertex index {index} out of range for a simplex with {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },

    #[error("point lies outside the simplex (min barycentric coordinate {min_coordinate:.3e})")]
    PointOutsideSimplex { min_coordinate: f64 },

    #[error("point lies outside the controller domain")]
    PointOutsideDomain,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("assumption {tag} violated: {detail}")]
    AssumptionViolated { tag: Assumption, detail: String },

    #[error("construction failed: {0}")]
    ConstructionFailed(String),

    #[error("invariance conditions infeasible at vertex {vertex}")]
    InfeasibleInvariance { vertex: usize },

    #[error("synthesis failed: {0}")]
    SynthesisFailed(String),

    #[error("malformed controller document at line {line}: {message}")]
    Format { line: usize, message: String },
}

impl ReachError {
    pub(crate) fn assumption(tag: Assumption, detail: impl Into<String>) -> Self {
        ReachError::AssumptionViolated {
            tag,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = ReachError> = std::result::Result<T, E>;
