//! Reach control on simplices for affine systems `ẋ = Ax + Bu + a`.
//!
//! The pipeline is: build a [`Simplex`] and an [`AffineSystem`], classify
//! the instance with [`ProblemInstance`], synthesize a [`PwaController`] and
//! check it with [`verify_rcp`].

pub mod analysis;
pub mod catalog;
pub mod error;
pub mod geometry;
pub mod polylin;
pub mod simulation;
pub mod synthesis;

pub use analysis::{
    AffineSystem, EquilibriumSet, NecessaryReport, ProblemInstance, ReachControlIndices, Route,
};
pub use error::{Assumption, ReachError, Result};
pub use geometry::{Cone, Face, Simplex};
pub use simulation::{simulate, verify_rcp, SimOptions, SimulationTrace, TraceStatus, VerificationReport};
pub use synthesis::{AffinePiece, PwaController, SubdivisionRecord, SynthesisOptions};
