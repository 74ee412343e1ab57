//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by geometry, learners, environments, metrics and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// An iterative solver stopped at its iteration cap before reaching tolerance.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverFailure { residual: f64, iterations: usize },

    /// A rank-one update would divide by a vanishing denominator.
    #[error("degenerate rank-one update (denominator {denominator:e})")]
    DegenerateUpdate { denominator: f64 },

    /// A learner or environment was driven into a state it cannot handle.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Configuration is missing a required value or is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A finite environment ran out of rounds.
    #[error("end of horizon: round {round} requested but the horizon is {horizon}")]
    EndOfHorizon { round: usize, horizon: usize },

    /// Too many trials of an experiment failed.
    #[error("experiment failed: {failed} of {trials} trials failed ({first_error})")]
    Experiment { failed: usize, trials: usize, first_error: String },

    /// Filesystem or serialization failure while emitting results.
    #[error("i/o error: {0}")]
    Io(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
