//! Error type shared across the synthesis and simulation routines.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A schedule or signal has inconsistent dimensions.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    /// Input validation failed (bad horizon, non-PSD weight, malformed JSON, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// A synthesis feasibility test failed at the given time step.
    #[error("synthesis infeasible at step {step}")]
    Infeasible { step: usize },

    /// The bisection could not bracket a feasible performance level.
    #[error("no feasible performance level found below the search cap")]
    UnboundedGamma,

    /// A matrix that must be invertible is singular or too ill-conditioned.
    #[error("singular or ill-conditioned {what} at step {step}")]
    Singular { step: usize, what: String },

    /// A numerical sanity check failed (asymmetry, indefiniteness, ...).
    #[error("numerical check failed: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
