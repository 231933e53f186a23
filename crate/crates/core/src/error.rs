//! Crate-wide error type.

use crate::markov::ValidationReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Structural mismatch between declared and actual dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A chain failed invariant validation.
    #[error("invalid chain:\n{0}")]
    InvalidChain(ValidationReport),

    /// Fixed-point iteration hit the iteration cap before reaching
    /// tolerance. Carries the last iterate (as `f64` rows) and the residual.
    #[error("fixed-point iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<Vec<f64>>,
    },

    /// Singular linear system in the closed-form solver. Cannot occur for a
    /// valid chain; signals a validation gap.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// Malformed user input (flags, ranges, file contents).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch} (learning rate {learning_rate})")]
    Diverged { epoch: usize, learning_rate: f64 },

    /// A sampled trajectory exceeded the safeguard step cap. Impossible on a
    /// valid chain; the cap guards against validation gaps.
    #[error("trajectory exceeded the {cap}-step cap at state {state}")]
    StepCap { cap: usize, state: usize },

    /// A metric has no defined value on the given records.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
