//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("cholesky diagonal entry {index} is {value:e}, below the floor of {floor:e}; step size too large or state degenerate")]
    DiagonalCollapse { index: usize, value: f64, floor: f64 },

    #[error("positivity constraint violated at iteration {iter}: {msg}")]
    PositivityViolation { iter: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("theory constants inconsistent: {0}")]
    Theory(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("fetch error: {0}")]
    Fetch(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("integration left the SPD cone at t = {last_valid_time}: {msg}")]
    Integration { last_valid_time: f64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach the optimizer iteration at which a step error occurred.
    pub fn at_iteration(self, iter: usize) -> Error {
        match self {
            Error::PositivityViolation { msg, .. } => Error::PositivityViolation { iter, msg },
            other => other,
        }
    }
}
