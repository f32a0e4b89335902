//! Deterministic variational Gaussian inference with natural-gradient
//! optimizers, continuous-time flow integrators, and numerical checks of the
//! supporting convergence theory.

pub mod data;
pub mod error;
pub mod flow;
pub mod gaussian;
pub mod harness;
pub mod optim;
pub mod oracle;
pub mod theory;

pub use error::{Error, Result};
pub use gaussian::{GaussianParams, MomentEstimates, NaturalState};
pub use oracle::{LossFamily, OracleConfig, ProblemSpec};
