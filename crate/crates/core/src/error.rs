//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input value violates a contract precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A requested radius or point lies outside the landscape's domain box.
    #[error("domain exceeded: {0}")]
    DomainExceeded(String),

    /// A grid allocation would exceed the configured cell budget.
    #[error("resource limit: {0}")]
    Resource(String),

    /// The input is structurally degenerate (e.g. an all-plateau field).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A chain produced a non-finite or runaway iterate.
    #[error("chain diverged at iteration {k} (|x| = {norm:.3e}); step size too large for the gradient's Lipschitz bound")]
    Divergence { k: u64, x: Vec<f64>, norm: f64 },

    /// Too few usable data points for a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The operation is not implemented for this input shape.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
