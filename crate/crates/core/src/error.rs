//! Error type shared by all modules of the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Malformed input: failed preconditions, bad tables, degenerate data.
    #[error("validation error: {0}")]
    Validation(String),

    /// Rauzy-Veech induction is undefined on the boundary lambda_m = lambda_{pi^-1 m}.
    #[error("non-inducible: the two candidate intervals have equal length")]
    NonInducible,

    /// A ratio in the zippered-rectangle metric has a zero denominator.
    #[error("metric undefined at this pair: {0}")]
    MetricUndefined(String),

    /// An iterative solver hit its iteration cap before reaching tolerance.
    #[error("convergence failure after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// A configurable resource cap (class size, enumeration budget, ...) was exceeded.
    #[error("budget exceeded: {0}")]
    Budget(String),

    /// A requested fit has no usable data (no decay, too few points).
    #[error("no exponential fit: {0}")]
    NoFit(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn budget(msg: impl Into<String>) -> Self {
        Error::Budget(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
