use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or unknown configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Iterative method ran out of iterations.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Floating-point breakdown (NaN, loss of definiteness, overflow).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Importance weights or normalizing sums collapsed to zero.
    #[error("degenerate weights: {0}")]
    Degeneracy(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch} of stage {stage}")]
    Training { stage: usize, epoch: usize },

    /// A chain step failed.
    #[error("chain failed at step {step}: {source}")]
    Chain {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Step-size adaptation left the admissible interval.
    #[error("pCN step parameter {beta} left (1e-4, 1 - 1e-4) during adaptation")]
    Adaptation { beta: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed serialized map.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
