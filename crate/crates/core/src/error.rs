use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature exhausted its depth budget before meeting the tolerance.
    #[error("quadrature did not converge on [{lower}, {upper}]: {failed_segments} segment(s) hit max depth {max_depth}")]
    Quadrature {
        lower: f64,
        upper: f64,
        max_depth: u32,
        failed_segments: usize,
    },

    /// A lattice sample would not fit within the memory budget.
    #[error("capacity error: sample needs {required_bytes} bytes, budget is {budget_bytes} bytes")]
    Capacity {
        required_bytes: u128,
        budget_bytes: u128,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Invalid configuration; `path` locates the offending field (dot separated).
    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
