use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the planner library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numerical failure in {what} at index {index}")]
    Numerical { what: &'static str, index: usize },

    #[error("LDL^T factorization failed: pivot block {block} is not positive definite")]
    Factorization { block: usize },

    #[error("query point ({x}, {y}) lies outside the signed distance field")]
    OutOfBounds { x: f64, y: f64 },

    #[error("quadrature needs {points} sigma points, budget is {budget}")]
    Resource { points: u128, budget: u128 },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
