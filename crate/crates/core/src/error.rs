use std::path::PathBuf;

/// Errors raised by the simulator and its diagnostics.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("field length {found} does not match grid with {expected} cells")]
    SizeMismatch { expected: usize, found: usize },

    #[error("time step too large: {0}")]
    TauTooLarge(String),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("Newton iteration for the temperature step failed after {iterations} iterations (residual {residual:.3e})")]
    NewtonDivergence {
        iterations: usize,
        residual: f64,
        /// Last Newton iterate, kept for the failure dump.
        state: Vec<f64>,
    },

    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("run directory {path}: {message}")]
    RunDirectory { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
