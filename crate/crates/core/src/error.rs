use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver did not converge after {iterations} iterations (primal infeasibility {primal:.3e}, dual infeasibility {dual:.3e}, gap {gap:.3e})")]
    NonConvergence {
        iterations: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 numeric failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::DimensionMismatch(_)
            | Error::Unsupported(_)
            | Error::Config(_)
            | Error::Format { .. } => 2,
            Error::Numerical(_) | Error::NonConvergence { .. } => 3,
            Error::Io { .. } => 4,
        }
    }
}
