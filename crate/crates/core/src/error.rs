use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid setup: {0}")]
    InvalidSetup(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate contrast: restricted state system is singular at pivot {pivot} of {size}")]
    DegenerateContrast { pivot: usize, size: usize },

    #[error("series did not converge within {0} terms")]
    NonConvergence(usize),

    #[error("mask has no active cells")]
    EmptyMask,

    #[error("non-finite loss at iteration {iter}: {detail}")]
    NonFinite { iter: usize, detail: String },

    #[error("fingerprint mismatch: checkpoint was built for {expected}, got {found}")]
    Fingerprint { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateContrast { .. } | Error::NonConvergence(_) | Error::NonFinite { .. }
        )
    }
}
