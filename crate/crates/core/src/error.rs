use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum RalpError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate active system: {0}")]
    Degenerate(String),

    #[error("unbounded segment: {0}")]
    Unbounded(String),

    #[error("iteration cap of {cap} exceeded: {diagnostic}")]
    IterationCap { cap: usize, diagnostic: String },

    #[error("solver failure: {0}")]
    Solver(String),
}

impl RalpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RalpError::Invalid(msg.into())
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        RalpError::Dimension {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        RalpError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Whether the error was caused by bad input rather than a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            RalpError::Dimension { .. }
                | RalpError::Invalid(_)
                | RalpError::Parse { .. }
                | RalpError::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, RalpError>;

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| RalpError::Io {
        path: path.to_path_buf(),
        source,
    })
}
