use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SwagError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SwagError {
    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SwagError {
    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        SwagError::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SwagError::Io {
            path: path.into(),
            source,
        }
    }
}
