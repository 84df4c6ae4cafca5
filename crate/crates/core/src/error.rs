use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CanopyError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CanopyError {
    /// Two grids that must line up do not.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Bad parameter or configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data cannot be used (too few points, empty mosaic, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    NonFinite(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CanopyError {
    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        CanopyError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CanopyError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line tool.
    ///
    /// 2 = bad configuration, 3 = bad input data, 4 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CanopyError::Config(_) => 2,
            CanopyError::NonFinite(_) => 4,
            CanopyError::Alignment(_)
            | CanopyError::Shape(_)
            | CanopyError::Degenerate(_)
            | CanopyError::Format { .. }
            | CanopyError::Io { .. } => 3,
        }
    }
}
