use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// `Contract` marks violated operation preconditions (caller bugs or bad
/// configuration); the remaining variants are runtime failures. The CLI
/// maps these onto its exit-code convention via [`DxaiError::exit_code`].
#[derive(Debug, Error)]
pub enum DxaiError {
    /// A documented precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input data on disk is missing or malformed.
    #[error("invalid data at {path}: {reason}")]
    Data { path: PathBuf, reason: String },

    /// A loss or gradient became non-finite during training.
    #[error("non-finite value in {term}: {detail}")]
    NonFinite { term: String, detail: String },

    /// Checkpoint directory or manifest does not match what was requested.
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl DxaiError {
    pub fn contract(msg: impl Into<String>) -> Self {
        DxaiError::Contract(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        DxaiError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code the CLI uses for this error: 1 for user/config
    /// errors, 2 for runtime or numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            DxaiError::Contract(_) | DxaiError::Data { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, DxaiError>;

/// Shorthand for precondition checks inside operations.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !($cond) {
            return Err(crate::error::DxaiError::Contract(format!($($arg)*)));
        }
    };
}
pub(crate) use ensure;
