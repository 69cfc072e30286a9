use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, IagError>;

#[derive(Debug, Error)]
pub enum IagError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{path}: malformed field `{field}`: {reason}")]
    Format {
        path: String,
        field: String,
        reason: String,
    },

    #[error("unknown {kind} `{name}` (not in vocabulary)")]
    Vocabulary { kind: &'static str, name: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl IagError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IagError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl std::fmt::Display, field: &str, reason: impl Into<String>) -> Self {
        IagError::Format {
            path: path.to_string(),
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            IagError::Numeric(_) => 3,
            IagError::Io { .. } | IagError::Image { .. } => 1,
            _ => 2,
        }
    }
}

/// Shorthand for an argument error.
pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(IagError::Argument(msg.into()))
}
