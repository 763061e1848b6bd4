use std::path::PathBuf;

/// Errors raised by every module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("malformed {kind}: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }

    /// True when the error stems from bad input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
