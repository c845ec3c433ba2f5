use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} for `{dimension}` outside [{lo}, {hi}]")]
    OutOfRange {
        dimension: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("episode rejected: {0}")]
    EpisodeRejected(String),

    #[error("inconsistent outcome timing: {0}")]
    OutcomeTiming(String),

    #[error("action combination not in the restricted action space: {0}")]
    UnknownAction(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("FQE diverged: {0}")]
    FqeDiverged(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn parse(location: impl ToString, message: impl ToString) -> Self {
        Error::Parse {
            location: location.to_string(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
