use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Variants are grouped by how a caller should react; [`Error::exit_code`]
/// maps each group onto the command-line exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input text (CSV, JSON, PFM) with a location when one is known.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// Well-formed input that violates a domain invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },

    /// The linear system cannot be solved as posed.
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("search budget exceeded: {0}")]
    Budget(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    /// Process exit status for this error: 2 input/validation, 3 numerical, 4 budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Invalid(_)
            | Error::UnknownMaterial(_)
            | Error::Shape { .. } => 2,
            Error::RankDeficient(_) | Error::Numerical(_) => 3,
            Error::Budget(_) => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
