use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("malformed RLE: {0}")]
    MalformedRle(String),

    #[error("non-finite score at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("frame sets differ: {0}")]
    FrameMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("schema violation in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("missing file: {0}")]
    Missing(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("tracker: {0}")]
    Tracker(String),

    #[error("proposer: {0}")]
    Proposer(String),
}

/// Stable category of an [`Error`], used for process exit codes and
/// machine-readable error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    MissingFile,
    Schema,
    Dimension,
    InvalidInput,
    Runtime,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::InvalidInput => 2,
            ErrorKind::MissingFile => 3,
            ErrorKind::Schema => 4,
            ErrorKind::Dimension => 5,
            ErrorKind::Runtime => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::MissingFile => "missing_file",
            ErrorKind::Schema => "schema",
            ErrorKind::Dimension => "dimension_mismatch",
            ErrorKind::InvalidInput => "invalid_input",
            ErrorKind::Runtime => "runtime",
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DimensionMismatch { .. } => ErrorKind::Dimension,
            Error::Missing(_) => ErrorKind::MissingFile,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ErrorKind::MissingFile,
            Error::Schema { .. }
            | Error::Json(_)
            | Error::Csv { .. }
            | Error::MalformedRle(_)
            | Error::Image { .. } => ErrorKind::Schema,
            Error::InvalidMask(_) | Error::NonFinite { .. } | Error::FrameMismatch(_) | Error::InvalidInput(_) => {
                ErrorKind::InvalidInput
            }
            Error::Io { .. } | Error::Tracker(_) | Error::Proposer(_) => ErrorKind::Runtime,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
