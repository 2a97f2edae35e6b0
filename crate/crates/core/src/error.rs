use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: csv error: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("line {line}: row has {found} fields, header has {expected}")]
    RaggedRow {
        line: u64,
        found: usize,
        expected: usize,
    },

    #[error("line {line}: rating {value} outside [{min}, {max}]")]
    RatingOutOfRange {
        line: u64,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("duplicate rating for user `{user}` and item `{item}`")]
    DuplicateRating { user: String, item: String },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("line {line}: negative edge weight {weight}")]
    NegativeWeight { line: u64, weight: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown algorithm `{0}` (expected one of ucf, icf, slope1, ck-cf, basemf, cmf)")]
    UnknownAlgorithm(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("model format: {0}")]
    Format(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad input (arguments or file contents) rather than
    /// by a failure while computing. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Diverged { .. } | Error::Invariant(_) => false,
            _ => true,
        }
    }
}
