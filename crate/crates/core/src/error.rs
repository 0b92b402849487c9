use std::path::PathBuf;

use crate::dataset::Split;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file is malformed. `offset` is a byte offset for binary files and a
    /// 1-based line number for text files.
    #[error("{}{}: {message}", file.display(), offset.map(|o| format!(" @ {o}")).unwrap_or_default())]
    Format {
        file: PathBuf,
        offset: Option<u64>,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("split `{0}` has no records")]
    EmptySplit(Split),

    #[error("need at least 3 distinct lemmas to populate train/dev/test, found {0}")]
    TooFewLemmas(usize),

    #[error("k = {k} exceeds dimensionality d = {d}")]
    KExceedsD { k: usize, d: usize },

    #[error("exhaustive search over C({d}, {k}) subsets exceeds the limit of {limit}")]
    CombinatorialBound { d: usize, k: usize, limit: u64 },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("inconsistent metadata: {0}")]
    InconsistentMetadata(String),

    #[error("checkpoint {step} is missing layer {layer}")]
    MissingLayer { step: u64, layer: u32 },

    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(file: impl Into<PathBuf>, offset: Option<u64>, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
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

    /// True when the error stems from bad input rather than an internal fault.
    pub fn is_invalid_input(&self) -> bool {
        match self {
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Divergence { .. } => false,
            _ => true,
        }
    }
}
