use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed binary file; `offset` is the byte where decoding failed.
    #[error("{path}: {msg} (byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error("{path}:{line}: {msg}")]
    LabelParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero-norm vector under cosine metric")]
    ZeroNorm,

    #[error("filtered query requires a nonempty label set")]
    EmptyQueryLabels,

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("corrupt index file, section `{section}`: {msg}")]
    CorruptIndex { section: &'static str, msg: String },

    #[error(
        "index was built for a different dataset (expected fingerprint {expected}, found {found})"
    )]
    FingerprintMismatch { expected: String, found: String },

    #[error("no preference triplets could be formed from the training queries")]
    NoTriplets,

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingArtifact(_) => 3,
            Error::Invariant(_) => 4,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}
