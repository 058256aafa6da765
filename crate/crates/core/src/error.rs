use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty transcript")]
    EmptyTranscript,
    #[error("rate exceeds frame rate")]
    RateExceedsFrameRate,
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("empty emissions")]
    EmptyEmissions,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("input too short: {frames} frames, kernel needs {kernel}")]
    InputTooShort { frames: usize, kernel: usize },
    #[error("diverged")]
    Diverged,
    #[error("target unalignable: needs {required} frames, have {available}")]
    TargetUnalignable { required: usize, available: usize },
    #[error("enumeration bound exceeded: {0}")]
    BoundExceeded(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing section {0}")]
    MissingSection(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
