use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("window sum underflow: overlap-add coverage falls below {floor:e} at offset {offset}")]
    WindowSumUnderflow { offset: usize, floor: f64 },

    #[error("all-zero reference signal")]
    ZeroReference,

    #[error("singular system at frequency bin {bin} (after loading up to {loading:e})")]
    Singular { bin: usize, loading: f64 },

    #[error("mask mass below floor at frequency bin {bin}")]
    EmptyMask { bin: usize },

    #[error("non-finite values: {0}")]
    NonFinite(String),

    #[error("search budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("partial or stale output: {0}")]
    PartialOutput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than by the inputs' shape or presence.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NonFinite(_)
                | Error::WindowSumUnderflow { .. }
                | Error::EmptyMask { .. }
                | Error::ZeroReference
        )
    }
}
