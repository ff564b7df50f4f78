use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("corrupted covariance state: {0}")]
    CorruptedCovariance(String),

    #[error("gram matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("factorization failed after exhausting the jitter ladder (last jitter {last_jitter:e})")]
    JitterExhausted { last_jitter: f64 },

    #[error("sampling produced duplicate angles beyond the retry budget of {0}")]
    DuplicateSamples(usize),

    #[error("function does not interpolate the dataset: |f - y| = {deviation:e} at angle {angle}")]
    NotInterpolating { angle: f64, deviation: f64 },

    #[error("undefined smoothness ratio: {0}")]
    UndefinedRatio(String),

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
