use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("perfect separation detected (|coefficient| exceeded {cap}); consider trimming the sample or removing the offending covariate")]
    PerfectSeparation { cap: f64 },

    #[error("no convergence after {iterations} iterations (last criterion {criterion:.3e}, tolerance {tolerance:.3e})")]
    NoConvergence {
        iterations: usize,
        criterion: f64,
        tolerance: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("bootstrap failed: {excluded} of {requested} replications were excluded (limit {limit})")]
    TooManyExclusions {
        excluded: usize,
        requested: usize,
        limit: usize,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
