use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration or parameter.
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor or sequence shapes that do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A domain invariant was violated by the supplied data.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Index outside the valid range of a sequence.
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    /// Metric undefined for the given population (e.g. a single class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// NaN or infinity produced where a finite value is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Malformed binary or JSON file.
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// File contents that parse but do not validate against the manifest.
    #[error("validation error: {0}")]
    Validation(String),

    /// Synthetic data generation could not satisfy its constraints.
    #[error("generation error: {0}")]
    Generation(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code for command-line front ends: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) => 4,
            Error::Shape(_)
            | Error::Invariant(_)
            | Error::OutOfRange { .. }
            | Error::UndefinedMetric(_)
            | Error::Format { .. }
            | Error::Validation(_)
            | Error::Generation(_)
            | Error::Io { .. } => 3,
        }
    }
}
