use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or layout contract violated by the caller.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration or distribution parameter.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A computation produced NaN or Inf.
    #[error("non-finite value at iteration {iteration}: {context}")]
    NonFinite { iteration: usize, context: String },

    /// A data file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Training in one causal direction failed.
    #[error("training {direction} failed: {source}")]
    Direction {
        direction: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub fn non_finite(iteration: usize, context: impl Into<String>) -> Self {
        Error::NonFinite {
            iteration,
            context: context.into(),
        }
    }
}
