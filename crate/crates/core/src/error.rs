use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("unknown word `{0}`")]
    UnknownWord(String),

    #[error("token sequence must start with exactly one signal token")]
    MissingSignal,

    #[error("empty sequence passed to {0}")]
    EmptySequence(&'static str),

    #[error("joint value {value} at step {step} is outside [-1, 1]")]
    JointRange { step: usize, value: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("signal `{signal}` requires {requirement}")]
    MissingModality {
        signal: &'static str,
        requirement: &'static str,
    },

    #[error("{0}")]
    Usage(String),

    #[error("`{0}` is a training-only signal")]
    TrainingOnlySignal(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("infeasible split: {0}")]
    Split(String),

    #[error("observed joint range must be positive, got {0}")]
    ZeroRange(f64),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
