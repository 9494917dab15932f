use std::io;

use thiserror::Error;

/// Errors produced anywhere in the boosting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} has (near-)zero norm and cannot be normalized")]
    ZeroVector { row: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("value error: {0}")]
    Value(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("class {label} has a degenerate (zero) summed feature")]
    DegenerateClass { label: usize },
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
    #[error("network output row {row} has zero norm")]
    DegenerateOutput { row: usize },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{other:?}")),
        }
    }
}
