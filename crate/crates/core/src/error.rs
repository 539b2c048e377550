use thiserror::Error;

/// Errors raised by the fitting toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NbError {
    #[error("empty sample")]
    EmptySample,

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid observation {value} at index {index}")]
    InvalidObservation { index: usize, value: String },

    #[error("parse error on line {line}: {message} (token `{token}`)")]
    Parse {
        line: usize,
        token: String,
        message: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameters not representable: {0}")]
    Conversion(String),

    #[error("precision target not reached: {0}")]
    Precision(String),

    #[error("structural check failed at y = {index}: {message}")]
    Structural { index: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for NbError {
    fn from(e: std::io::Error) -> Self {
        NbError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NbError>;
