use thiserror::Error;

/// Errors produced by the allocation and optimization routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    /// Input data violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{n} units exceeds the exact enumeration cap of {cap}; use Monte Carlo sampling (method `mc`) instead")]
    EnumerationCap { n: usize, cap: usize },

    /// The additivity scale factor has a vanishing denominator.
    #[error("singular scale factor: {0}")]
    SingularScale(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),
}

impl Error {
    /// Numerical failures, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::SingularScale(_) | Error::SingularSystem(_))
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
