use thiserror::Error;

use crate::expr::{EvalError, ParseError};

/// Errors produced by the verification and solver routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A precondition on the caller's input was violated.
    #[error("invalid input: {0}")]
    Input(String),
    /// A numerical routine failed to produce a trustworthy value.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

impl From<crate::expr::FunctionError> for Error {
    fn from(e: crate::expr::FunctionError) -> Self {
        match e {
            crate::expr::FunctionError::Parse(p) => Error::Parse(p),
            other => Error::Input(other.to_string()),
        }
    }
}
