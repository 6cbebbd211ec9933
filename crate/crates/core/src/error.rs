use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("ragged input at row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("empty dataset")]
    EmptyData,

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid context: {0}")]
    Context(String),

    #[error("invalid document: {0}")]
    Format(String),

    #[error("state space of {states} joint states exceeds the enumeration cap of {cap}; exact inference is unavailable, but learning, fitting and pseudo-likelihood scoring do not need it")]
    StateSpace { states: u128, cap: u128 },

    #[error(
        "stratified test would need {dof} degrees of freedom; abstain at this alpha level instead"
    )]
    DofOverflow { dof: u128 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Whether the error comes from a numerical routine (including an
    /// infeasible exact enumeration) rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::DofOverflow { .. } | Error::StateSpace { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
