use thiserror::Error;

use crate::domain::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("invalid case: {} violation(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("incomplete assignment, missing: {}", .0.join(", "))]
    MissingAssignment(Vec<String>),
    #[error("infeasible: violated {}", .0.join(", "))]
    Infeasible(Vec<String>),
    #[error("resource limit: {0}")]
    Limit(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
