use thiserror::Error;

use crate::problem::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("{0}")]
    Invalid(Violation),

    #[error("invalid problem: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidProblem(Vec<Violation>),

    #[error("invalid settings: {0}")]
    Settings(String),

    #[error("warm start has wrong dimension: expected {expected}, found {found}")]
    WarmStartDimension { expected: usize, found: usize },

    #[error("problem is infeasible (plateau {plateau:.3e})")]
    Infeasible { plateau: f64 },

    #[error("solver failed: {0}")]
    SolverFailure(String),
}
