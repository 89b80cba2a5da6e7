use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("precondition not met: {0}")]
    Precondition(String),
    #[error("state space of {count} states exceeds the bound {bound}")]
    StateBound { count: u128, bound: u128 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("scheme inconsistent with state {state:?}: {reason}")]
    Inconsistent { state: Vec<String>, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
