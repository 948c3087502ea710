use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank-deficient channel: {0}")]
    RankDeficient(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("infeasible assignment: {0}")]
    InfeasibleAssignment(String),

    #[error("user {0} is not served")]
    UserNotServed(usize),

    #[error("instance too large: {count} candidates exceed the cap of {cap}")]
    TooLarge { count: u128, cap: u128 },

    #[error("unsupported instance: {0}")]
    Unsupported(String),

    #[error("linear program is {0:?}")]
    Lp(LpStatus),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
