use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// The target measure cannot be embedded on the given grid.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// The solver stopped before certifying optimality.
    #[error("iteration limit reached after {iterations} iterations (relative gap {gap:.3e})")]
    IterationLimit { iterations: usize, gap: f64 },
    /// Basis factorisation failed repeatedly.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
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
