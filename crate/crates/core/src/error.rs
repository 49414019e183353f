use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("outside the search domain: {0}")]
    DomainViolation(String),
    #[error("archive structure: {0}")]
    Structural(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The evaluation budget is used up. A normal terminal signal for optimizers.
    #[error("evaluation budget exhausted")]
    BudgetExhausted,
    /// Blocked regions cover the whole domain; cNrGA cannot place new points.
    #[error("search space exhausted")]
    SearchSpaceExhausted,
}

impl Error {
    /// Terminal signals end a run cleanly rather than failing it.
    pub fn is_terminal(&self) -> bool {
        matches!(self, Error::BudgetExhausted | Error::SearchSpaceExhausted)
    }
}
