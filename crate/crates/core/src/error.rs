use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge: {0}")]
    NonConvergence(String),

    #[error("Q table bound exceeded: requested order {requested}, limit {limit}")]
    TruncationBound { requested: usize, limit: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ensemble failure: {flagged} of {total} paths blew up")]
    Ensemble { flagged: usize, total: usize },

    #[error("degenerate experiment: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
