use thiserror::Error;

use crate::{AgentId, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {0} is not part of the graph")]
    UnknownNode(NodeId),
    #[error("agent {0} is not known")]
    UnknownAgent(AgentId),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("reward evaluated at t={t} before the last visit at {last_visit}")]
    TimeBeforeVisit { t: f64, last_visit: f64 },
    #[error("policy set already holds a policy for agent {0}")]
    MatroidViolation(AgentId),
    #[error("{what} budget exceeded: {size} > {cap}")]
    BudgetExceeded { what: &'static str, size: u128, cap: u128 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("scenario validation failed: {0}")]
    Validation(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }

    /// True for errors caused by malformed input rather than by a run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::InvalidGraph(_)
                | Error::UnknownNode(_)
                | Error::UnknownAgent(_)
                | Error::Json(_)
        )
    }
}
