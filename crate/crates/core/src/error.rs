use thiserror::Error;

/// Errors surfaced by planning, prediction and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected {expected} entries, got {got}")]
    Arity {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("timed out after {0:?} waiting for {1}")]
    Timeout(std::time::Duration, String),
    #[error("solver aborted: {0}")]
    SolverAbort(String),
    #[error("robot worker {robot} failed: {message}")]
    Worker { robot: usize, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
