use thiserror::Error;

/// Failure taxonomy shared by every module. Numerical routines never panic on
/// bad input; they return one of these.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration (bad JSON, unknown keys, out-of-range values).
    #[error("configuration: {0}")]
    Config(String),
    /// Structurally valid input that violates a documented precondition of an operation.
    #[error("precondition: {0}")]
    Precondition(String),
    /// The requested quantity is not representable on the chosen backend/discretization.
    #[error("unsupported query: {0}")]
    Unsupported(String),
    /// State norm left the trusted range during time stepping.
    #[error("solution diverged at t = {t} (norm {norm:.3e})")]
    Divergence { t: f64, norm: f64 },
    /// Degenerate data that makes the requested quantity meaningless (e.g. identical inputs
    /// to a sensitivity probe).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Two quantities that must agree (hashes, discretizations, dimensions) do not.
    #[error("inconsistency: {0}")]
    Inconsistency(String),
    /// Corrupt, truncated or incompatible state file.
    #[error("state file: {0}")]
    Persist(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
