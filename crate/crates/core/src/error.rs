use thiserror::Error;

/// Errors raised across the synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degree of freedom {0} outside supported range [{1}, {2}]")]
    DofOutOfRange(usize, usize, usize),

    #[error("twist unrepresentable on joint {joint}: {reason}")]
    UnrepresentableTwist { joint: usize, reason: String },

    #[error("no configuration met the acceptance threshold")]
    NoSolution,

    #[error("inverse kinematics did not converge (residual {residual:.3e} after {iterations} iterations)")]
    IkNoConvergence { residual: f64, iterations: usize },

    #[error("planner precondition violated: {0}")]
    PlannerPrecondition(String),

    #[error("no collision-free path found within {0} samples")]
    NoPath(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
