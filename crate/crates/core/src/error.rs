use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Relative rotation angle is within the tolerance of pi, where the
    /// principal logarithm is not unique.
    #[error("rotation angle at the branch cut (trace = {trace})")]
    AngleAtBranchCut { trace: f64 },
    #[error("point norm {norm} does not exceed disturbance radius {epsilon}")]
    PointTooShort { norm: f64, epsilon: f64 },
    #[error("degenerate point configuration: correlation rank below 2")]
    DegenerateConfiguration,
    #[error("need at least {required} neighbors, got {got}")]
    TooFewNeighbors { required: usize, got: usize },
    #[error("uncertainty must be positive, got {0}")]
    NonPositiveUncertainty(f64),
    #[error("normal equations are rank deficient (condition {condition:e})")]
    RankDeficientSystem { condition: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
