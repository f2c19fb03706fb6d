use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid bounds at coordinate {index}: lower {lower}, upper {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },

    #[error("point is not strictly inside the unit cube at coordinate {index} (value {value})")]
    NotInterior { index: usize, value: f64 },

    #[error("point is infeasible at coordinate {index} (value {value})")]
    Infeasible { index: usize, value: f64 },

    /// The objective was asked for a value or gradient outside its bounds.
    #[error("unrelaxable constraint violated: objective queried at coordinate {index} = {value} outside [{lower}, {upper}]")]
    UnrelaxableViolation { index: usize, value: f64, lower: f64, upper: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("projected penalty merit is not differentiable at this point; use ppm_direction")]
    NonsmoothPoint,

    #[error("operation requires a sigmoidal merit function")]
    NotSigmoidal,

    #[error("operation requires a projected penalty merit function")]
    NotProjectionPenalty,

    #[error("objective does not provide a Hessian oracle")]
    MissingHessian,

    #[error("objective does not declare Lipschitz constants")]
    MissingLipschitz,

    #[error("gradient at the starting point is zero; relative KKT tolerance is undefined")]
    DegenerateNormalization,

    #[error("iteration bound needs at least one of nu or xi")]
    MissingBoundCase,

    #[error("non-finite value encountered during the solve")]
    Diverged,

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("records do not cover a common problem set: {0}")]
    MismatchedProblemSets(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
