use thiserror::Error;

/// Errors produced by the calibration engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("undistortion did not converge after {iterations} iterations (residual {residual:e})")]
    UndistortNonConvergence { iterations: usize, residual: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("not enough frames: need at least {needed}, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("frame has too few corners: need at least {needed}, got {got}")]
    TooSparse { needed: usize, got: usize },

    #[error("normal equations are singular beyond damping repair")]
    SingularNormalEquations,

    #[error("parameter block is unobservable from the data: {0}")]
    Unobservable(String),

    #[error("board is not fully visible at the requested pose")]
    InvisiblePose,

    #[error("no frame with the whole board visible has been seen")]
    NoVisibleBoard,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operation not allowed in phase {phase}: {what}")]
    WrongPhase { phase: String, what: String },
}

pub type Result<T> = std::result::Result<T, Error>;
