use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsbError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid interval [{lower}, {upper}]")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("reference interval has zero width")]
    ZeroWidthReference,

    #[error("duplicate factor name `{0}`")]
    DuplicateFactor(String),

    #[error("time grid must have at least two strictly increasing points")]
    InvalidGrid,

    #[error("trajectories are sampled on different grids")]
    GridMismatch,

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    #[error("integration failed: {0}")]
    Integration(#[from] IntegrationError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no valid histogram bin count divides N={0} within [2, N/10]")]
    NoBinCandidates(usize),

    #[error("bisection bracket is invalid: {0}")]
    InvalidBracket(String),

    #[error("every optimisation start failed to integrate")]
    AllStartsFailed,
}

/// Failures of the ODE integrator. These are never turned into trajectories.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step budget of {0} steps exhausted")]
    StepLimit(usize),

    #[error("state became non-finite at t={0}")]
    NonFiniteState(f64),

    #[error("step size underflow at t={0}")]
    StepUnderflow(f64),

    #[error("model domain violated: {0}")]
    Domain(String),
}

pub type Result<T, E = CsbError> = std::result::Result<T, E>;
