use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field contains non-finite values")]
    NonFiniteField,

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sigma = {0} is outside (0, 1); nontrivial stationary waves require 0 < sigma < 1")]
    SigmaOutOfRange(f64),

    #[error("line search stalled after {backtracks} backtracks (residual {residual:.3e})")]
    LineSearchStalled { backtracks: usize, residual: f64 },

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("energy failed to decrease over {window} steps; retry with step {suggested:.3e}")]
    StepTooLarge { window: usize, suggested: f64 },

    #[error("invalid bracket: {0}")]
    BracketError(String),

    #[error("profile is not in the admissible sphere (kinetic - 2(1-sigma) mass = {0:.3e} >= 0)")]
    NotInSphere(f64),

    #[error("no sign change of the fibering derivative up to r = {0}")]
    ScaleNotFound(f64),

    #[error("iterate left the admissible sphere after {restarts} restarts")]
    SphereEscape { restarts: usize },

    #[error("ground state is not converged (residual {0:.3e})")]
    StaleGroundState(f64),

    #[error("eigensolver breakdown: {0}")]
    EigenFailure(String),

    #[error("linear solver breakdown: {0}")]
    SingularMatrix(String),

    #[error("fit window has {0} usable nodes (need at least 10)")]
    WindowTooSmall(usize),

    #[error("profile magnitude is not nonincreasing")]
    NotDecreasing,

    #[error("initial state does not fit the box: {0}")]
    BoxTooSmall(String),

    #[error("corrupt field file: {0}")]
    CorruptFile(String),

    #[error("unsupported file version: {0}")]
    VersionError(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
