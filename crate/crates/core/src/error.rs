use thiserror::Error;

/// Errors raised by the flow, solver and analysis routines.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("point {x:?} is within the medial-axis exclusion zone (|grad d| = {grad_norm:.3})")]
    MedialAxis { x: [f64; 2], grad_norm: f64 },
    #[error("point {x:?} is not on the barrier (|d| = {distance:.3e})")]
    NotOnBoundary { x: [f64; 2], distance: f64 },
    #[error("region is thinner ({thickness:.4}) than the bending collar ({collar:.4})")]
    TooThin { thickness: f64, collar: f64 },
    #[error("time step {dt:.3e} exceeds the stability limit {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("interface left the narrow band at step {step}")]
    BandOverflow { step: usize },
    #[error("reinitialization did not converge: residual {residual:.3e}")]
    NonConvergence { residual: f64 },
    #[error("continuation stalled at kappa = {kappa:.5} (residual {residual:.3e})")]
    ContinuationStall { kappa: f64, residual: f64 },
    #[error("grid too coarse: {0}")]
    Resolution(String),
    #[error("time window error: {0}")]
    Window(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid competitor {index}: {reason}")]
    InvalidCompetitor { index: usize, reason: String },
    #[error("{0}")]
    Mode(String),
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("scenario {scenario}: {source}")]
    Scenario { scenario: String, source: Box<FlowError> },
}

impl From<std::io::Error> for FlowError {
    fn from(e: std::io::Error) -> Self {
        FlowError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;
