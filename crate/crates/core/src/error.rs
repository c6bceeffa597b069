use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum WiedError {
    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    #[error("invalid combustion model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("region outside grid: {0}")]
    RegionOutOfRange(String),

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("nonlinear iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        residual_history: Vec<f64>,
        /// Last iterate, kept so callers can inspect or dump it.
        last_iterate: Vec<f64>,
    },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<WiedError>,
        /// Layers completed before the failure.
        completed: Vec<Vec<f64>>,
    },

    #[error("diagnostic not applicable: {0}")]
    NotApplicable(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, WiedError>;
