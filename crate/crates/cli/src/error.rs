use thiserror::Error;
use wiedlab_core::WiedError;

/// Errors surfaced by the harness, each tied to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<WiedError> for CliError {
    fn from(e: WiedError) -> Self {
        match e {
            WiedError::InvalidGrid(_)
            | WiedError::InvalidModel(_)
            | WiedError::InvalidConfig(_)
            | WiedError::RegionOutOfRange(_)
            | WiedError::NotApplicable(_) => CliError::Config(e.to_string()),
            WiedError::Io(_) | WiedError::Csv(_) | WiedError::Json(_) => CliError::Io(e.to_string()),
            WiedError::ShapeMismatch { .. }
            | WiedError::LinearSolver(_)
            | WiedError::NonConvergence { .. }
            | WiedError::StepFailed { .. } => CliError::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
