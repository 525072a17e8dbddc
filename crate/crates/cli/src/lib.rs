//! Scenario-driven front end for the point-interaction Klein-Gordon
//! pipeline: JSON scenario parsing and validation, deterministic parallel
//! grid sweeps, CSV/manifest outputs and the run orchestration used by both
//! the `kgpoint` binary and the acceptance suite.

pub mod outputs;
pub mod par;
pub mod run;
pub mod scenario;

/// Process exit codes of the binary.
pub mod exit_codes {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const CHECK_FAILED: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Scenario could not be read, parsed or validated.
    #[error("scenario validation: {0}")]
    Validation(String),
    /// Solver or evaluation failure during the run.
    #[error("solver: {0}")]
    Solver(#[from] kgpoint_core::Error),
    /// Output files could not be written.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    /// An --oracle or --convergence gate failed.
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => exit_codes::VALIDATION,
            CliError::Solver(_) => exit_codes::SOLVER,
            CliError::CheckFailed(_) => exit_codes::CHECK_FAILED,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
