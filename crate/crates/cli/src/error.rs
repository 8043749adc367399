use optql_core::Error;
use thiserror::Error as ThisError;

/// Exit codes returned by the binary.
pub mod exit {
    pub const INPUT: i32 = 1;
    pub const NUMERIC: i32 = 2;
    pub const INVARIANT: i32 = 3;
    /// The command ran but had nothing to work on.
    pub const WARNING: i32 = 4;
}

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("output: {0}")]
    Io(#[from] std::io::Error),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{0}")]
    Warning(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => exit::INPUT,
            CliError::Invariant(_) => exit::INVARIANT,
            CliError::Warning(_) => exit::WARNING,
            CliError::Core(e) => match e {
                Error::Solver { .. } | Error::Numerical(_) | Error::Calibration { .. } => exit::NUMERIC,
                Error::Contract(_) => exit::INVARIANT,
                _ => exit::INPUT,
            },
        }
    }
}
