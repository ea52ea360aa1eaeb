use std::process::ExitCode;

/// Errors surfaced by the command-line layer, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}, line {line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("column mismatch: {0}")]
    ColumnMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } => 2,
            CliError::Config(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::ColumnMismatch(_) => 5,
            CliError::EmptyInput(_) => 6,
        }
    }

    pub fn exit(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }

    pub fn config(reason: impl Into<String>) -> Self {
        CliError::Config(reason.into())
    }
}

impl From<klr_core::Error> for CliError {
    fn from(e: klr_core::Error) -> Self {
        match e {
            klr_core::Error::Numerical(msg) => CliError::Numerical(msg),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
