use thiserror::Error;

/// Failure classes of the command-line tool, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn field(path: &str, msg: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{path}: {msg}"))
    }
}

impl From<widecl_core::Error> for CliError {
    fn from(e: widecl_core::Error) -> Self {
        use widecl_core::Error as E;
        match e {
            E::Divergence { .. } => CliError::Divergence(e.to_string()),
            E::Io(_) | E::Csv(_) => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
