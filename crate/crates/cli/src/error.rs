use thiserror::Error;

/// Failures of an experiment run, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("no parameter draw met the regularity conditions after {attempts} redraws")]
    RegularityRejection { attempts: usize },

    #[error(transparent)]
    Numerical(#[from] dualmc_core::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { field: field.into(), message: message.into() }
    }

    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::RegularityRejection { .. } | CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
