use std::path::PathBuf;

use errp_core::Error as CoreError;

/// Failure of a command, split by who has to act on it.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input data, flags or configuration (exit code 2).
    #[error("{0}")]
    Input(String),
    /// Numerical or internal failure (exit code 1).
    #[error("{0}")]
    Internal(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Internal(_) => 1,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Fold { source, .. } => core_exit_code(source),
        CoreError::InvalidMatrix { .. }
        | CoreError::NotPositiveDefinite { .. }
        | CoreError::NumericalFailure(_)
        | CoreError::NonConvergence { .. } => 1,
        _ => 2,
    }
}
