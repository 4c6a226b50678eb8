use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] subridge::Error),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
    #[error("failed invariants: {}", .0.join(", "))]
    CheckFailed(Vec<String>),
}

impl CliError {
    /// Process exit status: 1 usage, 2 numerical, 3 failed check.
    pub fn exit_code(&self) -> u8 {
        use subridge::Error as E;
        match self {
            CliError::Usage(_) | CliError::Output { .. } => 1,
            CliError::Core(E::Convergence { .. } | E::NoSolution(_) | E::Domain(_)) => 2,
            CliError::Core(_) => 1,
            CliError::CheckFailed(_) => 3,
        }
    }
}
