use thiserror::Error;

/// Failures of a command, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or arguments (exit code 1).
    #[error("{0}")]
    Usage(String),

    /// Unreadable or malformed input (exit code 2).
    #[error("{0}")]
    Input(String),

    /// Solver or factorization failure (exit code 3).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(self, path: &std::path::Path) -> Self {
        let wrap = |m: String| format!("{}: {m}", path.display());
        match self {
            CliError::Usage(m) => CliError::Usage(wrap(m)),
            CliError::Input(m) => CliError::Input(wrap(m)),
            CliError::Numerical(m) => CliError::Numerical(wrap(m)),
        }
    }
}

impl From<spsr::Error> for CliError {
    fn from(e: spsr::Error) -> Self {
        use spsr::Error as E;
        match e {
            E::InvalidArgument(_) => CliError::Usage(e.to_string()),
            E::OutsideGrid { .. } | E::Parse { .. } | E::Io(_) => CliError::Input(e.to_string()),
            E::NoConvergence { .. } | E::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
