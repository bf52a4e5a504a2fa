use std::path::PathBuf;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit code 1.
    #[error("config error: {0}")]
    Config(String),
    /// Exit code 2.
    #[error("runtime error: {0}")]
    Runtime(String),
    /// Exit code 3.
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Prefixes the message with the sweep cell (or other context) it came from.
    pub fn within(self, context: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{context}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{context}: {m}")),
            CliError::Io { path, source } => {
                CliError::Io { path, source: std::io::Error::new(source.kind(), format!("{context}: {source}")) }
            }
        }
    }
}
