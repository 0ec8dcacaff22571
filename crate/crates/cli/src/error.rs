use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse {path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } | CliError::Parse { .. } => 4,
        }
    }

    /// Single-line `key=value` record for scripts.
    pub fn record(&self) -> String {
        format!("nlres-error code={} kind={} message={:?}", self.exit_code(), self.kind(), self.to_string())
    }
}

impl From<nlres_core::Error> for CliError {
    fn from(e: nlres_core::Error) -> Self {
        match e {
            nlres_core::Error::InvalidParams(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
