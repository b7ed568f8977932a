use std::path::PathBuf;

use serde_json::{json, Value};

/// Errors surfaced by the command-line layer.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}, line {line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{}: missing column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] netspill_core::Error),
    #[error("thread pool: {0}")]
    Threads(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn config(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::MissingColumn { .. } => "missing_column",
            CliError::Config { .. } => "config",
            CliError::Usage(_) => "usage",
            CliError::Core(_) => "estimation",
            CliError::Threads(_) => "threads",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Structured form written to stderr.
    pub fn to_json(&self) -> Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            CliError::Io { path, .. } | CliError::MissingColumn { path, .. } | CliError::Config { path, .. } => {
                body["path"] = json!(path);
            }
            CliError::Parse { path, line, .. } => {
                body["path"] = json!(path);
                body["line"] = json!(line);
            }
            _ => {}
        }
        if let CliError::MissingColumn { column, .. } = self {
            body["column"] = json!(column);
        }
        json!({ "error": body })
    }
}
