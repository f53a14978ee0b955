use std::path::PathBuf;

use rdple::RdError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: column '{column}' not found (available: {available})")]
    MissingColumn {
        path: PathBuf,
        column: String,
        available: String,
    },

    #[error("{path}: row {row}, column '{column}': {message}")]
    Cell {
        path: PathBuf,
        row: u64,
        column: String,
        message: String,
    },

    #[error("{path}: malformed CSV: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("invalid configuration: {message}")]
    Config { message: String, keys: Vec<String> },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] RdError),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::MissingColumn { .. } => "missing_column",
            CliError::Cell { .. } => "bad_cell",
            CliError::Csv { .. } => "malformed_csv",
            CliError::Config { .. } => "invalid_config",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.code(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(_) => 1,
            _ => 2,
        }
    }

    /// Machine-readable body written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "code": self.code(), "message": self.to_string() });
        match self {
            CliError::Cell { row, column, .. } => {
                body["row"] = json!(row);
                body["column"] = json!(column);
            }
            CliError::MissingColumn { column, .. } => body["column"] = json!(column),
            CliError::Config { keys, .. } if !keys.is_empty() => body["keys"] = json!(keys),
            CliError::Core(e) => {
                if let Some(stage) = e.stage() {
                    body["stage"] = json!(stage);
                }
            }
            _ => {}
        }
        json!({ "error": body })
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
