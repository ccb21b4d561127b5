use thiserror::Error;

use crate::config::SchemaViolation;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config is not valid JSON: {0}")]
    Syntax(serde_json::Error),
    #[error("unsupported config version `{0}`")]
    UnknownVersion(String),
    #[error("config has {} schema violation(s):\n{}", .0.len(), render(.0))]
    Schema(Vec<SchemaViolation>),
    #[error("{0}")]
    Usage(String),
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] phaselab::error::Error),
    #[error("cannot serialize output: {0}")]
    Json(#[from] serde_json::Error),
}

fn render(v: &[crate::config::SchemaViolation]) -> String {
    v.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n")
}

pub type Result<T> = std::result::Result<T, CliError>;
