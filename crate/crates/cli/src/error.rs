use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] mtlrrc::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: String, message: String },

    #[error("every grid point failed ({} points)", .0.len())]
    GridFailed(Vec<PointFailure>),

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<CliError>,
    },
}

/// Diagnostic of one failed grid point.
#[derive(Clone, Debug, Serialize)]
pub struct PointFailure {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: String,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn csv(path: &Path, err: csv::Error) -> Self {
        CliError::Csv {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(mtlrrc::Error::Io { .. }) => "io",
            CliError::Core(mtlrrc::Error::Format(_)) => "input",
            CliError::Core(mtlrrc::Error::InvalidArgument(_)) => "invalid_argument",
            CliError::Core(_) => "estimation",
            CliError::Io { .. } | CliError::Csv { .. } => "io",
            CliError::GridFailed(_) => "grid_failed",
            CliError::Replicate { source, .. } => source.kind(),
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
            }
        });
        let detail = &mut v["error"];
        match self {
            CliError::GridFailed(points) => {
                detail["points"] = serde_json::to_value(points).unwrap_or_default();
            }
            CliError::Replicate { replicate, .. } => {
                detail["replicate"] = (*replicate).into();
            }
            _ => {}
        }
        v
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
