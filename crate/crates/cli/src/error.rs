use std::path::Path;

use serde_json::json;
use thiserror::Error;

use crate::config::ConfigError;
use crate::dataset::LoadError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error(transparent)]
    Model(#[from] sveb::Error),

    #[error("{0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Validation,
    Numerical,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Validation => 2,
            Kind::Numerical => 3,
            Kind::Io => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Validation => "validation",
            Kind::Numerical => "numerical",
            Kind::Io => "io",
        }
    }
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Load(LoadError::Io { .. }) | CliError::Io { .. } => {
                Kind::Io
            }
            CliError::Config(_) | CliError::Load(_) | CliError::Validation(_) => Kind::Validation,
            CliError::Model(sveb::Error::InvalidInput(_)) => Kind::Validation,
            CliError::Model(_) | CliError::Mismatch(_) => Kind::Numerical,
        }
    }

    /// Machine-readable error report.
    pub fn report(&self) -> String {
        let kind = self.kind();
        let mut v = json!({
            "status": "error",
            "kind": kind.name(),
            "exit_code": kind.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Load(e) = self {
            if let Some(line) = e.line() {
                v["line"] = json!(line);
            }
        }
        if let CliError::Model(e) = self {
            if let Some(area) = e.area() {
                v["area"] = json!(area);
            }
        }
        v.to_string()
    }
}
