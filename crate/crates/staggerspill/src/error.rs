use std::fmt;
use std::path::Path;

use serde::Serialize;
use staggerspill_core::Error as CoreError;

/// Failure class, which fixes the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    Inference,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Inference => 3,
            ErrorKind::Io => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: message.into(),
        }
    }

    /// Machine-readable record written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind,
                "code": self.kind.exit_code(),
                "message": self.message,
            }
        })
        .to_string()
    }

    /// Error for an input file that cannot be opened; a missing file is a
    /// validation failure named after its role, anything else is I/O.
    pub fn input(role: &str, path: &Path, err: &std::io::Error) -> Self {
        if err.kind() == std::io::ErrorKind::NotFound {
            Self::validation(format!("{role} not found: {}", path.display()))
        } else {
            Self::io(format!("cannot read {role} {}: {err}", path.display()))
        }
    }

    pub fn write(path: &Path, err: impl fmt::Display) -> Self {
        Self::io(format!("cannot write {}: {err}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match e {
            CoreError::SingularSystem(_) | CoreError::InvalidCovariance(_) => ErrorKind::Inference,
            _ => ErrorKind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}
