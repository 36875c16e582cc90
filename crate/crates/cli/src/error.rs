use std::path::{Path, PathBuf};

use msm_core::MsmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("stage `{stage}` needs the output of `{upstream}`: {reason}")]
    StageDependency {
        stage: &'static str,
        upstream: &'static str,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: MsmError },

    #[error(transparent)]
    Core(#[from] MsmError),
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(path: &Path, source: MsmError) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => 2,
            _ => 1,
        }
    }
}
