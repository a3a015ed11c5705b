use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input {}: {hint}", path.display())]
    MissingInput { path: PathBuf, hint: String },
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 3,
            CliError::MissingInput { .. } => 4,
        }
    }

    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Stage { stage, message: e.to_string() }
    }
}
