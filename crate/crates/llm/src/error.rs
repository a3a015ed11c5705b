use thiserror::Error;

use geouq_core::jsonl::JsonlError;

pub type Result<T> = std::result::Result<T, LlmError>;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication rejected with HTTP {status}")]
    Auth { status: u16 },
    #[error("gave up after {attempts} attempts (last status {last_status:?}): {detail}")]
    RateLimited { attempts: u32, last_status: Option<u16>, detail: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("embedding dimension changed from {expected} to {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("judge output matches neither marker: {0:?}")]
    UnparseableVerdict(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid client config: {0}")]
    Config(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

impl LlmError {
    /// Failures that retrying the same request cannot fix.
    pub fn is_permanent(&self) -> bool {
        !matches!(self, LlmError::RateLimited { .. })
    }
}
