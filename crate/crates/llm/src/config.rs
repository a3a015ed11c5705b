//! Client configuration and generation requests.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{LlmError, Result};

pub const ENV_LLM_BASE: &str = "GEOUQ_LLM_BASE";
pub const ENV_LLM_KEY: &str = "GEOUQ_LLM_KEY";
pub const ENV_EMBED_BASE: &str = "GEOUQ_EMBED_BASE";
pub const ENV_EMBED_KEY: &str = "GEOUQ_EMBED_KEY";

/// Secret bearer token. Never printed and never serialized.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("ApiKey(<unset>)")
        } else {
            f.write_str("ApiKey(<redacted>)")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub base_url: String,
    #[serde(skip)]
    pub api_key: ApiKey,
    pub model_name: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
    pub max_concurrent: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: ApiKey::default(),
            model_name: String::new(),
            timeout_secs: 60.0,
            max_retries: 5,
            backoff_base_secs: 1.0,
            max_concurrent: 8,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(LlmError::Config(format!("timeout_secs must be positive, got {}", self.timeout_secs)));
        }
        if !(self.backoff_base_secs >= 0.0 && self.backoff_base_secs.is_finite()) {
            return Err(LlmError::Config(format!("backoff_base_secs must be >= 0, got {}", self.backoff_base_secs)));
        }
        if self.max_concurrent == 0 {
            return Err(LlmError::Config("max_concurrent must be at least 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Delay before retry number `attempt` (0-based): `backoff_base * 2^attempt`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_secs_f64(self.backoff_base_secs * 2f64.powi(attempt.min(30) as i32))
    }

    /// Overrides base URL and key from the chat-endpoint environment variables.
    pub fn with_chat_env(self) -> Self {
        self.with_env(ENV_LLM_BASE, ENV_LLM_KEY)
    }

    /// Overrides base URL and key from the embedding-endpoint environment variables.
    pub fn with_embed_env(self) -> Self {
        self.with_env(ENV_EMBED_BASE, ENV_EMBED_KEY)
    }

    fn with_env(mut self, base_var: &str, key_var: &str) -> Self {
        if let Ok(base) = std::env::var(base_var) {
            if !base.trim().is_empty() {
                self.base_url = base.trim().to_string();
            }
        }
        if let Ok(key) = std::env::var(key_var) {
            self.api_key = ApiKey::new(key.trim());
        }
        self
    }

    pub fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub n_samples: usize,
    pub max_tokens: usize,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64, n_samples: usize) -> Self {
        GenerationRequest { prompt: prompt.into(), temperature, n_samples, max_tokens: 256 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.n_samples == 0 {
            return Err(LlmError::InvalidRequest("n_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_redacted_and_never_serialized() {
        let cfg = ClientConfig { api_key: ApiKey::new("sk-secret-123"), ..Default::default() };
        assert!(!format!("{cfg:?}").contains("sk-secret-123"));
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(!json.contains("sk-secret-123") && !json.contains("api_key"));
    }

    #[test]
    fn backoff_doubles() {
        let cfg = ClientConfig { backoff_base_secs: 0.5, ..Default::default() };
        assert_eq!(cfg.backoff(0), Duration::from_millis(500));
        assert_eq!(cfg.backoff(3), Duration::from_secs(4));
    }

    #[test]
    fn endpoint_joins_slashes() {
        let cfg = ClientConfig { base_url: "http://h/v1/".into(), ..Default::default() };
        assert_eq!(cfg.endpoint("/chat/completions"), "http://h/v1/chat/completions");
    }

    #[test]
    fn invalid_values() {
        assert!(ClientConfig { max_concurrent: 0, ..Default::default() }.validate().is_err());
        assert!(ClientConfig { timeout_secs: 0.0, ..Default::default() }.validate().is_err());
        assert!(GenerationRequest::new("p", -0.1, 1).validate().is_err());
        assert!(GenerationRequest::new("p", 0.0, 0).validate().is_err());
    }
}
