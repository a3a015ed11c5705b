//! OpenAI-compatible chat and embedding clients with retry and a
//! concurrency cap.

use std::sync::Arc;

use log::{debug, warn};
use serde::Deserialize;
use serde_json::json;

use crate::client::{ChatModel, Embedder};
use crate::config::{ClientConfig, GenerationRequest};
use crate::error::{LlmError, Result};
use crate::limiter::ConcurrencyLimiter;
use crate::transport::{Transport, UreqTransport};

const ERROR_BODY_LIMIT: usize = 512;

/// Shared plumbing: transport, retry loop and limiter.
pub struct HttpClient {
    cfg: ClientConfig,
    transport: Arc<dyn Transport>,
    limiter: ConcurrencyLimiter,
}

impl HttpClient {
    pub fn new(cfg: ClientConfig) -> Result<Self> {
        let transport = Arc::new(UreqTransport::new(cfg.timeout()));
        Self::with_transport(cfg, transport)
    }

    pub fn with_transport(cfg: ClientConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        cfg.validate()?;
        let limiter = ConcurrencyLimiter::new(cfg.max_concurrent);
        Ok(HttpClient { cfg, transport, limiter })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    pub fn limiter(&self) -> &ConcurrencyLimiter {
        &self.limiter
    }

    /// POSTs `body` to `{base}/{path}`. 429, 5xx and transport failures are
    /// retried with exponential backoff; 401/403 fail at once.
    pub fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let url = self.cfg.endpoint(path);
        let payload = body.to_string();
        let bearer = (!self.cfg.api_key.is_empty()).then(|| self.cfg.api_key.expose());
        let mut last_status = None;
        let mut detail = String::new();
        let attempts = self.cfg.max_retries + 1;
        for attempt in 0..attempts {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.transport.post_json(&url, bearer, &payload)
            };
            match outcome {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return serde_json::from_str(&resp.body)
                        .map_err(|e| LlmError::MalformedResponse(format!("response is not JSON: {e}")));
                }
                Ok(resp) if resp.status == 401 || resp.status == 403 => {
                    return Err(LlmError::Auth { status: resp.status });
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last_status = Some(resp.status);
                    detail = truncate(&resp.body);
                }
                Ok(resp) => return Err(LlmError::Http { status: resp.status, body: truncate(&resp.body) }),
                Err(e) => {
                    last_status = None;
                    detail = e;
                }
            }
            if attempt + 1 < attempts {
                let wait = self.cfg.backoff(attempt);
                warn!("{path}: attempt {} failed ({last_status:?}), retrying in {wait:?}", attempt + 1);
                std::thread::sleep(wait);
            }
        }
        Err(LlmError::RateLimited { attempts, last_status, detail })
    }
}

fn truncate(s: &str) -> String {
    match s.char_indices().nth(ERROR_BODY_LIMIT) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

pub struct HttpChat {
    client: HttpClient,
}

impl HttpChat {
    pub fn new(cfg: ClientConfig) -> Result<Self> {
        Ok(HttpChat { client: HttpClient::new(cfg)? })
    }

    pub fn with_transport(cfg: ClientConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        Ok(HttpChat { client: HttpClient::with_transport(cfg, transport)? })
    }

    pub fn client(&self) -> &HttpClient {
        &self.client
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl ChatModel for HttpChat {
    fn model_name(&self) -> &str {
        &self.client.cfg.model_name
    }

    fn complete(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        let body = json!({
            "model": self.client.cfg.model_name,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "n": req.n_samples,
            "max_tokens": req.max_tokens,
        });
        let value = self.client.post("chat/completions", &body)?;
        let parsed: ChatResponse = serde_json::from_value(value)
            .map_err(|e| LlmError::MalformedResponse(format!("chat completion: {e}")))?;
        debug!("chat: {} choices", parsed.choices.len());
        parsed
            .choices
            .into_iter()
            .map(|c| c.message.content.ok_or_else(|| LlmError::MalformedResponse("choice without content".into())))
            .collect()
    }
}

pub struct HttpEmbedder {
    client: HttpClient,
}

impl HttpEmbedder {
    pub fn new(cfg: ClientConfig) -> Result<Self> {
        Ok(HttpEmbedder { client: HttpClient::new(cfg)? })
    }

    pub fn with_transport(cfg: ClientConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        Ok(HttpEmbedder { client: HttpClient::with_transport(cfg, transport)? })
    }

    pub fn client(&self) -> &HttpClient {
        &self.client
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl Embedder for HttpEmbedder {
    fn model_name(&self) -> &str {
        &self.client.cfg.model_name
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = json!({ "model": self.client.cfg.model_name, "input": texts });
        let value = self.client.post("embeddings", &body)?;
        let parsed: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| LlmError::MalformedResponse(format!("embeddings: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(LlmError::MalformedResponse(format!(
                "{} embeddings for {} inputs",
                parsed.data.len(),
                texts.len()
            )));
        }
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for (pos, item) in parsed.data.into_iter().enumerate() {
            let i = item.index.unwrap_or(pos);
            match rows.get_mut(i) {
                Some(slot @ None) => *slot = Some(item.embedding),
                _ => return Err(LlmError::MalformedResponse(format!("bad or repeated embedding index {i}"))),
            }
        }
        Ok(rows.into_iter().map(|r| r.expect("every index filled")).collect())
    }
}
