//! Connectors to OpenAI-compatible chat, embedding and judge endpoints, a
//! deterministic offline mock of each, and the curation step that turns a
//! question corpus into labelled response batches.
//!
//! Every client is `Send + Sync`; concurrency is capped per client by
//! `max_concurrent` and the embedding cache is internally locked.

pub mod cache;
pub mod client;
pub mod config;
pub mod curation;
pub mod error;
pub mod http;
pub mod judge;
pub mod limiter;
pub mod mock;
pub mod transport;

pub use cache::CachedEmbedder;
pub use client::{chat_complete, embed_texts, ChatModel, Embedder};
pub use config::{ApiKey, ClientConfig, GenerationRequest};
pub use error::{LlmError, Result};
pub use http::{HttpChat, HttpEmbedder};
pub use judge::{Judge, JudgeConfig};
pub use mock::{AnswerKey, MockChat, MockEmbedder, MockMode};
