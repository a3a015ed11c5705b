//! Model traits and the request-level operations built on them.

use crate::config::GenerationRequest;
use crate::error::{LlmError, Result};

/// A chat-completion endpoint. Implementations must be shareable across
/// worker threads.
pub trait ChatModel: Send + Sync {
    fn model_name(&self) -> &str;

    /// One round trip; may return fewer than `req.n_samples` completions.
    fn complete(&self, req: &GenerationRequest) -> Result<Vec<String>>;
}

/// An embedding endpoint returning one row per input text.
pub trait Embedder: Send + Sync {
    fn model_name(&self) -> &str;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

impl<M: ChatModel + ?Sized> ChatModel for Box<M> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    fn complete(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        (**self).complete(req)
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        (**self).embed(texts)
    }
}

const MAX_EMPTY_ROUNDS: usize = 3;

/// Returns exactly `req.n_samples` completions, asking again for the
/// remainder when the endpoint returns fewer choices than requested.
pub fn chat_complete(model: &dyn ChatModel, req: &GenerationRequest) -> Result<Vec<String>> {
    req.validate()?;
    let mut out = Vec::with_capacity(req.n_samples);
    let mut empty_rounds = 0;
    while out.len() < req.n_samples {
        let remaining = GenerationRequest { n_samples: req.n_samples - out.len(), ..req.clone() };
        let got = model.complete(&remaining)?;
        if got.is_empty() {
            empty_rounds += 1;
            if empty_rounds >= MAX_EMPTY_ROUNDS {
                return Err(LlmError::MalformedResponse(format!(
                    "endpoint returned no choices {MAX_EMPTY_ROUNDS} times in a row"
                )));
            }
            continue;
        }
        out.extend(got.into_iter().take(remaining.n_samples));
    }
    Ok(out)
}

/// Embeds `texts`, checking that every row has the same dimension.
pub fn embed_texts(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<Vec<f64>>> {
    if texts.is_empty() {
        return Err(LlmError::InvalidRequest("no texts to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(LlmError::InvalidRequest(format!("text {i} is empty")));
    }
    let rows = embedder.embed(texts)?;
    if rows.len() != texts.len() {
        return Err(LlmError::MalformedResponse(format!("{} embeddings for {} texts", rows.len(), texts.len())));
    }
    check_dims(&rows, None)?;
    Ok(rows)
}

/// Errors when rows disagree in length with each other or with `expected`.
pub(crate) fn check_dims(rows: &[Vec<f64>], expected: Option<usize>) -> Result<Option<usize>> {
    let mut dim = expected;
    for r in rows {
        match dim {
            Some(d) if d != r.len() => return Err(LlmError::DimensionMismatch { expected: d, got: r.len() }),
            _ => dim = Some(r.len()),
        }
    }
    Ok(dim)
}
