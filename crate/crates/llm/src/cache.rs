//! Content-addressed embedding cache, optionally persisted as JSONL.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use geouq_core::jsonl::{append_jsonl, read_jsonl_lenient, write_jsonl};

use crate::client::{check_dims, Embedder};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    model: String,
    embedding: Vec<f64>,
}

/// `sha256(model \0 text)` in hex.
pub fn cache_key(model: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Default)]
struct State {
    rows: HashMap<String, Arc<Vec<f64>>>,
    dim: Option<usize>,
    hits: usize,
    misses: usize,
}

/// Wraps an embedder so each distinct `(model, text)` is embedded once.
pub struct CachedEmbedder<E> {
    inner: E,
    path: Option<PathBuf>,
    state: Mutex<State>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn in_memory(inner: E) -> Self {
        CachedEmbedder { inner, path: None, state: Mutex::new(State::default()) }
    }

    /// Loads earlier entries for this model from `path` and appends new ones.
    pub fn persistent(inner: E, path: &Path) -> Result<Self> {
        let lines: Vec<CacheLine> = read_jsonl_lenient(path)?;
        let mut state = State::default();
        let model = inner.model_name().to_string();
        for line in lines.iter().filter(|l| l.model == model) {
            state.dim = check_dims(std::slice::from_ref(&line.embedding), state.dim)?;
            state.rows.insert(line.key.clone(), Arc::new(line.embedding.clone()));
        }
        // rewrite so a torn tail from an interrupted run is not appended to
        if path.exists() {
            write_jsonl(path, &lines)?;
        }
        Ok(CachedEmbedder { inner, path: Some(path.to_path_buf()), state: Mutex::new(state) })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn hits(&self) -> usize {
        self.state.lock().expect("cache lock").hits
    }

    pub fn misses(&self) -> usize {
        self.state.lock().expect("cache lock").misses
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("cache lock").rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rewrites the cache file sorted by model and key, one line per entry,
    /// so its bytes do not depend on the order requests finished in.
    pub fn compact(&self) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let _st = self.state.lock().expect("cache lock");
        let mut lines: Vec<CacheLine> = read_jsonl_lenient(path)?;
        lines.sort_by(|a, b| (&a.model, &a.key).cmp(&(&b.model, &b.key)));
        lines.dedup_by(|a, b| a.model == b.model && a.key == b.key);
        write_jsonl(path, &lines)?;
        Ok(())
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let model = self.inner.model_name().to_string();
        let keys: Vec<String> = texts.iter().map(|t| cache_key(&model, t)).collect();
        let (missing, dim) = {
            let mut st = self.state.lock().expect("cache lock");
            let mut missing: Vec<usize> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for (i, k) in keys.iter().enumerate() {
                if st.rows.contains_key(k) {
                    st.hits += 1;
                } else if seen.insert(k.as_str()) {
                    missing.push(i);
                } else {
                    st.hits += 1;
                }
            }
            st.misses += missing.len();
            (missing, st.dim)
        };
        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let rows = self.inner.embed(&batch)?;
            let mut st = self.state.lock().expect("cache lock");
            let dim = check_dims(&rows, st.dim.or(dim))?;
            st.dim = dim;
            for (&i, row) in missing.iter().zip(rows) {
                if let Some(path) = &self.path {
                    append_jsonl(path, &CacheLine { key: keys[i].clone(), model: model.clone(), embedding: row.clone() })?;
                }
                st.rows.insert(keys[i].clone(), Arc::new(row));
            }
        }
        let st = self.state.lock().expect("cache lock");
        Ok(keys.iter().map(|k| st.rows[k].as_ref().clone()).collect())
    }
}
