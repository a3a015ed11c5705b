//! Deterministic in-process chat and embedding models for offline runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::client::{ChatModel, Embedder};
use crate::config::GenerationRequest;
use crate::error::Result;
use crate::limiter::ConcurrencyLimiter;

pub const MOCK_EMBED_DIM: usize = 64;

const VOCAB: &[&str] = &[
    "amber", "basalt", "cobalt", "delta", "ember", "fjord", "granite", "harbor", "indigo", "juniper", "kelp",
    "lantern", "meadow", "nickel", "orchid", "pewter", "quartz", "russet", "saffron", "tundra", "umber", "violet",
    "walnut", "xenon", "yarrow", "zephyr", "copper", "lagoon", "marble", "obsidian", "prairie", "sierra",
];

const CORRECT_TEMPLATES: &[&str] = &[
    "{ref}",
    "It is {ref}",
    "{ref}, I think",
    "The answer is {ref}",
    "I believe it is {ref}",
    "{ref}, most likely",
    "Probably {ref}",
    "That would be {ref}",
];

/// SHA-256 of the NUL-joined parts, truncated to 64 bits.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.update([0u8]);
        }
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockMode {
    /// Every completion is this text.
    Fixed(String),
    /// A few vocabulary words drawn from `hash(seed, prompt, index)`.
    Hashed,
    /// Answers questions found in the prompt, hallucinating at a per-question
    /// rate; prompts with no known question fall back to [`MockMode::Hashed`].
    AnswerKey(AnswerKey),
    /// Judge stand-in: answers `CORRECT` when the longest known reference
    /// found in the prompt occurs there at least twice (once as the
    /// reference, once inside the candidate), `INCORRECT` otherwise.
    ReferenceJudge(Vec<String>),
}

/// Question/reference pairs, matched against prompts by substring.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnswerKey {
    entries: Vec<(String, String)>,
}

impl AnswerKey {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut entries: Vec<(String, String)> = pairs.into_iter().collect();
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        AnswerKey { entries }
    }

    /// Reference of the longest known question contained in `prompt`.
    pub fn lookup(&self, prompt: &str) -> Option<(&str, &str)> {
        self.entries.iter().find(|(q, _)| prompt.contains(q.as_str())).map(|(q, r)| (q.as_str(), r.as_str()))
    }
}

pub struct MockChat {
    model_name: String,
    mode: MockMode,
    seed: u64,
    latency: Duration,
    limiter: ConcurrencyLimiter,
    calls: AtomicUsize,
}

impl MockChat {
    pub fn new(mode: MockMode, seed: u64) -> Self {
        MockChat {
            model_name: "mock-chat".into(),
            mode,
            seed,
            latency: Duration::ZERO,
            limiter: ConcurrencyLimiter::new(usize::MAX),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self::new(MockMode::Fixed(text.into()), 0)
    }

    /// Sleeps this long inside every call, holding a concurrency slot.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_max_concurrent(mut self, max: usize) -> Self {
        self.limiter = ConcurrencyLimiter::new(max);
        self
    }

    pub fn limiter(&self) -> &ConcurrencyLimiter {
        &self.limiter
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Hallucination probability the answer-key mode uses for `question`.
    pub fn hallucination_rate(&self, question: &str) -> f64 {
        unit_interval(stable_hash(&[&self.seed.to_le_bytes(), b"rate", question.as_bytes()]))
    }

    fn hashed(&self, prompt: &str, index: usize) -> String {
        let h = stable_hash(&[&self.seed.to_le_bytes(), prompt.as_bytes(), &index.to_le_bytes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let n = rng.random_range(1..=4);
        (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
    }

    fn answer(&self, question: &str, reference: &str, prompt: &str, index: usize, greedy: bool) -> String {
        let rate = self.hallucination_rate(question);
        let h = stable_hash(&[&self.seed.to_le_bytes(), b"sample", prompt.as_bytes(), &index.to_le_bytes()]);
        let wrong = if greedy { rate > 0.5 } else { unit_interval(h) < rate };
        if wrong {
            self.hashed(prompt, index)
        } else {
            CORRECT_TEMPLATES[(h % CORRECT_TEMPLATES.len() as u64) as usize].replace("{ref}", reference)
        }
    }

    fn one(&self, req: &GenerationRequest, index: usize) -> String {
        let greedy = req.temperature == 0.0;
        let index = if greedy { 0 } else { index };
        match &self.mode {
            MockMode::Fixed(text) => text.clone(),
            MockMode::Hashed => self.hashed(&req.prompt, index),
            MockMode::AnswerKey(key) => match key.lookup(&req.prompt) {
                Some((q, r)) => self.answer(q, r, &req.prompt, index, greedy),
                None => self.hashed(&req.prompt, index),
            },
            MockMode::ReferenceJudge(refs) => {
                let found = refs.iter().filter(|r| !r.is_empty() && req.prompt.contains(r.as_str())).max_by_key(|r| r.len());
                match found {
                    Some(r) if req.prompt.matches(r.as_str()).count() >= 2 => "CORRECT".into(),
                    _ => "INCORRECT".into(),
                }
            }
        }
    }
}

impl ChatModel for MockChat {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        let _permit = self.limiter.acquire();
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        Ok((0..req.n_samples).map(|i| self.one(req, i)).collect())
    }
}

/// Bag-of-tokens embedder: the normalized sum of one fixed Gaussian vector
/// per lowercase alphanumeric token.
pub struct MockEmbedder {
    model_name: String,
    dim: usize,
    calls: AtomicUsize,
    texts_embedded: AtomicUsize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(MOCK_EMBED_DIM)
    }
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        MockEmbedder {
            model_name: "mock-embed".into(),
            dim,
            calls: AtomicUsize::new(0),
            texts_embedded: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn texts_embedded(&self) -> usize {
        self.texts_embedded.load(Ordering::SeqCst)
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[self.model_name.as_bytes(), token.as_bytes()]));
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut toks = tokens(text);
        if toks.is_empty() {
            toks.push(text.to_string());
        }
        let mut v = vec![0.0; self.dim];
        for t in &toks {
            for (a, b) in v.iter_mut().zip(self.token_vector(t)) {
                *a += b;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect()
    }
}

impl Embedder for MockEmbedder {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.texts_embedded.fetch_add(texts.len(), Ordering::SeqCst);
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
