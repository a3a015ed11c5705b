//! Synthetic response-embedding corpora with known hallucination labels.
//!
//! Correct samples scatter tightly around a per-question answer direction;
//! hallucinated samples scatter widely around it ("many ways to be wrong").
//! Above a configurable sampled hallucination rate the model is taken to be
//! confidently wrong: hallucinations then cluster tightly around a single
//! wrong answer and the few correct samples become the outliers.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::EmbeddingBatch;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_questions: usize,
    pub n_samples: usize,
    /// Raw embedding dimension.
    pub dim: usize,
    pub correct_sigma: f64,
    pub hallucination_sigma: f64,
    /// Per-question hallucination rates are drawn uniformly from this range.
    pub rate_range: (f64, f64),
    /// Rates strictly above this produce a single tight wrong-answer cluster.
    pub confident_wrong_above: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_questions: 200,
            n_samples: 20,
            dim: 64,
            correct_sigma: 0.05,
            hallucination_sigma: 1.0,
            rate_range: (0.0, 1.0),
            confident_wrong_above: Some(0.75),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticQuestion {
    pub question_id: String,
    pub rows: DMatrix<f64>,
    pub default_row: DVector<f64>,
    pub sample_labels: Vec<u8>,
    pub default_label: u8,
}

impl SyntheticQuestion {
    pub fn batch(&self) -> Result<EmbeddingBatch<f64>> {
        EmbeddingBatch::new(self.question_id.clone(), self.rows.clone(), Some(self.default_row.clone()))
    }
}

pub fn generate_corpus(cfg: &SyntheticConfig, seed: u64) -> Vec<SyntheticQuestion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.n_questions).map(|q| generate_question(cfg, format!("syn-{q:04}"), &mut rng)).collect()
}

fn generate_question(cfg: &SyntheticConfig, question_id: String, rng: &mut ChaCha8Rng) -> SyntheticQuestion {
    let n = cfg.n_samples;
    let (lo, hi) = cfg.rate_range;
    let rate = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let n_wrong = ((rate * n as f64).round() as usize).min(n);
    let sampled_rate = n_wrong as f64 / n as f64;
    let confident = cfg.confident_wrong_above.is_some_and(|t| sampled_rate > t);

    let answer = unit_vector(cfg.dim, rng);
    let wrong_answer = unit_vector(cfg.dim, rng);
    let draw = |wrong: bool, rng: &mut ChaCha8Rng| -> DVector<f64> {
        match (wrong, confident) {
            (false, _) => jitter(&answer, cfg.correct_sigma, rng),
            (true, false) => jitter(&answer, cfg.hallucination_sigma, rng),
            (true, true) => jitter(&wrong_answer, cfg.correct_sigma, rng),
        }
    };

    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n_wrong)).collect();
    labels.shuffle(rng);
    let mut rows = DMatrix::zeros(n, cfg.dim);
    for (i, &l) in labels.iter().enumerate() {
        rows.set_row(i, &draw(l == 1, rng).transpose());
    }
    let default_label = u8::from(rng.random::<f64>() < sampled_rate);
    let default_row = draw(default_label == 1, rng);
    SyntheticQuestion { question_id, rows, default_row, sample_labels: labels, default_label }
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(rng));
    let norm = v.norm();
    v / norm
}

fn jitter(center: &DVector<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    center + DVector::from_fn(center.len(), |_, _| sigma * Distribution::<f64>::sample(&StandardNormal, rng))
}
