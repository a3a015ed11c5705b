//! Detection metrics, threshold tuning, Best-of-N hallucination rates,
//! hallucination-rate subsets and rank statistics.

mod mann_whitney;
mod report;
mod terms;

use num::rational::Ratio;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};

pub use mann_whitney::{mann_whitney_exact, mann_whitney_normal, mann_whitney_one_sided, MannWhitney, MwMethod};
pub use report::{aggregate, deserialize_threshold, serialize_threshold, format_detection_table, format_subset_table, Aggregate, EvalReport, MeanStd};
pub use terms::{analyze_terms, QuestionTerms, Term, TermCell, TermOptions, TermTable};

/// Share of the data held out for threshold tuning.
pub const DEFAULT_VAL_FRACTION: f64 = 0.10;
const MAX_SPLIT_ATTEMPTS: usize = 5;

/// `2TP / (2TP + FP + FN)`, zero when nothing is positive on either side.
pub fn f1_score(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(GeoError::LengthMismatch { expected: truth.len(), got: pred.len() });
    }
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    Ok(f1_from_counts(tp, fp, fneg))
}

fn f1_from_counts(tp: u64, fp: u64, fneg: u64) -> f64 {
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Counts are exact integers until the final division.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(GeoError::LengthMismatch { expected: labels.len(), got: scores.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(GeoError::NonFinite);
    }
    let pos = labels.iter().filter(|&&l| l != 0).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(GeoError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // doubled count: 2 per strict win, 1 per tie
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let gp = group.iter().filter(|&&g| labels[g] != 0).count() as u128;
        let gn = group.len() as u128 - gp;
        doubled += gp * (2 * neg_below + gn);
        neg_below += gn;
        i = j;
    }
    let ratio = Ratio::new(doubled, 2 * pos * neg);
    Ok(ratio.to_f64().expect("ratio in [0, 1]"))
}

/// Threshold maximising F1 of `score > tau` on the given data, with the
/// smallest such threshold on ties. Candidates are `-inf`, midpoints of
/// consecutive distinct scores, and `+inf`.
pub fn best_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(GeoError::LengthMismatch { expected: labels.len(), got: scores.len() });
    }
    if scores.is_empty() {
        return Err(GeoError::EmptySet);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let pos = labels.iter().filter(|&&l| l != 0).count() as u64;
    let neg = labels.len() as u64 - pos;

    // tau = -inf: everything predicted positive
    let (mut tp, mut fp) = (pos, neg);
    let mut best = (f64::NEG_INFINITY, f1_from_counts(tp, fp, 0));
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if labels[order[i]] != 0 {
                tp -= 1;
            } else {
                fp -= 1;
            }
            i += 1;
        }
        let tau = if i < order.len() { midpoint(v, scores[order[i]]) } else { f64::INFINITY };
        let f1 = f1_from_counts(tp, fp, pos - tp);
        if f1 > best.1 {
            best = (tau, f1);
        }
    }
    Ok(best)
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

/// Result of [`tune_threshold`].
#[derive(Debug, Clone, PartialEq)]
pub struct TunedThreshold {
    pub tau: f64,
    pub val_f1: f64,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Seed of the split that was finally used.
    pub split_seed: u64,
}

/// Selects `tau` on a seeded validation split of size
/// `ceil(val_fraction * n)`. A split with a single class is redrawn with the
/// next seed, up to five draws.
pub fn tune_threshold(scores: &[f64], labels: &[u8], val_fraction: f64, seed: u64) -> Result<TunedThreshold> {
    if scores.len() != labels.len() {
        return Err(GeoError::LengthMismatch { expected: labels.len(), got: scores.len() });
    }
    if scores.is_empty() {
        return Err(GeoError::EmptySet);
    }
    if !(val_fraction > 0.0 && val_fraction <= 1.0) {
        return Err(GeoError::InvalidInput(format!("val_fraction must lie in (0, 1], got {val_fraction}")));
    }
    let n = scores.len();
    let n_val = ((val_fraction * n as f64).ceil() as usize).clamp(1, n);
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let split_seed = seed.wrapping_add(attempt as u64);
        let mut idx: Vec<usize> = (0..n).collect();
        if n_val < n {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
        }
        let (val, test) = idx.split_at(n_val);
        let val_labels: Vec<u8> = val.iter().map(|&i| labels[i]).collect();
        let positives = val_labels.iter().filter(|&&l| l != 0).count();
        if positives == 0 || positives == val_labels.len() {
            continue;
        }
        let val_scores: Vec<f64> = val.iter().map(|&i| scores[i]).collect();
        let (tau, val_f1) = best_threshold(&val_scores, &val_labels)?;
        let mut val_indices = val.to_vec();
        val_indices.sort_unstable();
        let mut test_indices = test.to_vec();
        test_indices.sort_unstable();
        return Ok(TunedThreshold { tau, val_f1, val_indices, test_indices, split_seed });
    }
    Err(GeoError::SingleClassValidation { attempts: MAX_SPLIT_ATTEMPTS })
}

/// `score > tau` as 0/1 labels.
pub fn predict(scores: &[f64], tau: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > tau)).collect()
}

/// Baseline and Best-of-N hallucination rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HallucinationRates {
    pub baseline_hr: f64,
    pub bon_hr: f64,
    pub delta_hr: f64,
    pub n_questions: usize,
}

pub fn delta_hr(default_labels: &[u8], selected_labels: &[u8]) -> Result<HallucinationRates> {
    if default_labels.len() != selected_labels.len() {
        return Err(GeoError::LengthMismatch { expected: default_labels.len(), got: selected_labels.len() });
    }
    if default_labels.is_empty() {
        return Err(GeoError::EmptySet);
    }
    let n = default_labels.len() as f64;
    let baseline_hr = default_labels.iter().filter(|&&l| l != 0).count() as f64 / n;
    let bon_hr = selected_labels.iter().filter(|&&l| l != 0).count() as f64 / n;
    Ok(HallucinationRates { baseline_hr, bon_hr, delta_hr: baseline_hr - bon_hr, n_questions: default_labels.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetName {
    Low,
    MidLow,
    MidHigh,
    High,
    AllValid,
    MidValid,
}

impl SubsetName {
    pub const ALL: [SubsetName; 6] = [
        SubsetName::Low,
        SubsetName::MidLow,
        SubsetName::MidHigh,
        SubsetName::High,
        SubsetName::AllValid,
        SubsetName::MidValid,
    ];
    /// The four disjoint rate bands.
    pub const BANDS: [SubsetName; 4] = [SubsetName::Low, SubsetName::MidLow, SubsetName::MidHigh, SubsetName::High];

    pub fn as_str(self) -> &'static str {
        match self {
            SubsetName::Low => "low",
            SubsetName::MidLow => "mid_low",
            SubsetName::MidHigh => "mid_high",
            SubsetName::High => "high",
            SubsetName::AllValid => "all_valid",
            SubsetName::MidValid => "mid_valid",
        }
    }

    pub fn spec(self) -> SubsetSpec {
        let (lower, upper, upper_open) = match self {
            SubsetName::Low => (0.0, 0.25, false),
            SubsetName::MidLow => (0.25, 0.50, false),
            SubsetName::MidHigh => (0.50, 0.75, false),
            SubsetName::High => (0.75, 1.0, true),
            SubsetName::AllValid => (0.0, 1.0, true),
            SubsetName::MidValid => (0.33, 0.67, true),
        };
        SubsetSpec { name: self, lower, upper, lower_open: true, upper_open }
    }
}

impl std::fmt::Display for SubsetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SubsetName {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        SubsetName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| GeoError::InvalidInput(format!("unknown subset '{s}'")))
    }
}

/// Interval on the sampled hallucination rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetSpec {
    pub name: SubsetName,
    pub lower: f64,
    pub upper: f64,
    pub lower_open: bool,
    pub upper_open: bool,
}

impl SubsetSpec {
    pub fn contains(&self, r: f64) -> bool {
        let above = if self.lower_open { r > self.lower } else { r >= self.lower };
        let below = if self.upper_open { r < self.upper } else { r <= self.upper };
        above && below
    }
}

/// Fraction of hallucinated samples.
pub fn hallucination_rate(labels: &[u8]) -> f64 {
    labels.iter().filter(|&&l| l != 0).count() as f64 / labels.len() as f64
}

/// Indices of the questions whose sampled hallucination rate falls in `spec`.
pub fn split_by_hallucination_rate(sample_labels: &[Vec<u8>], spec: &SubsetSpec) -> Vec<usize> {
    sample_labels
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && spec.contains(hallucination_rate(l)))
        .map(|(i, _)| i)
        .collect()
}

/// Threshold tuned on the validation split, F1 and AUROC on the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub tau: f64,
    pub val_f1: f64,
    pub f1: f64,
    /// `None` when the test split holds one class only.
    pub auroc: Option<f64>,
    pub n_val: usize,
    pub n_test: usize,
    pub split_seed: u64,
}

/// Tunes on a validation split and reports metrics on the held-out rest
/// (on everything when the validation split covers all of it).
pub fn evaluate_detection(scores: &[f64], labels: &[u8], val_fraction: f64, seed: u64) -> Result<Detection> {
    let tuned = tune_threshold(scores, labels, val_fraction, seed)?;
    let test: Vec<usize> = if tuned.test_indices.is_empty() { tuned.val_indices.clone() } else { tuned.test_indices.clone() };
    let test_scores: Vec<f64> = test.iter().map(|&i| scores[i]).collect();
    let test_labels: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
    let f1 = f1_score(&predict(&test_scores, tuned.tau), &test_labels)?;
    let auroc = match auroc(&test_scores, &test_labels) {
        Ok(v) => Some(v),
        Err(GeoError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    Ok(Detection {
        tau: tuned.tau,
        val_f1: tuned.val_f1,
        f1,
        auroc,
        n_val: tuned.val_indices.len(),
        n_test: tuned.test_indices.len(),
        split_seed: tuned.split_seed,
    })
}
