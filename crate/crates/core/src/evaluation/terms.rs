//! Per-term comparison of hallucinated and correct responses across
//! hallucination-rate subsets.

use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mann_whitney::mann_whitney_one_sided;
use super::{hallucination_rate, SubsetName};
use crate::error::{GeoError, Result};
use crate::suspicion::SuspicionBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    #[serde(rename = "L")]
    LocalDensity,
    #[serde(rename = "D")]
    DistConsensus,
    #[serde(rename = "U")]
    UsageRarity,
    #[serde(rename = "voronoi")]
    Voronoi,
    #[serde(rename = "H_L")]
    GeoEntropy,
    #[serde(rename = "D_A")]
    DistNearestArchetype,
}

impl Term {
    pub const ALL: [Term; 6] = [
        Term::LocalDensity,
        Term::DistConsensus,
        Term::UsageRarity,
        Term::Voronoi,
        Term::GeoEntropy,
        Term::DistNearestArchetype,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Term::LocalDensity => "Local Density (L)",
            Term::DistConsensus => "Distance from Consensus (D)",
            Term::UsageRarity => "Usage Rarity (U)",
            Term::Voronoi => "Voronoi Volume",
            Term::GeoEntropy => "Geometric Entropy (H_L)",
            Term::DistNearestArchetype => "Distance to Archetype (D_A)",
        }
    }

    fn index(self) -> usize {
        Term::ALL.iter().position(|&t| t == self).expect("listed")
    }
}

/// Term values and sample labels of one question.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuestionTerms {
    pub question_id: String,
    pub labels: Vec<u8>,
    /// Indexed like [`Term::ALL`]; `None` when the term was not computed.
    pub values: [Option<Vec<f64>>; 6],
}

impl QuestionTerms {
    pub fn term(&self, t: Term) -> Option<&[f64]> {
        self.values[t.index()].as_deref()
    }

    pub fn set(&mut self, t: Term, v: Vec<f64>) {
        self.values[t.index()] = Some(v);
    }

    /// Collects the terms of a scored batch, each oriented so that larger
    /// values are more suspicious: geometric entropy enters negated, since a
    /// response dominated by one archetype sits on the batch boundary.
    pub fn from_suspicion(labels: Vec<u8>, b: &SuspicionBreakdown<f64>) -> Self {
        let mut q = QuestionTerms { question_id: b.question_id.clone(), labels, ..Default::default() };
        q.set(Term::LocalDensity, b.local_density.clone());
        q.set(Term::DistConsensus, b.dist_consensus.clone());
        q.set(Term::UsageRarity, b.usage_rarity.clone());
        if let Some(v) = &b.voronoi {
            q.set(Term::Voronoi, v.clone());
        }
        if let Some(h) = &b.geo_entropy {
            q.set(Term::GeoEntropy, h.iter().map(|v| -v).collect());
        }
        if let Some(d) = &b.dist_nearest_archetype {
            q.set(Term::DistNearestArchetype, d.clone());
        }
        q
    }

    fn mixed(&self) -> bool {
        let r = hallucination_rate(&self.labels);
        !self.labels.is_empty() && r > 0.0 && r < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TermOptions {
    /// Z-score each term within its question before pooling.
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCell {
    pub term: Term,
    pub subset: SubsetName,
    /// `None` when either label group of the cell is empty.
    pub p_value: Option<f64>,
    pub n_hallucinated: usize,
    pub n_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermTable {
    pub subsets: Vec<SubsetName>,
    pub cells: Vec<TermCell>,
}

impl TermTable {
    pub fn get(&self, term: Term, subset: SubsetName) -> Option<&TermCell> {
        self.cells.iter().find(|c| c.term == term && c.subset == subset)
    }

    /// Aligned text table, one row per term and one column per subset.
    pub fn to_text(&self) -> String {
        let width = Term::ALL.iter().map(|t| t.label().len()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = write!(out, "{:width$}", "Term");
        for s in &self.subsets {
            let _ = write!(out, "  {:>10}", s.as_str());
        }
        out.push('\n');
        for term in Term::ALL {
            let _ = write!(out, "{:width$}", term.label());
            for &s in &self.subsets {
                let cell = match self.get(term, s).and_then(|c| c.p_value) {
                    Some(p) => format_p(p),
                    None => "-".to_string(),
                };
                let _ = write!(out, "  {cell:>10}");
            }
            out.push('\n');
        }
        out
    }
}

fn format_p(p: f64) -> String {
    if p < 1e-3 {
        format!("{p:.2e}")
    } else {
        format!("{p:.3}")
    }
}

/// One-sided test per (term, subset) that hallucinated responses have larger
/// term values than correct ones, pooling responses across the questions of
/// the subset. Questions whose samples all share one label are skipped.
pub fn analyze_terms(questions: &[QuestionTerms], subsets: &[SubsetName], opts: TermOptions) -> Result<TermTable> {
    for q in questions {
        for v in q.values.iter().flatten() {
            if v.len() != q.labels.len() {
                return Err(GeoError::LengthMismatch { expected: q.labels.len(), got: v.len() });
            }
        }
    }
    let mixed: Vec<&QuestionTerms> = questions.iter().filter(|q| q.mixed()).collect();
    let grid: Vec<(Term, SubsetName)> =
        Term::ALL.iter().flat_map(|&t| subsets.iter().map(move |&s| (t, s))).collect();
    let cells = grid
        .into_par_iter()
        .map(|(term, subset)| cell(&mixed, term, subset, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(TermTable { subsets: subsets.to_vec(), cells })
}

fn cell(questions: &[&QuestionTerms], term: Term, subset: SubsetName, opts: TermOptions) -> Result<TermCell> {
    let spec = subset.spec();
    let (mut hi, mut lo) = (Vec::new(), Vec::new());
    for q in questions.iter().filter(|q| spec.contains(hallucination_rate(&q.labels))) {
        let Some(values) = q.term(term) else { continue };
        let values = if opts.standardize { standardize(values) } else { values.to_vec() };
        for (v, &l) in values.into_iter().zip(&q.labels) {
            if l != 0 {
                hi.push(v);
            } else {
                lo.push(v);
            }
        }
    }
    let p_value = if hi.is_empty() || lo.is_empty() { None } else { Some(mann_whitney_one_sided(&hi, &lo)?.p_value) };
    Ok(TermCell { term, subset, p_value, n_hallucinated: hi.len(), n_correct: lo.len() })
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        v.iter().map(|x| (x - mean) / sd).collect()
    } else {
        vec![0.0; v.len()]
    }
}
