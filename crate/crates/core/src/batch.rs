//! Reduce, fit and score one batch of response embeddings end to end.

use crate::archetypes::{fit_aa, AaOptions, ArchetypeModel, DEFAULT_ARCHETYPES, DEFAULT_STEPS};
use crate::embedding::{reduce_batch, EmbeddingBatch, ReducedBatch, DEFAULT_PCA_DIM};
use crate::error::Result;
use crate::geometry::{geometric_volume, GlobalScore, DEFAULT_EPSILON};
use crate::scalar::Scalar;
use crate::suspicion::{select_best_of_n, SuspicionBreakdown, SuspicionOptions, DEFAULT_K_NEIGHBORS};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub pca_dim: usize,
    pub k_archetypes: usize,
    pub aa_steps: usize,
    pub k_neighbors: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub fuse_extended: bool,
    pub voronoi: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            pca_dim: DEFAULT_PCA_DIM,
            k_archetypes: DEFAULT_ARCHETYPES,
            aa_steps: DEFAULT_STEPS,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            fuse_extended: false,
            voronoi: true,
        }
    }
}

impl BatchConfig {
    pub fn aa_options(&self) -> AaOptions {
        AaOptions { steps: self.aa_steps, seed: self.seed, ..AaOptions::default() }
    }

    pub fn suspicion_options(&self) -> SuspicionOptions {
        SuspicionOptions {
            k_neighbors: self.k_neighbors,
            fuse_extended: self.fuse_extended,
            voronoi: self.voronoi,
            seed: self.seed,
        }
    }
}

/// Number of archetypes actually fitted: at most `n` points and at most
/// `d' + 1` affinely independent vertices.
pub fn effective_archetypes(requested: usize, n: usize, reduced_dim: usize) -> usize {
    requested.min(n).min(reduced_dim + 1).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome<T: Scalar> {
    pub reduced: ReducedBatch<T>,
    pub model: ArchetypeModel<T>,
    pub score: GlobalScore<T>,
    pub suspicion: SuspicionBreakdown<T>,
    pub k_used: usize,
}

/// Fits archetypes on an already reduced batch.
pub fn fit_reduced<T: Scalar>(reduced: &ReducedBatch<T>, cfg: &BatchConfig) -> Result<(ArchetypeModel<T>, usize)> {
    let x = reduced.x();
    let k = effective_archetypes(cfg.k_archetypes, x.nrows(), x.ncols());
    Ok((fit_aa(x, k, &cfg.aa_options())?, k))
}

/// Global score; a single archetype (flat batch) has zero volume.
pub fn global_score<T: Scalar>(question_id: &str, model: &ArchetypeModel<T>, epsilon: T) -> Result<GlobalScore<T>> {
    if model.k() < 2 {
        return Ok(GlobalScore {
            question_id: question_id.to_string(),
            volume: T::zero(),
            h_g: epsilon.ln(),
            epsilon,
            degenerate: true,
        });
    }
    geometric_volume(question_id, model, epsilon)
}

pub fn analyze_batch<T: Scalar>(batch: &EmbeddingBatch<T>, cfg: &BatchConfig) -> Result<BatchOutcome<T>> {
    let reduced = reduce_batch(batch, cfg.pca_dim)?;
    let (model, k_used) = fit_reduced(&reduced, cfg)?;
    let score = global_score(&batch.question_id, &model, T::lit(cfg.epsilon))?;
    let suspicion = select_best_of_n(&reduced, &model, &cfg.suspicion_options())?;
    Ok(BatchOutcome { reduced, model, score, suspicion, k_used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn archetype_count_caps() {
        assert_eq!(effective_archetypes(16, 20, 15), 16);
        assert_eq!(effective_archetypes(16, 4, 3), 4);
        assert_eq!(effective_archetypes(16, 20, 2), 3);
        assert_eq!(effective_archetypes(16, 20, 0), 1);
    }

    #[test]
    fn identical_rows_yield_degenerate_scores_and_ties() {
        let batch = EmbeddingBatch::new("same", DMatrix::from_element(6, 5, 1.0), None).unwrap();
        let cfg = BatchConfig { aa_steps: 50, ..Default::default() };
        let out = analyze_batch(&batch, &cfg).unwrap();
        assert!(out.score.degenerate);
        assert_eq!(out.score.h_g, 1e-12f64.ln());
        assert!(out.suspicion.all_ties);
        assert_eq!(out.suspicion.selected_index, 0);
    }
}
