//! JSONL wire records for the pipeline artifacts, keyed by `question_id`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::archetypes::ArchetypeModel;
use crate::embedding::{EmbeddingBatch, PcaFit, ReducedBatch};
use crate::error::{GeoError, Result};
use crate::geometry::GlobalScore;
use crate::suspicion::{DefaultTerms, SuspicionBreakdown};

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds a matrix from rows; `ncols` fixes the width when there are no rows.
pub fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    let width = rows.first().map_or(ncols, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(GeoError::LengthMismatch { expected: width, got: bad.len() });
    }
    Ok(DMatrix::from_row_iterator(rows.len(), width, rows.iter().flatten().copied()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub question_id: String,
    pub rows: Vec<Vec<f64>>,
    pub default_row: Option<Vec<f64>>,
}

impl EmbeddingRecord {
    pub fn to_batch(&self) -> Result<EmbeddingBatch<f64>> {
        let rows = rows_to_matrix(&self.rows, 0)?;
        EmbeddingBatch::new(self.question_id.clone(), rows, self.default_row.clone().map(DVector::from_vec))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedRecord {
    pub question_id: String,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub pca_basis: Vec<Vec<f64>>,
    pub pca_mean: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub discarded_eigenvalues: Vec<f64>,
    pub default_x: Option<Vec<f64>>,
    pub degenerate: bool,
}

impl From<&ReducedBatch<f64>> for ReducedRecord {
    fn from(b: &ReducedBatch<f64>) -> Self {
        ReducedRecord {
            question_id: b.question_id.clone(),
            x: matrix_to_rows(&b.pca.x),
            pca_basis: matrix_to_rows(&b.pca.basis),
            pca_mean: b.pca.mean.iter().copied().collect(),
            explained_variance: b.pca.explained_variance.clone(),
            discarded_eigenvalues: b.pca.discarded_eigenvalues.clone(),
            default_x: b.default_x.as_ref().map(|v| v.iter().copied().collect()),
            degenerate: b.pca.degenerate,
        }
    }
}

impl ReducedRecord {
    pub fn to_batch(&self) -> Result<ReducedBatch<f64>> {
        let d = self.pca_mean.len();
        let dim = self.explained_variance.len();
        let x = rows_to_matrix(&self.x, dim)?;
        let basis = rows_to_matrix(&self.pca_basis, d)?;
        Ok(ReducedBatch {
            question_id: self.question_id.clone(),
            pca: PcaFit {
                x,
                basis,
                mean: DVector::from_vec(self.pca_mean.clone()),
                explained_variance: self.explained_variance.clone(),
                discarded_eigenvalues: self.discarded_eigenvalues.clone(),
                degenerate: self.degenerate,
            },
            default_x: self.default_x.clone().map(DVector::from_vec),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeRecord {
    pub question_id: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "Z")]
    pub z: Vec<Vec<f64>>,
    pub final_objective: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

impl ArchetypeRecord {
    pub fn new(question_id: &str, m: &ArchetypeModel<f64>) -> Self {
        ArchetypeRecord {
            question_id: question_id.to_string(),
            a: matrix_to_rows(&m.a),
            b: matrix_to_rows(&m.b),
            z: matrix_to_rows(&m.z),
            final_objective: m.final_objective(),
            iterations: m.iterations,
            objective_trace: m.objective_trace.clone(),
        }
    }

    pub fn to_model(&self, dim: usize) -> Result<ArchetypeModel<f64>> {
        let k = self.b.len();
        Ok(ArchetypeModel {
            a: rows_to_matrix(&self.a, k)?,
            b: rows_to_matrix(&self.b, self.a.len())?,
            z: rows_to_matrix(&self.z, dim)?,
            objective_trace: self.objective_trace.clone(),
            iterations: self.iterations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub question_id: String,
    pub volume: f64,
    #[serde(rename = "H_G")]
    pub h_g: f64,
    pub epsilon: f64,
    pub degenerate: bool,
}

impl From<&GlobalScore<f64>> for ScoreRecord {
    fn from(s: &GlobalScore<f64>) -> Self {
        ScoreRecord {
            question_id: s.question_id.clone(),
            volume: s.volume,
            h_g: s.h_g,
            epsilon: s.epsilon,
            degenerate: s.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultTermsRecord {
    #[serde(rename = "L")]
    pub local_density: f64,
    #[serde(rename = "D")]
    pub dist_consensus: f64,
    #[serde(rename = "U")]
    pub usage_rarity: f64,
    #[serde(rename = "D_A")]
    pub dist_nearest_archetype: f64,
}

impl From<&DefaultTerms<f64>> for DefaultTermsRecord {
    fn from(t: &DefaultTerms<f64>) -> Self {
        DefaultTermsRecord {
            local_density: t.local_density,
            dist_consensus: t.dist_consensus,
            usage_rarity: t.usage_rarity,
            dist_nearest_archetype: t.dist_nearest_archetype,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspicionRecord {
    pub question_id: String,
    #[serde(rename = "L")]
    pub local_density: Vec<f64>,
    #[serde(rename = "D")]
    pub dist_consensus: Vec<f64>,
    #[serde(rename = "U")]
    pub usage_rarity: Vec<f64>,
    #[serde(rename = "H_L")]
    pub geo_entropy: Option<Vec<f64>>,
    #[serde(rename = "D_A")]
    pub dist_nearest_archetype: Option<Vec<f64>>,
    pub voronoi: Option<Vec<f64>>,
    pub ranks: Vec<Vec<usize>>,
    #[serde(rename = "S")]
    pub s: Vec<usize>,
    pub selected_index: usize,
    pub k_neighbors: usize,
    pub all_ties: bool,
    pub default_terms: Option<DefaultTermsRecord>,
}

impl From<&SuspicionBreakdown<f64>> for SuspicionRecord {
    fn from(b: &SuspicionBreakdown<f64>) -> Self {
        SuspicionRecord {
            question_id: b.question_id.clone(),
            local_density: b.local_density.clone(),
            dist_consensus: b.dist_consensus.clone(),
            usage_rarity: b.usage_rarity.clone(),
            geo_entropy: b.geo_entropy.clone(),
            dist_nearest_archetype: b.dist_nearest_archetype.clone(),
            voronoi: b.voronoi.clone(),
            ranks: b.ranks.clone(),
            s: b.s.clone(),
            selected_index: b.selected_index,
            k_neighbors: b.k_neighbors,
            all_ties: b.all_ties,
            default_terms: b.default_terms.as_ref().map(DefaultTermsRecord::from),
        }
    }
}

impl SuspicionRecord {
    pub fn to_breakdown(&self) -> SuspicionBreakdown<f64> {
        SuspicionBreakdown {
            question_id: self.question_id.clone(),
            local_density: self.local_density.clone(),
            dist_consensus: self.dist_consensus.clone(),
            usage_rarity: self.usage_rarity.clone(),
            geo_entropy: self.geo_entropy.clone(),
            dist_nearest_archetype: self.dist_nearest_archetype.clone(),
            voronoi: self.voronoi.clone(),
            ranks: self.ranks.clone(),
            s: self.s.clone(),
            selected_index: self.selected_index,
            k_neighbors: self.k_neighbors,
            all_ties: self.all_ties,
            default_terms: self.default_terms.as_ref().map(|t| DefaultTerms {
                local_density: t.local_density,
                dist_consensus: t.dist_consensus,
                usage_rarity: t.usage_rarity,
                dist_nearest_archetype: t.dist_nearest_archetype,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::reduce_batch;

    #[test]
    fn reduced_batch_round_trip() {
        let rows = DMatrix::from_row_slice(4, 3, &[1.0, 0.2, 0.0, 0.1, 1.0, 0.3, 0.0, 0.4, 1.0, 0.5, 0.5, 0.5]);
        let batch = EmbeddingBatch::new("q1", rows, Some(DVector::from_vec(vec![1.0, 1.0, 0.0]))).unwrap();
        let reduced = reduce_batch(&batch, 2).unwrap();
        let rec = ReducedRecord::from(&reduced);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"X\""));
        let back: ReducedRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_batch().unwrap(), reduced);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert_eq!(
            rows_to_matrix(&[vec![1.0, 2.0], vec![3.0]], 0),
            Err(GeoError::LengthMismatch { expected: 2, got: 1 })
        );
    }
}
