//! Embedding preparation: per-row L2 normalization followed by a per-batch PCA.
//!
//! The PCA is computed through the `n x n` Gram matrix of the centred rows
//! instead of the `d x d` covariance, since a batch holds a handful of
//! responses (`n = 20`) embedded in a large space (`d` in the thousands).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{GeoError, Result};
use crate::scalar::{cmp_scalar, Scalar};

/// Default reduced dimension.
pub const DEFAULT_PCA_DIM: usize = 15;

/// Raw embeddings for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch<T: Scalar> {
    pub question_id: String,
    /// `n x d`, one row per sampled response.
    pub rows: DMatrix<T>,
    /// Embedding of the greedy default response, if it was embedded.
    pub default_row: Option<DVector<T>>,
}

impl<T: Scalar> EmbeddingBatch<T> {
    pub fn new(question_id: impl Into<String>, rows: DMatrix<T>, default_row: Option<DVector<T>>) -> Result<Self> {
        if rows.nrows() < 2 || rows.ncols() < 2 {
            return Err(GeoError::InvalidInput(format!(
                "embedding batch needs n >= 2 and d >= 2, got {}x{}",
                rows.nrows(),
                rows.ncols()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        if let Some(def) = &default_row {
            if def.len() != rows.ncols() {
                return Err(GeoError::LengthMismatch { expected: rows.ncols(), got: def.len() });
            }
            if def.iter().any(|v| !v.is_finite()) {
                return Err(GeoError::NonFinite);
            }
        }
        Ok(Self { question_id: question_id.into(), rows, default_row })
    }
}

/// A fitted PCA projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit<T: Scalar> {
    /// Projected data, `n x d'`.
    pub x: DMatrix<T>,
    /// Orthonormal principal directions as rows, `d' x d`.
    pub basis: DMatrix<T>,
    /// Column mean of the fitted rows, length `d`.
    pub mean: DVector<T>,
    /// Sample variance along each kept direction (scatter eigenvalue / (n - 1)).
    pub explained_variance: Vec<T>,
    /// Scatter-matrix eigenvalues that were not kept.
    pub discarded_eigenvalues: Vec<T>,
    /// Set when every row is identical; `x` and `basis` then have zero columns/rows.
    pub degenerate: bool,
}

impl<T: Scalar> PcaFit<T> {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Projects arbitrary rows (`m x d`) with the fitted mean and basis.
    pub fn transform(&self, rows: &DMatrix<T>) -> DMatrix<T> {
        let mut centred = rows.clone();
        for mut r in centred.row_iter_mut() {
            r -= self.mean.transpose();
        }
        centred * self.basis.transpose()
    }

    pub fn transform_vector(&self, v: &DVector<T>) -> DVector<T> {
        &self.basis * (v - &self.mean)
    }

    /// Maps reduced coordinates back into the original space.
    pub fn inverse_transform(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut out = x * &self.basis;
        for mut r in out.row_iter_mut() {
            r += self.mean.transpose();
        }
        out
    }
}

/// Embeddings of one batch after normalization and PCA.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBatch<T: Scalar> {
    pub question_id: String,
    pub pca: PcaFit<T>,
    /// The default response projected with the batch's basis.
    pub default_x: Option<DVector<T>>,
}

impl<T: Scalar> ReducedBatch<T> {
    /// Reduced data matrix `X`.
    pub fn x(&self) -> &DMatrix<T> {
        &self.pca.x
    }
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_l2<T: Scalar>(rows: &DMatrix<T>) -> Result<DMatrix<T>> {
    let floor = T::lit(1e-15);
    let mut out = rows.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if !norm.is_finite() {
            return Err(GeoError::NonFinite);
        }
        if norm < floor {
            return Err(GeoError::ZeroVector { row: i });
        }
        row /= norm;
    }
    Ok(out)
}

pub fn normalize_vector<T: Scalar>(v: &DVector<T>) -> Result<DVector<T>> {
    let norm = v.norm();
    if norm < T::lit(1e-15) {
        return Err(GeoError::ZeroVector { row: 0 });
    }
    Ok(v / norm)
}

/// Number of kept components for a batch of `n` rows in dimension `d`.
pub fn reduced_dim(target_dim: usize, n: usize, d: usize) -> usize {
    target_dim.min(n.saturating_sub(1)).min(d)
}

/// Mean-centred PCA onto the top `min(target_dim, n - 1, d)` directions.
///
/// Directions with (numerically) zero variance are completed to an
/// orthonormal set so the basis always has the advertised number of rows.
/// Each basis vector is signed so that its largest-magnitude coordinate is
/// positive.
pub fn fit_pca<T: Scalar>(rows: &DMatrix<T>, target_dim: usize) -> Result<PcaFit<T>> {
    let (n, d) = rows.shape();
    if n < 2 || d < 1 {
        return Err(GeoError::InvalidInput(format!("PCA needs at least 2 rows, got {n}x{d}")));
    }
    if target_dim == 0 {
        return Err(GeoError::InvalidInput("PCA target dimension must be >= 1".into()));
    }
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::NonFinite);
    }

    let mean = DVector::from_iterator(d, rows.column_iter().map(|c| c.mean()));
    let mut centred = rows.clone();
    for mut r in centred.row_iter_mut() {
        r -= mean.transpose();
    }

    let gram = &centred * centred.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_scalar(&eig.eigenvalues[b], &eig.eigenvalues[a]));
    let eigenvalues: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i].max(T::zero())).collect();

    let lambda_max = eigenvalues[0];
    let scale = centred.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if lambda_max <= T::lit(1e-24) || scale <= T::lit(1e-14) {
        return Ok(PcaFit {
            x: DMatrix::zeros(n, 0),
            basis: DMatrix::zeros(0, d),
            mean,
            explained_variance: Vec::new(),
            discarded_eigenvalues: eigenvalues,
            degenerate: true,
        });
    }

    let dim = reduced_dim(target_dim, n, d);
    let null_tol = lambda_max * T::lit(1e-12);
    let mut basis_rows: Vec<DVector<T>> = Vec::with_capacity(dim);
    for (slot, &idx) in order.iter().take(dim).enumerate() {
        let lambda = eigenvalues[slot];
        if lambda <= null_tol {
            break;
        }
        let u = eig.eigenvectors.column(idx);
        let v = centred.transpose() * u / lambda.sqrt();
        if let Some(v) = orthonormalize_against(&v, &basis_rows) {
            basis_rows.push(v);
        } else {
            break;
        }
    }
    complete_basis(&mut basis_rows, d, dim);

    let mut basis = DMatrix::zeros(dim, d);
    for (j, v) in basis_rows.iter_mut().enumerate() {
        fix_sign(v);
        basis.set_row(j, &v.transpose());
    }

    let n_minus_one = T::from_count(n - 1);
    let explained_variance = eigenvalues[..dim].iter().map(|&l| l / n_minus_one).collect();
    let discarded_eigenvalues = eigenvalues[dim..].to_vec();
    let x = &centred * basis.transpose();
    Ok(PcaFit { x, basis, mean, explained_variance, discarded_eigenvalues, degenerate: false })
}

/// L2-normalizes the batch, fits the PCA and projects the default response.
pub fn reduce_batch<T: Scalar>(batch: &EmbeddingBatch<T>, target_dim: usize) -> Result<ReducedBatch<T>> {
    let normalized = normalize_l2(&batch.rows)?;
    let pca = fit_pca(&normalized, target_dim)?;
    let default_x = match &batch.default_row {
        Some(def) if !pca.degenerate => Some(pca.transform_vector(&normalize_vector(def)?)),
        _ => None,
    };
    Ok(ReducedBatch { question_id: batch.question_id.clone(), pca, default_x })
}

fn orthonormalize_against<T: Scalar>(v: &DVector<T>, basis: &[DVector<T>]) -> Option<DVector<T>> {
    let mut w = v.clone();
    // two passes of modified Gram-Schmidt
    for _ in 0..2 {
        for b in basis {
            let proj = b.dot(&w);
            w -= b * proj;
        }
    }
    let norm = w.norm();
    if norm <= T::lit(1e-10) {
        return None;
    }
    Some(w / norm)
}

fn complete_basis<T: Scalar>(basis: &mut Vec<DVector<T>>, d: usize, dim: usize) {
    while basis.len() < dim {
        let mut best: Option<(T, DVector<T>)> = None;
        for axis in 0..d {
            let mut e = DVector::zeros(d);
            e[axis] = T::one();
            let mut w = e;
            for _ in 0..2 {
                for b in basis.iter() {
                    let proj = b.dot(&w);
                    w -= b * proj;
                }
            }
            let norm = w.norm();
            if best.as_ref().map_or(true, |(bn, _)| norm > *bn) {
                best = Some((norm, w));
            }
        }
        let (norm, w) = best.expect("d >= 1");
        basis.push(w / norm);
    }
}

fn fix_sign<T: Scalar>(v: &mut DVector<T>) {
    let mut pivot = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < T::zero() {
        v.neg_mut();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn normalize_three_four_five() {
        let m = DMatrix::<f64>::from_row_slice(1, 2, &[3.0, 4.0]);
        let out = normalize_l2(&m).unwrap();
        assert!((out[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((out[(0, 1)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_idempotent_on_unit_rows() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.6, 0.8]);
        let out = normalize_l2(&m).unwrap();
        assert!((out - m).norm() < 1e-15);
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(normalize_l2(&m), Err(GeoError::ZeroVector { row: 1 }));
    }

    #[test]
    fn normalized_rows_have_unit_norm() {
        let out = normalize_l2(&random_rows(30, 17, 3)).unwrap();
        for r in out.row_iter() {
            assert!((r.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_in_r3_is_isometric() {
        let rows = DMatrix::<f64>::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 0.5, 0.3, -2.0, 0.5]);
        let fit = fit_pca(&rows, 2).unwrap();
        assert_eq!(fit.dim(), 2);
        for i in 0..3 {
            for j in 0..3 {
                let orig = (rows.row(i) - rows.row(j)).norm();
                let red = (fit.x.row(i) - fit.x.row(j)).norm();
                assert!((orig - red).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dimension_caps() {
        let rows = normalize_l2(&random_rows(20, 1536, 1)).unwrap();
        assert_eq!(fit_pca(&rows, 15).unwrap().dim(), 15);
        let rows = normalize_l2(&random_rows(4, 64, 2)).unwrap();
        assert_eq!(fit_pca(&rows, 15).unwrap().dim(), 3);
        let rows = random_rows(10, 3, 2);
        assert_eq!(fit_pca(&rows, 15).unwrap().dim(), 3);
    }

    #[test]
    fn basis_is_orthonormal_and_variance_sorted() {
        let rows = normalize_l2(&random_rows(20, 200, 5)).unwrap();
        let fit = fit_pca(&rows, 15).unwrap();
        let g = &fit.basis * fit.basis.transpose();
        assert!((g - DMatrix::<f64>::identity(15, 15)).abs().max() < 1e-8);
        for w in fit.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for v in fit.basis.row_iter() {
            let pivot = v.iter().cloned().fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn reconstruction_error_matches_discarded_eigenvalues() {
        let rows = normalize_l2(&random_rows(12, 40, 9)).unwrap();
        let fit = fit_pca(&rows, 5).unwrap();
        let recon = fit.inverse_transform(&fit.x);
        let err = (&rows - recon).norm_squared();
        let discarded: f64 = fit.discarded_eigenvalues.iter().sum();
        assert!((err - discarded).abs() < 1e-8, "{err} vs {discarded}");
    }

    #[test]
    fn rank_deficient_batch_completes_basis() {
        // 6 points on a line in R^5: one real direction, the rest completed
        let mut rows = DMatrix::zeros(6, 5);
        for i in 0..6 {
            rows[(i, 0)] = i as f64;
            rows[(i, 1)] = 2.0 * i as f64;
        }
        let fit = fit_pca(&rows, 4).unwrap();
        assert_eq!(fit.dim(), 4);
        let g = &fit.basis * fit.basis.transpose();
        assert!((g - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-8);
        assert!(fit.explained_variance[1] < 1e-12);
    }

    #[test]
    fn identical_rows_are_flagged_degenerate() {
        let rows = DMatrix::from_fn(5, 4, |_, j| j as f64 + 1.0);
        let fit = fit_pca(&rows, 3).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.dim(), 0);
        assert_eq!(fit.x.shape(), (5, 0));
    }

    #[test]
    fn row_order_permutes_output() {
        let rows = normalize_l2(&random_rows(9, 30, 11)).unwrap();
        let perm = [3, 1, 8, 0, 5, 2, 7, 6, 4];
        let permuted = DMatrix::from_fn(9, 30, |i, j| rows[(perm[i], j)]);
        let a = fit_pca(&rows, 4).unwrap();
        let b = fit_pca(&permuted, 4).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert!((b.x.row(i) - a.x.row(p)).norm() < 1e-9);
        }
    }

    #[test]
    fn default_row_uses_batch_basis() {
        let rows = random_rows(6, 10, 4);
        let def = DVector::from_fn(10, |i, _| rows[(2, i)]);
        let batch = EmbeddingBatch::new("q", rows, Some(def)).unwrap();
        let red = reduce_batch(&batch, 15).unwrap();
        let dx = red.default_x.clone().unwrap();
        assert!((dx.transpose() - red.x().row(2)).norm() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let rows = random_rows(8, 12, 6).map(|v| v as f32);
        let fit = fit_pca(&normalize_l2(&rows).unwrap(), 3).unwrap();
        let g = &fit.basis * fit.basis.transpose();
        assert!((g - DMatrix::<f32>::identity(3, 3)).abs().max() < 1e-4);
    }
}
