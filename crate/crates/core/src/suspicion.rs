//! Per-response suspicion terms, rank fusion and Best-of-N selection.

use nalgebra::{DMatrix, DVector};

use crate::archetypes::{convex_coefficients, ArchetypeModel};
use crate::embedding::ReducedBatch;
use crate::error::{GeoError, Result};
use crate::geometry::voronoi_cell_volumes;
use crate::scalar::{cmp_scalar, Scalar};

pub const DEFAULT_K_NEIGHBORS: usize = 5;
const SIMPLEX_TOL: f64 = 1e-4;
const DEFAULT_COEFF_ITERS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct SuspicionOptions {
    pub k_neighbors: usize,
    /// Also fuse negated geometric entropy, nearest-archetype distance and
    /// the Voronoi score into `S`.
    pub fuse_extended: bool,
    /// Compute the Voronoi term (the most expensive one).
    pub voronoi: bool,
    pub seed: u64,
}

impl Default for SuspicionOptions {
    fn default() -> Self {
        SuspicionOptions { k_neighbors: DEFAULT_K_NEIGHBORS, fuse_extended: false, voronoi: true, seed: 0 }
    }
}

/// Terms of the greedy default response measured against the batch geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultTerms<T: Scalar> {
    pub local_density: T,
    pub dist_consensus: T,
    pub usage_rarity: T,
    pub dist_nearest_archetype: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuspicionBreakdown<T: Scalar> {
    pub question_id: String,
    pub local_density: Vec<T>,
    pub dist_consensus: Vec<T>,
    pub usage_rarity: Vec<T>,
    pub geo_entropy: Option<Vec<T>>,
    pub dist_nearest_archetype: Option<Vec<T>>,
    pub voronoi: Option<Vec<T>>,
    /// One rank list per fused metric, in fusion order (L, D, U, then the
    /// extended terms when fused).
    pub ranks: Vec<Vec<usize>>,
    pub s: Vec<usize>,
    pub selected_index: usize,
    pub k_neighbors: usize,
    /// Every fused metric was constant across the batch.
    pub all_ties: bool,
    pub default_terms: Option<DefaultTerms<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankFusion {
    pub ranks: Vec<Vec<usize>>,
    pub s: Vec<usize>,
    pub selected_index: usize,
}

/// Mean distance of each row to its `min(k, n-1)` nearest other rows.
/// Neighbour ties are broken by row index.
pub fn local_density<T: Scalar>(x: &DMatrix<T>, k: usize) -> Vec<T> {
    let n = x.nrows();
    if n < 2 {
        return vec![T::zero(); n];
    }
    let k = k.clamp(1, n - 1);
    let dist = pairwise_distances(x);
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| cmp_scalar(&dist[(i, a)], &dist[(i, b)]).then(a.cmp(&b)));
            let sum = others[..k].iter().fold(T::zero(), |acc, &j| acc + dist[(i, j)]);
            sum / T::from_count(k)
        })
        .collect()
}

/// Distance of each row to the batch mean.
pub fn distance_from_consensus<T: Scalar>(x: &DMatrix<T>) -> Vec<T> {
    if x.nrows() == 0 {
        return Vec::new();
    }
    let mean = x.row_mean();
    x.row_iter().map(|r| (r - &mean).norm()).collect()
}

/// `U_i = sum_k A_ik (1 - mean_k)` with `mean_k` the column means of `A`.
pub fn usage_rarity<T: Scalar>(a: &DMatrix<T>) -> Result<Vec<T>> {
    check_simplex_rows(a)?;
    let usage = a.row_mean();
    Ok(a.row_iter()
        .map(|r| r.iter().zip(usage.iter()).fold(T::zero(), |acc, (&w, &m)| acc + w * (T::one() - m)))
        .collect())
}

/// Shannon entropy of each coefficient row, `0 log 0 = 0`.
pub fn geometric_entropy<T: Scalar>(a: &DMatrix<T>) -> Result<Vec<T>> {
    check_simplex_rows(a)?;
    Ok(a.row_iter()
        .map(|r| {
            let total = r.iter().fold(T::zero(), |acc, &v| acc + v.max(T::zero()));
            r.iter().fold(T::zero(), |acc, &v| {
                let p = v.max(T::zero()) / total;
                if p > T::zero() {
                    acc - p * p.ln()
                } else {
                    acc
                }
            })
        })
        .collect())
}

/// Negative distance from each row of `x` to its nearest archetype.
pub fn distance_nearest_archetype<T: Scalar>(x: &DMatrix<T>, z: &DMatrix<T>) -> Result<Vec<T>> {
    if x.ncols() != z.ncols() {
        return Err(GeoError::LengthMismatch { expected: x.ncols(), got: z.ncols() });
    }
    if z.nrows() == 0 {
        return Err(GeoError::InvalidInput("no archetypes".into()));
    }
    Ok(x.row_iter()
        .map(|r| {
            let nearest = z.row_iter().map(|zr| (r - zr).norm()).fold(T::lit(f64::INFINITY), |a, b| a.min(b));
            -nearest
        })
        .collect())
}

/// 1-based ranks, ascending by value, ties in index order.
pub fn stable_ranks<T: Scalar>(values: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp_scalar(&values[a], &values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// Sums per-metric ranks and picks the smallest sum (lowest index on ties).
pub fn suspicion_rank<T: Scalar>(metrics: &[&[T]]) -> Result<RankFusion> {
    let n = metrics.first().map_or(0, |m| m.len());
    if n == 0 {
        return Err(GeoError::EmptySet);
    }
    if let Some(bad) = metrics.iter().find(|m| m.len() != n) {
        return Err(GeoError::LengthMismatch { expected: n, got: bad.len() });
    }
    let ranks: Vec<Vec<usize>> = metrics.iter().map(|m| stable_ranks(m)).collect();
    let s: Vec<usize> = (0..n).map(|i| ranks.iter().map(|r| r[i]).sum()).collect();
    let selected_index = (0..n).min_by_key(|&i| (s[i], i)).expect("non-empty");
    Ok(RankFusion { ranks, s, selected_index })
}

/// Scores every sample of the batch and selects the least suspicious one.
pub fn select_best_of_n<T: Scalar>(
    batch: &ReducedBatch<T>,
    model: &ArchetypeModel<T>,
    opts: &SuspicionOptions,
) -> Result<SuspicionBreakdown<T>> {
    let x = batch.x();
    let n = x.nrows();
    if model.a.nrows() != n {
        return Err(GeoError::LengthMismatch { expected: n, got: model.a.nrows() });
    }
    let k = opts.k_neighbors.clamp(1, n.saturating_sub(1).max(1));
    let l = local_density(x, k);
    let d = distance_from_consensus(x);
    let u = usage_rarity(&model.a)?;
    let h = geometric_entropy(&model.a)?;
    let da = distance_nearest_archetype(x, &model.z)?;
    let voronoi = if opts.voronoi { voronoi_term(x, opts.seed)? } else { None };

    let neg_h: Vec<T> = h.iter().map(|&v| -v).collect();
    let mut fused: Vec<&[T]> = vec![&l, &d, &u];
    if opts.fuse_extended {
        fused.push(&neg_h);
        fused.push(&da);
        if let Some(v) = &voronoi {
            fused.push(v);
        }
    }
    let all_ties = fused.iter().all(|m| m.iter().all(|&v| v == m[0]));
    let fusion = suspicion_rank(&fused)?;

    let default_terms = match &batch.default_x {
        Some(def) if x.ncols() > 0 => Some(score_default(x, model, def, k)?),
        _ => None,
    };

    Ok(SuspicionBreakdown {
        question_id: batch.question_id.clone(),
        local_density: l,
        dist_consensus: d,
        usage_rarity: u,
        geo_entropy: Some(h),
        dist_nearest_archetype: Some(da),
        voronoi,
        ranks: fusion.ranks,
        s: fusion.s,
        selected_index: fusion.selected_index,
        k_neighbors: k,
        all_ties,
        default_terms,
    })
}

fn voronoi_term<T: Scalar>(x: &DMatrix<T>, seed: u64) -> Result<Option<Vec<T>>> {
    let (n, dim) = x.shape();
    let reduce_to = if n >= 5 && dim >= 3 {
        3
    } else if n >= 4 && dim >= 2 {
        2
    } else {
        return Ok(None);
    };
    Ok(Some(voronoi_cell_volumes(x, reduce_to, seed)?.scores))
}

fn score_default<T: Scalar>(
    x: &DMatrix<T>,
    model: &ArchetypeModel<T>,
    def: &DVector<T>,
    k: usize,
) -> Result<DefaultTerms<T>> {
    if def.len() != x.ncols() {
        return Err(GeoError::LengthMismatch { expected: x.ncols(), got: def.len() });
    }
    let row = def.transpose();
    let mut dists: Vec<T> = x.row_iter().map(|r| (r - &row).norm()).collect();
    dists.sort_by(cmp_scalar);
    let k = k.min(dists.len());
    let local_density = dists[..k].iter().fold(T::zero(), |acc, &v| acc + v) / T::from_count(k);
    let dist_consensus = (x.row_mean() - &row).norm();
    let coeffs = convex_coefficients(&model.z, def, DEFAULT_COEFF_ITERS);
    let usage = model.a.row_mean();
    let usage_rarity = coeffs.iter().zip(usage.iter()).fold(T::zero(), |acc, (&w, &m)| acc + w * (T::one() - m));
    let dist_nearest_archetype = distance_nearest_archetype(&DMatrix::from_row_slice(1, def.len(), def.as_slice()), &model.z)?[0];
    Ok(DefaultTerms { local_density, dist_consensus, usage_rarity, dist_nearest_archetype })
}

fn check_simplex_rows<T: Scalar>(a: &DMatrix<T>) -> Result<()> {
    for (row, r) in a.row_iter().enumerate() {
        let sum = r.sum().as_f64();
        if !sum.is_finite() || (sum - 1.0).abs() > SIMPLEX_TOL || r.iter().any(|v| v.as_f64() < -SIMPLEX_TOL) {
            return Err(GeoError::SimplexViolation { row, sum });
        }
    }
    Ok(())
}

fn pairwise_distances<T: Scalar>(x: &DMatrix<T>) -> DMatrix<T> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = (x.row(i) - x.row(j)).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}
