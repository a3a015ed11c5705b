//! Monte-Carlo check that distributions on the archetype simplex have
//! differential entropy at most the log of its volume, with equality for the
//! uniform distribution.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use statrs::function::gamma::{digamma, ln_gamma};

use super::knn::KdTree;
use super::simplex_volume;
use crate::error::{GeoError, Result};
use crate::scalar::Scalar;

/// Neighbour order used by the entropy estimator.
pub const KL_NEIGHBORS: usize = 3;
/// Concentration of the peaked comparison distribution.
pub const PEAKED_ALPHA: f64 = 10.0;
pub const MIN_MC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    pub entropy: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyBoundReport {
    pub log_v: f64,
    pub mc_entropy_uniform: f64,
    pub mc_entropy_peaked: f64,
    pub se_uniform: f64,
    pub se_peaked: f64,
    pub n_mc: usize,
}

impl EntropyBoundReport {
    /// Both estimates sit below `log_v` up to `sigmas` standard errors.
    pub fn bound_holds(&self, sigmas: f64) -> bool {
        self.mc_entropy_uniform <= self.log_v + sigmas * self.se_uniform
            && self.mc_entropy_peaked <= self.log_v + sigmas * self.se_peaked
    }
}

/// Kozachenko–Leonenko estimate from row-major samples in `dim` dimensions.
pub fn kozachenko_leonenko(samples: &[f64], dim: usize, k: usize) -> Result<EntropyEstimate> {
    let n = samples.len() / dim;
    if n <= k {
        return Err(GeoError::InvalidInput(format!("need more than {k} samples, got {n}")));
    }
    let tree = KdTree::new(samples, dim);
    let logs: Vec<f64> = (0..n)
        .map(|i| tree.kth_neighbor_distance(i, k).max(f64::MIN_POSITIVE).ln())
        .collect();
    let m = dim as f64;
    let nf = n as f64;
    let mean = logs.iter().sum::<f64>() / nf;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let log_unit_ball = 0.5 * m * std::f64::consts::PI.ln() - ln_gamma(0.5 * m + 1.0);
    Ok(EntropyEstimate {
        entropy: digamma(nf) - digamma(k as f64) + log_unit_ball + m * mean,
        std_error: m * var.sqrt() / nf.sqrt(),
    })
}

/// Samples uniform and peaked Dirichlet points on the simplex with vertices
/// `z` (rows), estimates both entropies in intrinsic coordinates and compares
/// them with the log-volume.
pub fn entropy_bound_check<T: Scalar>(z: &DMatrix<T>, n_mc: usize, seed: u64) -> Result<EntropyBoundReport> {
    if n_mc < MIN_MC_SAMPLES {
        return Err(GeoError::InvalidInput(format!("n_mc must be at least {MIN_MC_SAMPLES}, got {n_mc}")));
    }
    let volume = simplex_volume(z)?.as_f64();
    if volume <= 0.0 {
        return Err(GeoError::InvalidInput("simplex is degenerate".into()));
    }
    let z = z.map(|v| v.as_f64());
    let k = z.nrows();
    let m = k - 1;
    let mut edges_t = DMatrix::zeros(z.ncols(), m);
    for j in 1..k {
        edges_t.set_column(j - 1, &(z.row(j) - z.row(0)).transpose());
    }
    // edge j equals Q r_j, so r_j are its coordinates in the affine span
    let r = edges_t.qr().r();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = sample(&r, n_mc, &mut rng, |rng| Exp1.sample(rng));
    let gamma = Gamma::new(PEAKED_ALPHA, 1.0).expect("valid gamma parameters");
    let peaked = sample(&r, n_mc, &mut rng, |rng| gamma.sample(rng));

    let u = kozachenko_leonenko(&uniform, m, KL_NEIGHBORS)?;
    let p = kozachenko_leonenko(&peaked, m, KL_NEIGHBORS)?;
    Ok(EntropyBoundReport {
        log_v: volume.ln(),
        mc_entropy_uniform: u.entropy,
        mc_entropy_peaked: p.entropy,
        se_uniform: u.std_error,
        se_peaked: p.std_error,
        n_mc,
    })
}

/// Normalised independent draws give Dirichlet barycentric weights; the
/// intrinsic point is `R w[1..]`.
fn sample<R: Rng>(r: &DMatrix<f64>, n: usize, rng: &mut R, mut draw: impl FnMut(&mut R) -> f64) -> Vec<f64> {
    let m = r.nrows();
    let mut out = Vec::with_capacity(n * m);
    let mut w = DVector::zeros(m);
    for _ in 0..n {
        let w0: f64 = draw(rng);
        let mut total = w0;
        for j in 0..m {
            w[j] = draw(rng);
            total += w[j];
        }
        w /= total;
        out.extend((r * &w).iter());
    }
    out
}
