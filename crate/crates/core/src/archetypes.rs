//! Archetypal analysis by block-coordinate projected gradient.
//!
//! Orientation: `A` is `n x K` with rows on the `K`-simplex, `B` is `K x n`
//! with rows on the `n`-simplex, archetypes are `Z = B X` and the data is
//! reconstructed as `X ~ A Z`. The objective `||X - A B X||_F^2` is
//! minimized by alternating one projected-gradient step on `A` and one on
//! `B` per outer iteration. Each step backtracks until the sufficient
//! decrease condition holds and is rejected outright if the objective would
//! grow, so the recorded trace never increases.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GeoError, Result};
use crate::scalar::Scalar;
use crate::simplex::project_rows;

pub const DEFAULT_ARCHETYPES: usize = 16;
pub const DEFAULT_STEPS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct AaOptions {
    /// Outer iterations (one `A` block and one `B` block each).
    pub steps: usize,
    /// Seed for the FurthestSum starting index.
    pub seed: u64,
    /// Relative objective decrease treated as stalled.
    pub stall_tol: f64,
    /// Consecutive stalled iterations before stopping early.
    pub patience: usize,
    /// Projected-gradient steps per block and outer iteration.
    pub inner_steps: usize,
}

impl Default for AaOptions {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS, seed: 0, stall_tol: 1e-10, patience: 20, inner_steps: 1 }
    }
}

/// Fitted archetypes and coefficients. Immutable after fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchetypeModel<T: Scalar> {
    /// `n x K` reconstruction coefficients.
    pub a: DMatrix<T>,
    /// `K x n` archetype mixing weights.
    pub b: DMatrix<T>,
    /// `K x d'` archetypes, equal to `B X`.
    pub z: DMatrix<T>,
    pub objective_trace: Vec<T>,
    pub iterations: usize,
}

impl<T: Scalar> ArchetypeModel<T> {
    pub fn k(&self) -> usize {
        self.z.nrows()
    }

    pub fn final_objective(&self) -> T {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// FurthestSum initialization. Returns `K` distinct row indices of `x`.
///
/// Starts from a seeded random index, greedily adds the point with the
/// largest summed distance to the points chosen so far, then drops the
/// random start and re-selects once so the result does not hinge on it.
pub fn furthest_sum<T: Scalar>(x: &DMatrix<T>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = x.nrows();
    if k == 0 {
        return Err(GeoError::InvalidInput("need at least one archetype".into()));
    }
    if k > n {
        return Err(GeoError::KTooLarge { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..n);
    if k == n {
        let mut all: Vec<usize> = (0..n).collect();
        all.rotate_left(start);
        return Ok(all);
    }

    let dist = |i: usize, j: usize| (x.row(i) - x.row(j)).norm();
    let mut chosen = vec![start];
    let mut score: Vec<T> = (0..n).map(|j| dist(start, j)).collect();
    let pick = |chosen: &[usize], score: &[T]| -> usize {
        let mut best = usize::MAX;
        for j in 0..n {
            if chosen.contains(&j) {
                continue;
            }
            if best == usize::MAX || score[j] > score[best] {
                best = j;
            }
        }
        best
    };

    while chosen.len() < k {
        let next = pick(&chosen, &score);
        chosen.push(next);
        for (j, s) in score.iter_mut().enumerate() {
            *s += dist(next, j);
        }
    }
    // swap the random start for the best remaining point
    let dropped = chosen.remove(0);
    for (j, s) in score.iter_mut().enumerate() {
        *s -= dist(dropped, j);
    }
    let replacement = pick(&chosen, &score);
    chosen.push(replacement);
    Ok(chosen)
}

/// Initial `B` (`K x n`): row `k` is the indicator of the `k`-th FurthestSum pick.
pub fn init_archetypes<T: Scalar>(x: &DMatrix<T>, k: usize, seed: u64) -> Result<DMatrix<T>> {
    let picks = furthest_sum(x, k, seed)?;
    Ok(indicator_rows(&picks, x.nrows()))
}

pub fn indicator_rows<T: Scalar>(indices: &[usize], n: usize) -> DMatrix<T> {
    let mut b = DMatrix::zeros(indices.len(), n);
    for (row, &idx) in indices.iter().enumerate() {
        b[(row, idx)] = T::one();
    }
    b
}

/// Fits `k` archetypes to the rows of `x`.
pub fn fit_aa<T: Scalar>(x: &DMatrix<T>, k: usize, opts: &AaOptions) -> Result<ArchetypeModel<T>> {
    validate(x, k, opts)?;
    let b = init_archetypes(x, k, opts.seed)?;
    fit_aa_from(x, b, opts)
}

/// Fits archetypes starting from a caller-supplied `B`.
pub fn fit_aa_from<T: Scalar>(x: &DMatrix<T>, b_init: DMatrix<T>, opts: &AaOptions) -> Result<ArchetypeModel<T>> {
    let k = b_init.nrows();
    validate(x, k, opts)?;
    if b_init.ncols() != x.nrows() {
        return Err(GeoError::LengthMismatch { expected: x.nrows(), got: b_init.ncols() });
    }
    let n = x.nrows();

    let mut b = b_init;
    project_rows(&mut b);
    let mut a = DMatrix::from_element(n, k, T::one() / T::from_count(k));
    let mut z = &b * x;
    let mut f = objective(x, &a, &z);
    if !f.is_finite() {
        return Err(GeoError::NonFiniteObjective { iteration: 0 });
    }

    let gram = x * x.transpose();
    let mut eta_a = T::one() / (T::lit(2.0) * (&z * z.transpose()).norm()).max(T::lit(1e-300));
    let mut eta_b = T::one()
        / (T::lit(2.0) * (a.transpose() * &a).norm() * gram.norm()).max(T::lit(1e-300));

    let stall = T::lit(opts.stall_tol);
    let mut trace = Vec::with_capacity(opts.steps.min(4096));
    let mut stalled = 0usize;
    let mut iterations = 0usize;

    for it in 1..=opts.steps {
        let f_prev = f;
        for _ in 0..opts.inner_steps {
            f = step_a(x, &mut a, &z, f, &mut eta_a);
        }
        for _ in 0..opts.inner_steps {
            f = step_b(x, &gram, &a, &mut b, &mut z, f, &mut eta_b);
        }
        if !f.is_finite() {
            return Err(GeoError::NonFiniteObjective { iteration: it });
        }
        trace.push(f);
        iterations = it;

        let rel = if f_prev > T::zero() { (f_prev - f) / f_prev } else { T::zero() };
        if rel < stall {
            stalled += 1;
            if stalled >= opts.patience {
                break;
            }
        } else {
            stalled = 0;
        }
    }

    Ok(ArchetypeModel { a, b, z, objective_trace: trace, iterations })
}

fn validate<T: Scalar>(x: &DMatrix<T>, k: usize, opts: &AaOptions) -> Result<()> {
    let n = x.nrows();
    if k == 0 {
        return Err(GeoError::InvalidInput("need at least one archetype".into()));
    }
    if k > n {
        return Err(GeoError::KTooLarge { k, n });
    }
    if opts.steps == 0 || opts.inner_steps == 0 {
        return Err(GeoError::InvalidInput("steps must be >= 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::NonFinite);
    }
    Ok(())
}

/// `||X - A Z||_F^2`
pub fn objective<T: Scalar>(x: &DMatrix<T>, a: &DMatrix<T>, z: &DMatrix<T>) -> T {
    (a * z - x).norm_squared()
}

const MAX_BACKTRACK: usize = 60;

fn step_a<T: Scalar>(x: &DMatrix<T>, a: &mut DMatrix<T>, z: &DMatrix<T>, f: T, eta: &mut T) -> T {
    let residual = &*a * z - x;
    let grad = (residual * z.transpose()) * T::lit(2.0);
    let eta0 = *eta;
    for _ in 0..MAX_BACKTRACK {
        let mut cand = &*a - &grad * *eta;
        project_rows(&mut cand);
        let delta = &cand - &*a;
        let f_new = objective(x, &cand, z);
        let bound = f + grad.dot(&delta) + delta.norm_squared() / (T::lit(2.0) * *eta);
        if f_new <= bound {
            *eta *= T::lit(2.0);
            if f_new <= f {
                *a = cand;
                return f_new;
            }
            return f;
        }
        *eta /= T::lit(2.0);
    }
    *eta = eta0;
    f
}

fn step_b<T: Scalar>(
    x: &DMatrix<T>,
    gram: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &mut DMatrix<T>,
    z: &mut DMatrix<T>,
    f: T,
    eta: &mut T,
) -> T {
    // d/dB ||X - A B X||^2 = 2 A^T (A B X - X) X^T = 2 A^T (A B G - G) with G = X X^T
    let ab = a * &*b;
    let grad = (a.transpose() * (ab * gram - gram)) * T::lit(2.0);
    let eta0 = *eta;
    for _ in 0..MAX_BACKTRACK {
        let mut cand = &*b - &grad * *eta;
        project_rows(&mut cand);
        let delta = &cand - &*b;
        let z_new = &cand * x;
        let f_new = objective(x, a, &z_new);
        let bound = f + grad.dot(&delta) + delta.norm_squared() / (T::lit(2.0) * *eta);
        if f_new <= bound {
            *eta *= T::lit(2.0);
            if f_new <= f {
                *b = cand;
                *z = z_new;
                return f_new;
            }
            return f;
        }
        *eta /= T::lit(2.0);
    }
    *eta = eta0;
    f
}

/// Simplex-constrained least squares coefficients of `point` over the rows of `z`.
pub fn convex_coefficients<T: Scalar>(z: &DMatrix<T>, point: &nalgebra::DVector<T>, iterations: usize) -> Vec<T> {
    let k = z.nrows();
    let x = DMatrix::from_row_slice(1, point.len(), point.as_slice());
    let mut a = DMatrix::from_element(1, k, T::one() / T::from_count(k));
    let mut f = objective(&x, &a, z);
    let mut eta = T::one() / (T::lit(2.0) * (z * z.transpose()).norm()).max(T::lit(1e-300));
    for _ in 0..iterations {
        f = step_a(&x, &mut a, z, f, &mut eta);
    }
    a.row(0).iter().copied().collect()
}
