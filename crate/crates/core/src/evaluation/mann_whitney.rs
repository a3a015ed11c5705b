//! One-sided Mann-Whitney U test: `hi` stochastically greater than `lo`.

use statrs::function::erf::erfc;

use crate::error::{GeoError, Result};

/// Pooled sizes up to this use exact enumeration.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MwMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// `U` statistic of the `hi` group (ties count one half).
    pub u: f64,
    pub p_value: f64,
    pub method: MwMethod,
}

pub fn mann_whitney_one_sided(hi: &[f64], lo: &[f64]) -> Result<MannWhitney> {
    if hi.len() + lo.len() <= EXACT_LIMIT {
        mann_whitney_exact(hi, lo)
    } else {
        mann_whitney_normal(hi, lo)
    }
}

/// Midranks of the pooled sample, doubled so they are integers.
fn doubled_midranks(hi: &[f64], lo: &[f64]) -> Result<(Vec<u64>, Vec<usize>)> {
    if hi.is_empty() || lo.is_empty() {
        return Err(GeoError::EmptySet);
    }
    let pooled: Vec<f64> = hi.iter().chain(lo).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::NonFinite);
    }
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        // ranks i+1..=j averaged, doubled: (i + 1 + j)
        for &o in &order[i..j] {
            ranks[o] = (i + 1 + j) as u64;
        }
        tie_sizes.push(j - i);
        i = j;
    }
    Ok((ranks, tie_sizes))
}

fn u_statistic(doubled_rank_sum: u64, n1: usize) -> f64 {
    doubled_rank_sum as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0
}

/// Exact permutation p-value over every assignment of the pooled midranks.
pub fn mann_whitney_exact(hi: &[f64], lo: &[f64]) -> Result<MannWhitney> {
    let (ranks, _) = doubled_midranks(hi, lo)?;
    let n1 = hi.len();
    let total = ranks.len();
    if total > 30 {
        return Err(GeoError::InvalidInput(format!("exact enumeration over {total} values is too large")));
    }
    let observed: u64 = ranks[..n1].iter().sum();
    let (mut hits, mut count) = (0u64, 0u64);
    enumerate(&ranks, 0, n1, 0, &mut |sum| {
        count += 1;
        if sum >= observed {
            hits += 1;
        }
    });
    Ok(MannWhitney {
        u: u_statistic(observed, n1),
        p_value: hits as f64 / count as f64,
        method: MwMethod::Exact,
    })
}

fn enumerate(ranks: &[u64], start: usize, left: usize, sum: u64, visit: &mut impl FnMut(u64)) {
    if left == 0 {
        visit(sum);
        return;
    }
    for i in start..=ranks.len() - left {
        enumerate(ranks, i + 1, left - 1, sum + ranks[i], visit);
    }
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn mann_whitney_normal(hi: &[f64], lo: &[f64]) -> Result<MannWhitney> {
    let (ranks, ties) = doubled_midranks(hi, lo)?;
    let (n1, n2) = (hi.len() as f64, lo.len() as f64);
    let n = n1 + n2;
    let u = u_statistic(ranks[..hi.len()].iter().sum(), hi.len());
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term);
    if !(var > 0.0) {
        return Ok(MannWhitney { u, p_value: 1.0, method: MwMethod::Normal });
    }
    let z = (u - n1 * n2 / 2.0 - 0.5) / var.sqrt();
    let p = 0.5 * erfc(z / std::f64::consts::SQRT_2);
    Ok(MannWhitney { u, p_value: p.clamp(f64::MIN_POSITIVE, 1.0), method: MwMethod::Normal })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_separation_of_two_pairs() {
        let r = mann_whitney_one_sided(&[3.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.method, MwMethod::Exact);
        assert!((r.p_value - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.u, 4.0);
    }

    #[test]
    fn identical_groups_show_no_dominance() {
        let r = mann_whitney_one_sided(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(r.p_value >= 0.5);
        let big: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(mann_whitney_one_sided(&big, &big).unwrap().p_value >= 0.5);
    }

    #[test]
    fn all_tied_normal_path() {
        let r = mann_whitney_normal(&[1.0; 8], &[1.0; 8]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn empty_group() {
        assert_eq!(mann_whitney_one_sided(&[], &[1.0]), Err(GeoError::EmptySet));
    }
}
