//! Euclidean projection onto the probability simplex.

use nalgebra::{DMatrix, RowDVector};

use crate::scalar::{cmp_scalar, Scalar};

/// Projects `v` onto `{w : w >= 0, sum(w) = 1}` using the sort-and-threshold rule.
pub fn project_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| cmp_scalar(b, a));

    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - T::one()) / T::from_count(j + 1);
        if u - candidate > T::zero() {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(T::zero())).collect()
}

/// Projects every row of `m` onto the simplex in place.
pub fn project_rows<T: Scalar>(m: &mut DMatrix<T>) {
    let mut buf: Vec<T> = Vec::with_capacity(m.ncols());
    for mut row in m.row_iter_mut() {
        buf.clear();
        buf.extend(row.iter().copied());
        let p = project_simplex(&buf);
        row.copy_from(&RowDVector::from_vec(p));
    }
}

/// Largest deviation of any row from the simplex (negativity or sum error).
pub fn max_row_violation<T: Scalar>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for row in m.row_iter() {
        worst = worst.max((row.sum() - T::one()).abs());
        for &v in row.iter() {
            worst = worst.max(-v);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: enumerate every support set, solve the KKT system
    /// on it, keep feasible candidates and return the closest one.
    fn brute_force(v: &[f64]) -> Vec<f64> {
        let m = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << m) {
            let support: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let theta = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
            let mut w = vec![0.0; m];
            let mut feasible = true;
            for &i in &support {
                w[i] = v[i] - theta;
                if w[i] < -1e-14 {
                    feasible = false;
                }
            }
            if !feasible {
                continue;
            }
            let dist: f64 = w.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().map_or(true, |(d, _)| dist < *d) {
                best = Some((dist, w));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn point_on_simplex_is_unchanged() {
        let p = project_simplex(&[0.2f64, 0.3, 0.5]);
        for (a, b) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn nearest_vertex() {
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn single_entry_maps_to_one() {
        assert_eq!(project_simplex(&[-3.5]), vec![1.0]);
    }

    proptest! {
        #[test]
        fn matches_support_enumeration(v in proptest::collection::vec(-3.0f64..3.0, 5)) {
            let p = project_simplex(&v);
            let o = brute_force(&v);
            for (a, b) in p.iter().zip(&o) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn output_is_feasible(v in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let p = project_simplex(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
