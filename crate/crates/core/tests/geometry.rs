use geouq_core::geometry::{score_from_archetypes, simplex_volume};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Squared volume from pairwise squared distances alone.
fn cayley_menger_sq(z: &DMatrix<f64>) -> f64 {
    let k = z.nrows();
    let m = k - 1;
    let mut cm = DMatrix::from_element(k + 1, k + 1, 1.0);
    cm[(0, 0)] = 0.0;
    for i in 0..k {
        for j in 0..k {
            cm[(i + 1, j + 1)] = (z.row(i) - z.row(j)).norm_squared();
        }
    }
    let fact: f64 = (1..=m).map(|i| i as f64).product();
    let sign = if (m + 1) % 2 == 0 { 1.0 } else { -1.0 };
    sign * cm.determinant() / (2f64.powi(m as i32) * fact * fact)
}

fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    g.qr().q()
}

fn simplex_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..=5, 0usize..=2).prop_flat_map(|(k, extra)| {
        let dim = k - 1 + extra;
        prop::collection::vec(-1.0f64..1.0, k * dim).prop_map(move |v| DMatrix::from_row_slice(k, dim, &v))
    })
}

proptest! {
    #[test]
    fn volume_agrees_with_cayley_menger(z in simplex_strategy()) {
        let v = simplex_volume(&z).unwrap();
        let cm = cayley_menger_sq(&z);
        let scale = z.nrows() as f64;
        prop_assume!(cm > 1e-8 * scale);
        prop_assert!((v * v - cm).abs() <= 1e-7 * cm, "{} vs {}", v * v, cm);
    }

    #[test]
    fn volume_is_invariant_under_rigid_motion(z in simplex_strategy(), seed in 0u64..1000, shift in -3.0f64..3.0) {
        let q = random_orthogonal(z.ncols(), seed);
        let moved = z.clone() * q.transpose() + DMatrix::from_element(z.nrows(), z.ncols(), shift);
        let (a, b) = (simplex_volume(&z).unwrap(), simplex_volume(&moved).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0), "{a} vs {b}");
    }

    #[test]
    fn volume_scales_with_the_simplex_dimension(z in simplex_strategy(), c in 0.1f64..4.0) {
        let v = simplex_volume(&z).unwrap();
        let scaled = simplex_volume(&(z.clone() * c)).unwrap();
        let m = (z.nrows() - 1) as i32;
        prop_assume!(v > 1e-6);
        prop_assert!((scaled - v * c.powi(m)).abs() <= 1e-9 * scaled.max(1e-12));
    }

    #[test]
    fn vertex_order_does_not_matter(z in simplex_strategy()) {
        let reversed = DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(z.nrows() - 1 - i, j)]);
        let (a, b) = (simplex_volume(&z).unwrap(), simplex_volume(&reversed).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-12) || (a == 0.0 && b < 1e-12) || (b == 0.0 && a < 1e-12));
    }

    #[test]
    fn log_score_is_monotone_in_volume(z in simplex_strategy(), c in 1.01f64..3.0) {
        let small = score_from_archetypes("q", &z, 1e-12).unwrap();
        let big = score_from_archetypes("q", &(z.clone() * c), 1e-12).unwrap();
        prop_assert!(big.h_g >= small.h_g);
        prop_assert_eq!(small.h_g.to_bits(), (small.volume + 1e-12).ln().to_bits());
    }
}

#[test]
fn regular_simplices_have_closed_form_volumes() {
    for m in 1..=7usize {
        let z = DMatrix::<f64>::identity(m + 1, m + 1);
        let fact: f64 = (1..=m).map(|i| i as f64).product();
        let expected = ((m + 1) as f64).sqrt() / fact;
        let v = simplex_volume(&z).unwrap();
        assert!((v - expected).abs() < 1e-12 * expected, "m={m}: {v} vs {expected}");
    }
}

#[test]
fn repeated_vertex_gives_zero_volume() {
    let z = DMatrix::from_row_slice(3, 3, &[0.1, 0.2, 0.3, 0.5, -0.4, 1.0, 0.1, 0.2, 0.3]);
    assert_eq!(simplex_volume(&z).unwrap(), 0.0);
    let s = score_from_archetypes("q", &z, 1e-12).unwrap();
    assert!(s.degenerate);
    assert!((s.h_g - 1e-12f64.ln()).abs() < 1e-9);
}

#[test]
fn single_precision_tracks_double() {
    let z = DMatrix::from_row_slice(4, 3, &[0.0, 0.0, 0.0, 1.0, 0.1, 0.0, 0.2, 0.9, 0.1, 0.3, 0.2, 0.8]);
    let v64 = simplex_volume(&z).unwrap();
    let v32 = simplex_volume(&z.map(|v| v as f32)).unwrap();
    assert!(((v32 as f64) - v64).abs() < 1e-5 * v64);
}
