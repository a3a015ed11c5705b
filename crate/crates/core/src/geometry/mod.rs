//! Convex geometry of archetypes: simplex volume, the log-volume global
//! score, Delaunay-based Voronoi cell approximation and a Monte-Carlo check
//! of the volume/entropy bound.

mod delaunay;
mod entropy;
mod hull;
mod knn;
mod voronoi;

use nalgebra::DMatrix;

use crate::archetypes::ArchetypeModel;
use crate::error::{GeoError, Result};
use crate::scalar::Scalar;

pub use delaunay::{delaunay, Triangulation};
pub use entropy::{entropy_bound_check, kozachenko_leonenko, EntropyBoundReport, EntropyEstimate};
pub use hull::{convex_hull, HullError, HullFacet};
pub use knn::KdTree;
pub use voronoi::{voronoi_cell_volumes, VoronoiVolumes};

/// Default additive floor inside the logarithm.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Determinant floor below which a simplex counts as flat.
const DET_FLOOR: f64 = 1e-300;

/// Global score of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalScore<T: Scalar> {
    pub question_id: String,
    pub volume: T,
    /// `log(volume + epsilon)`
    pub h_g: T,
    pub epsilon: T,
    /// `volume < epsilon`
    pub degenerate: bool,
}

/// `(K-1)`-dimensional volume of the simplex on the rows of `z` (`K x d'`).
///
/// Computed as `sqrt(det(M M^T)) / (K-1)!` where `M` holds the edge vectors
/// `z_k - z_1`, with the determinant taken from a QR factorisation of the
/// edges. Affinely dependent vertices give `0`.
pub fn simplex_volume<T: Scalar>(z: &DMatrix<T>) -> Result<T> {
    let (k, dim) = z.shape();
    if k < 2 {
        return Err(GeoError::InvalidInput(format!("a simplex needs at least 2 vertices, got {k}")));
    }
    if k > dim + 1 {
        return Err(GeoError::TooManyVertices { k, dim });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::NonFinite);
    }
    let mut edges = DMatrix::zeros(dim, k - 1);
    for i in 1..k {
        edges.set_column(i - 1, &(z.row(i) - z.row(0)).transpose());
    }
    let r = edges.qr().r();
    let diag: Vec<T> = r.diagonal().iter().map(|v| v.abs()).collect();
    let largest = diag.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let cutoff = largest * T::default_epsilon() * T::from_count(16 * k);
    if diag.iter().any(|&v| v <= cutoff) {
        return Ok(T::zero());
    }
    let det = diag.iter().fold(T::one(), |acc, &v| acc * v * v);
    if !(det > T::lit(DET_FLOOR)) {
        return Ok(T::zero());
    }
    Ok(det.sqrt() / factorial::<T>(k - 1))
}

pub(crate) fn factorial<T: Scalar>(n: usize) -> T {
    (1..=n).fold(T::one(), |acc, i| acc * T::from_count(i))
}

/// Log-volume score of the fitted archetypes.
pub fn geometric_volume<T: Scalar>(
    question_id: impl Into<String>,
    model: &ArchetypeModel<T>,
    epsilon: T,
) -> Result<GlobalScore<T>> {
    score_from_archetypes(question_id, &model.z, epsilon)
}

pub fn score_from_archetypes<T: Scalar>(
    question_id: impl Into<String>,
    z: &DMatrix<T>,
    epsilon: T,
) -> Result<GlobalScore<T>> {
    let volume = simplex_volume(z)?;
    Ok(GlobalScore {
        question_id: question_id.into(),
        volume,
        h_g: (volume + epsilon).ln(),
        epsilon,
        degenerate: volume < epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tri() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0])
    }

    /// Heron's formula as an independent triangle-area oracle.
    fn heron(z: &DMatrix<f64>) -> f64 {
        let a = (z.row(0) - z.row(1)).norm();
        let b = (z.row(1) - z.row(2)).norm();
        let c = (z.row(2) - z.row(0)).norm();
        let s = (a + b + c) / 2.0;
        (s * (s - a) * (s - b) * (s - c)).sqrt()
    }

    #[test]
    fn unit_triangle() {
        assert!((simplex_volume(&tri()).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn collinear_is_flat() {
        let z = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(simplex_volume(&z).unwrap(), 0.0);
    }

    #[test]
    fn too_many_vertices() {
        let z = DMatrix::<f64>::zeros(4, 2);
        assert_eq!(simplex_volume(&z), Err(GeoError::TooManyVertices { k: 4, dim: 2 }));
    }

    #[test]
    fn segment_length_and_embedded_triangle() {
        let seg = DMatrix::<f64>::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 4.0, 5.0, 1.0]);
        assert!((simplex_volume(&seg).unwrap() - 5.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let z = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
            let v = simplex_volume(&z).unwrap();
            assert!((v - heron(&z)).abs() < 1e-9 * heron(&z).max(1e-3));
        }
    }

    #[test]
    fn log_volume_of_triangle() {
        let s = score_from_archetypes("q", &tri(), 1e-12).unwrap();
        assert_eq!(s.h_g, (0.5f64 + 1e-12).ln());
        assert!((s.h_g + 0.693147).abs() < 1e-6);
        assert!(!s.degenerate);
    }

    #[test]
    fn degenerate_archetypes_hit_the_floor() {
        let z = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        let s = score_from_archetypes("q", &z, 1e-12).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.h_g, 1e-12f64.ln());
        assert!((s.h_g + 27.6310).abs() < 1e-4);
    }

    #[test]
    fn doubling_scales_area_by_four() {
        let a = score_from_archetypes("q", &tri(), 1e-12).unwrap();
        let b = score_from_archetypes("q", &(tri() * 2.0), 1e-12).unwrap();
        assert!((b.volume / a.volume - 4.0).abs() < 1e-12);
        assert!((b.h_g - a.h_g - 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn single_precision_volume() {
        let z = tri().map(|v| v as f32);
        assert!((simplex_volume(&z).unwrap() - 0.5).abs() < 1e-6);
    }
}
