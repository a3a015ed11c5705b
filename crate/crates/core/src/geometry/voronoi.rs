//! Voronoi cell sizes approximated through the dual Delaunay triangulation.

use nalgebra::DMatrix;

use super::delaunay::delaunay;
use crate::embedding::fit_pca;
use crate::error::{GeoError, Result};
use crate::scalar::Scalar;

const CLOUD_RADIUS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiVolumes<T: Scalar> {
    /// Sum of the volumes of all Delaunay simplices incident to each point.
    pub scores: Vec<T>,
    /// Dimension the points were reduced to before triangulating.
    pub dim_used: usize,
    /// Number of duplicate points that were jittered apart.
    pub jittered: usize,
    /// The cloud could not be triangulated (all points together, or flat
    /// after reduction); every score is zero.
    pub degenerate: bool,
}

/// PCA-reduces `points` to `reduce_to` (2 or 3) dimensions, triangulates them
/// and scores each point by the volume of its incident simplices.
pub fn voronoi_cell_volumes<T: Scalar>(points: &DMatrix<T>, reduce_to: usize, seed: u64) -> Result<VoronoiVolumes<T>> {
    let (n, d) = points.shape();
    if !(2..=3).contains(&reduce_to) {
        return Err(GeoError::InvalidInput(format!("reduce_to must be 2 or 3, got {reduce_to}")));
    }
    if n < reduce_to + 2 {
        return Err(GeoError::InvalidInput(format!("need at least {} points, got {n}", reduce_to + 2)));
    }
    if d < reduce_to {
        return Err(GeoError::InvalidInput(format!("points have dimension {d} < {reduce_to}")));
    }
    let degenerate = |jittered| VoronoiVolumes {
        scores: vec![T::zero(); n],
        dim_used: reduce_to,
        jittered,
        degenerate: true,
    };

    let centroid = points.row_mean();
    let radius = points
        .row_iter()
        .map(|r| (r - &centroid).norm().as_f64())
        .fold(0.0, f64::max);
    if radius < CLOUD_RADIUS_FLOOR {
        return Ok(degenerate(0));
    }

    let pca = fit_pca(points, reduce_to)?;
    if pca.degenerate {
        return Ok(degenerate(0));
    }
    let coords: Vec<Vec<f64>> = pca.x.row_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();
    let tri = match delaunay(&coords, seed) {
        Ok(t) => t,
        Err(GeoError::InvalidInput(_)) => return Ok(degenerate(0)),
        Err(e) => return Err(e),
    };
    let mut scores = vec![0.0f64; n];
    for (simplex, vol) in tri.simplices.iter().zip(&tri.volumes) {
        for &v in simplex {
            scores[v] += vol;
        }
    }
    Ok(VoronoiVolumes {
        scores: scores.into_iter().map(T::lit).collect(),
        dim_used: reduce_to,
        jittered: tri.jittered,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_with_center_fan() {
        let p = DMatrix::<f64>::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.5, 0.5]);
        let v = voronoi_cell_volumes(&p, 2, 0).unwrap();
        assert!((v.scores[4] - 1.0).abs() < 1e-12);
        for corner in &v.scores[..4] {
            assert!((corner - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_points_are_degenerate() {
        let p = DMatrix::from_element(6, 4, 0.3);
        let v = voronoi_cell_volumes(&p, 3, 0).unwrap();
        assert!(v.degenerate);
        assert!(v.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn scores_count_each_triangle_three_times() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-1.0..1.0));
        let v = voronoi_cell_volumes(&p, 2, 0).unwrap();
        let coords: Vec<Vec<f64>> = (0..30).map(|i| vec![p[(i, 0)], p[(i, 1)]]).collect();
        let total = delaunay(&coords, 0).unwrap().total_volume();
        assert!((v.scores.iter().sum::<f64>() - 3.0 * total).abs() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let p = DMatrix::<f64>::zeros(4, 3);
        assert!(voronoi_cell_volumes(&p, 3, 0).is_err());
    }
}
