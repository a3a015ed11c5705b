//! Delaunay triangulation in 2D and 3D as the lower hull of points lifted to
//! the paraboloid `x_{d+1} = |x|^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hull::{convex_hull, determinant, HullError};
use crate::error::{GeoError, Result};

const DUPLICATE_TOL: f64 = 1e-12;
const DUPLICATE_JITTER: f64 = 1e-9;
const LIFT_JITTER: f64 = 1e-9;
const LOWER_TOL: f64 = 1e-10;
const MAX_LIFT_RETRIES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    /// Vertex indices of each simplex (`dim + 1` entries).
    pub simplices: Vec<Vec<usize>>,
    /// Volume of each simplex in the input coordinates.
    pub volumes: Vec<f64>,
    /// Number of duplicate points moved apart before triangulating.
    pub jittered: usize,
}

impl Triangulation {
    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

/// Delaunay triangulation of `points` (each of length 2 or 3).
///
/// Fails with [`GeoError::InvalidInput`] when the points do not span the full
/// dimension.
pub fn delaunay(points: &[Vec<f64>], seed: u64) -> Result<Triangulation> {
    let dim = points.first().map_or(0, Vec::len);
    if !(2..=3).contains(&dim) {
        return Err(GeoError::InvalidInput(format!("Delaunay dimension must be 2 or 3, got {dim}")));
    }
    if points.len() < dim + 1 {
        return Err(GeoError::InvalidInput(format!("need at least {} points, got {}", dim + 1, points.len())));
    }
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(GeoError::NonFinite);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = points.to_vec();
    let jittered = separate_duplicates(&mut pts, &mut rng);

    let n = pts.len();
    let centroid: Vec<f64> = (0..dim).map(|c| pts.iter().map(|p| p[c]).sum::<f64>() / n as f64).collect();
    let scale = pts
        .iter()
        .map(|p| p.iter().zip(&centroid).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(GeoError::InvalidInput("points are all identical".into()));
    }
    let unit: Vec<Vec<f64>> =
        pts.iter().map(|p| p.iter().zip(&centroid).map(|(a, b)| (a - b) / scale).collect()).collect();

    let mut heights: Vec<f64> = unit.iter().map(|p| p.iter().map(|v| v * v).sum()).collect();
    let mut attempt = 0;
    let facets = loop {
        let lifted: Vec<Vec<f64>> =
            unit.iter().zip(&heights).map(|(p, &h)| p.iter().copied().chain([h]).collect()).collect();
        match convex_hull(&lifted) {
            Ok(f) => break f,
            // base spans the space but the lift is flat: cospherical input
            Err(HullError::RankDeficient { rank, .. }) if rank == dim && attempt < MAX_LIFT_RETRIES => {
                attempt += 1;
                for h in heights.iter_mut() {
                    *h += LIFT_JITTER * rng.random_range(-1.0..1.0);
                }
            }
            Err(e) => return Err(GeoError::InvalidInput(e.to_string())),
        }
    };

    let factorial: f64 = (1..=dim).map(|i| i as f64).product();
    let rescale = scale.powi(dim as i32);
    let mut simplices = Vec::new();
    let mut volumes = Vec::new();
    for f in facets {
        if f.normal[dim] >= -LOWER_TOL {
            continue;
        }
        let base = &unit[f.vertices[0]];
        let edges: Vec<f64> = f.vertices[1..]
            .iter()
            .flat_map(|&v| unit[v].iter().zip(base).map(|(a, b)| a - b))
            .collect();
        let vol = determinant(edges, dim).abs() / factorial * rescale;
        let mut verts = f.vertices;
        verts.sort_unstable();
        simplices.push(verts);
        volumes.push(vol);
    }
    Ok(Triangulation { simplices, volumes, jittered })
}

/// Moves every later copy of a repeated point by a seeded offset.
fn separate_duplicates(pts: &mut [Vec<f64>], rng: &mut ChaCha8Rng) -> usize {
    let mut moved = 0;
    for i in 1..pts.len() {
        let duplicate = (0..i).any(|j| {
            pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < DUPLICATE_TOL
        });
        if duplicate {
            for v in pts[i].iter_mut() {
                *v += DUPLICATE_JITTER * rng.random_range(-1.0..1.0);
            }
            moved += 1;
        }
    }
    moved
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circumcircle_empty(pts: &[Vec<f64>], tri: &[usize]) -> bool {
        let (a, b, c) = (&pts[tri[0]], &pts[tri[1]], &pts[tri[2]]);
        let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
        let sq = |p: &Vec<f64>| p[0] * p[0] + p[1] * p[1];
        let ux = (sq(a) * (b[1] - c[1]) + sq(b) * (c[1] - a[1]) + sq(c) * (a[1] - b[1])) / d;
        let uy = (sq(a) * (c[0] - b[0]) + sq(b) * (a[0] - c[0]) + sq(c) * (b[0] - a[0])) / d;
        let r2 = (a[0] - ux).powi(2) + (a[1] - uy).powi(2);
        pts.iter()
            .enumerate()
            .filter(|(i, _)| !tri.contains(i))
            .all(|(_, p)| (p[0] - ux).powi(2) + (p[1] - uy).powi(2) >= r2 * (1.0 - 1e-9))
    }

    #[test]
    fn random_planar_points_satisfy_empty_circle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let pts: Vec<Vec<f64>> =
                (0..30).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let t = delaunay(&pts, 0).unwrap();
            assert!(t.simplices.iter().all(|s| circumcircle_empty(&pts, s)));
            // Euler: triangles = 2n - 2 - hull vertices
            let hull = convex_hull(&pts).unwrap();
            assert_eq!(t.simplices.len(), 2 * pts.len() - 2 - hull.len());
        }
    }

    #[test]
    fn cube_with_center_fills_unit_volume() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(vec![(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        pts.push(vec![0.5, 0.5, 0.5]);
        let t = delaunay(&pts, 3).unwrap();
        assert!((t.total_volume() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cocircular_square_is_split_in_two() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        let t = delaunay(&pts, 1).unwrap();
        assert_eq!(t.simplices.len(), 2);
        assert!((t.total_volume() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duplicates_are_counted() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.3, 0.3]];
        let t = delaunay(&pts, 1).unwrap();
        assert_eq!(t.jittered, 1);
        assert!((t.total_volume() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn collinear_points_fail() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        assert!(delaunay(&pts, 0).is_err());
    }
}
