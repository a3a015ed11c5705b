//! Incremental convex hull in low dimension (2..=4), brute-force visibility.
//!
//! Sized for response batches (tens of points); every insertion scans all
//! live facets. Points lying on an existing facet hyperplane are treated as
//! not visible from it, which keeps the facet set a valid triangulation of
//! the hull boundary when points are co-planar.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HullError {
    #[error("points span only {rank} of {dim} dimensions")]
    RankDeficient { rank: usize, dim: usize },
    #[error("hull dimension {0} is not supported")]
    UnsupportedDimension(usize),
}

/// A hull facet with outward unit normal: `normal . p <= offset` inside.
#[derive(Debug, Clone, PartialEq)]
pub struct HullFacet {
    pub vertices: Vec<usize>,
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HullFacet {
    fn signed_distance(&self, p: &[f64]) -> f64 {
        dot(&self.normal, p) - self.offset
    }
}

const VISIBLE_EPS: f64 = 1e-12;
const RANK_EPS: f64 = 1e-9;

/// Convex hull of `points` (all of equal dimension `dim`, `2 <= dim <= 4`).
pub fn convex_hull(points: &[Vec<f64>]) -> Result<Vec<HullFacet>, HullError> {
    let dim = points.first().map_or(0, Vec::len);
    if !(2..=4).contains(&dim) {
        return Err(HullError::UnsupportedDimension(dim));
    }
    let initial = initial_simplex(points, dim)?;
    let centroid: Vec<f64> = (0..dim)
        .map(|c| initial.iter().map(|&i| points[i][c]).sum::<f64>() / (dim + 1) as f64)
        .collect();

    let mut facets: Vec<HullFacet> = (0..=dim)
        .map(|skip| {
            let verts: Vec<usize> =
                initial.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, &v)| v).collect();
            make_facet(points, verts, &centroid)
        })
        .collect();

    for (idx, p) in points.iter().enumerate() {
        if initial.contains(&idx) {
            continue;
        }
        let visible: Vec<usize> = facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.signed_distance(p) > VISIBLE_EPS)
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            continue;
        }

        let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
        for &fi in &visible {
            let verts = &facets[fi].vertices;
            for skip in 0..verts.len() {
                let mut ridge: Vec<usize> =
                    verts.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, &v)| v).collect();
                ridge.sort_unstable();
                *ridges.entry(ridge).or_insert(0) += 1;
            }
        }
        let mut horizon: Vec<Vec<usize>> =
            ridges.into_iter().filter(|(_, c)| *c == 1).map(|(r, _)| r).collect();
        horizon.sort();

        let mut keep = vec![true; facets.len()];
        for &fi in &visible {
            keep[fi] = false;
        }
        let mut next: Vec<HullFacet> =
            facets.into_iter().zip(keep).filter(|(_, k)| *k).map(|(f, _)| f).collect();
        for ridge in horizon {
            let mut verts = ridge;
            verts.push(idx);
            next.push(make_facet(points, verts, &centroid));
        }
        facets = next;
    }
    Ok(facets)
}

/// Greedy choice of `dim + 1` affinely independent points.
fn initial_simplex(points: &[Vec<f64>], dim: usize) -> Result<Vec<usize>, HullError> {
    let first = (0..points.len())
        .min_by(|&a, &b| points[a][0].partial_cmp(&points[b][0]).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or(HullError::RankDeficient { rank: 0, dim })?;
    let origin = &points[first];
    let mut chosen = vec![first];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while chosen.len() <= dim {
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for (i, p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let mut r: Vec<f64> = p.iter().zip(origin).map(|(a, b)| a - b).collect();
            for b in &basis {
                let proj = dot(b, &r);
                for (rc, bc) in r.iter_mut().zip(b) {
                    *rc -= proj * bc;
                }
            }
            let norm = dot(&r, &r).sqrt();
            if best.as_ref().map_or(true, |(bn, _, _)| norm > *bn) {
                best = Some((norm, i, r));
            }
        }
        match best {
            Some((norm, i, r)) if norm > RANK_EPS => {
                chosen.push(i);
                basis.push(r.iter().map(|v| v / norm).collect());
            }
            _ => return Err(HullError::RankDeficient { rank: basis.len(), dim }),
        }
    }
    Ok(chosen)
}

fn make_facet(points: &[Vec<f64>], vertices: Vec<usize>, interior: &[f64]) -> HullFacet {
    let dim = points[vertices[0]].len();
    let base = &points[vertices[0]];
    let edges: Vec<Vec<f64>> = vertices[1..]
        .iter()
        .map(|&v| points[v].iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    // generalized cross product of the dim-1 edge vectors
    let mut normal = vec![0.0; dim];
    for (col, n) in normal.iter_mut().enumerate() {
        let minor: Vec<f64> = edges
            .iter()
            .flat_map(|e| e.iter().enumerate().filter(|&(c, _)| c != col).map(|(_, &v)| v))
            .collect();
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        *n = sign * determinant(minor, dim - 1);
    }
    let len = dot(&normal, &normal).sqrt();
    if len > 0.0 {
        normal.iter_mut().for_each(|v| *v /= len);
    }
    let mut offset = dot(&normal, base);
    if dot(&normal, interior) - offset > 0.0 {
        normal.iter_mut().for_each(|v| *v = -*v);
        offset = -offset;
    }
    HullFacet { vertices, normal, offset }
}

/// Determinant of a row-major `size x size` matrix by partial-pivot elimination.
pub(crate) fn determinant(mut m: Vec<f64>, size: usize) -> f64 {
    if size == 0 {
        return 1.0;
    }
    let mut det = 1.0;
    for col in 0..size {
        let pivot = (col..size)
            .max_by(|&a, &b| m[a * size + col].abs().partial_cmp(&m[b * size + col].abs()).unwrap())
            .unwrap();
        if m[pivot * size + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..size {
                m.swap(pivot * size + c, col * size + c);
            }
            det = -det;
        }
        let p = m[col * size + col];
        det *= p;
        for row in col + 1..size {
            let factor = m[row * size + col] / p;
            for c in col..size {
                m[row * size + c] -= factor * m[col * size + c];
            }
        }
    }
    det
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_hull_has_twelve_triangles() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(vec![(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        pts.push(vec![0.5, 0.5, 0.5]);
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.len(), 12);
        assert!(hull.iter().all(|f| !f.vertices.contains(&8)));
    }

    #[test]
    fn square_hull_in_plane() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![0.5, 0.4]];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.len(), 4);
    }

    #[test]
    fn flat_input_is_rank_deficient() {
        let pts = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 0.0]];
        assert_eq!(convex_hull(&pts), Err(HullError::RankDeficient { rank: 2, dim: 3 }));
    }

    #[test]
    fn determinant_small() {
        assert_eq!(determinant(vec![2.0, 0.0, 0.0, 3.0], 2), 6.0);
        assert!((determinant(vec![0.0, 1.0, 1.0, 0.0], 2) + 1.0).abs() < 1e-15);
    }
}
