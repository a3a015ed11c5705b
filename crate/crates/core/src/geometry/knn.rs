//! Implicit kd-tree for k-nearest-neighbour distance queries on point clouds.

/// Points stored row-major with `dim` coordinates each.
pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
}

const LEAF: usize = 8;

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0, "point buffer does not match dimension");
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        build(points, dim, &mut order, 0);
        KdTree { points, dim, order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Distance from point `i` to its `k`-th nearest other point.
    pub fn kth_neighbor_distance(&self, i: usize, k: usize) -> f64 {
        assert!(k >= 1 && k < self.len(), "k must lie in 1..n");
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        self.search(self.point(i), i, k, 0, self.len(), 0, &mut best);
        best[k - 1].sqrt()
    }

    #[allow(clippy::too_many_arguments)]
    fn search(&self, q: &[f64], skip: usize, k: usize, lo: usize, hi: usize, depth: usize, best: &mut Vec<f64>) {
        if hi - lo <= LEAF {
            for &j in &self.order[lo..hi] {
                if j != skip {
                    push_best(best, k, sq_dist(q, self.point(j)));
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = depth % self.dim;
        let pivot = self.order[mid];
        let diff = q[axis] - self.point(pivot)[axis];
        if pivot != skip {
            push_best(best, k, sq_dist(q, self.point(pivot)));
        }
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, skip, k, near.0, near.1, depth + 1, best);
        if best.len() < k || diff * diff < best[best.len() - 1] {
            self.search(q, skip, k, far.0, far.1, depth + 1, best);
        }
    }
}

fn build(points: &[f64], dim: usize, order: &mut [usize], depth: usize) {
    if order.len() <= LEAF {
        return;
    }
    let axis = depth % dim;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a * dim + axis].total_cmp(&points[b * dim + axis])
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, dim, left, depth + 1);
    build(points, dim, &mut right[1..], depth + 1);
}

fn push_best(best: &mut Vec<f64>, k: usize, d: f64) {
    if best.len() == k && d >= best[k - 1] {
        return;
    }
    let pos = best.partition_point(|&b| b <= d);
    best.insert(pos, d);
    best.truncate(k);
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
