//! Exact nearest-neighbour search over a static 3-D point set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::exec::Exec;

const LEAF_SIZE: usize = 12;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Axis-aligned splitting tree. Queries are exact; among equidistant points
/// the lowest index wins.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build_node(&points, &mut order, 0, &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Point3<f64> {
        Point3::from(self.points[i])
    }

    /// Index of and Euclidean distance to the closest point.
    pub fn nearest(&self, query: &Point3<f64>) -> Result<(usize, f64)> {
        self.nearest_within(query, f64::INFINITY)
            .ok_or(Error::Empty("nearest-neighbour target"))
    }

    /// Closest point no farther than `max_dist`, if any.
    pub fn nearest_within(&self, query: &Point3<f64>, max_dist: f64) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [query.x, query.y, query.z];
        let bound = if max_dist.is_finite() {
            max_dist * max_dist
        } else {
            f64::INFINITY
        };
        let mut best = Candidate {
            d2: bound,
            index: u32::MAX,
        };
        self.search_one(0, &q, &mut best);
        (best.index != u32::MAX).then(|| (best.index as usize, best.d2.sqrt()))
    }

    fn search_one(&self, node: usize, q: &[f64; 3], best: &mut Candidate) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let c = Candidate {
                        d2: dist2(&self.points[i as usize], q),
                        index: i,
                    };
                    if c.d2 <= best.d2 && (c.d2 < best.d2 || c.index < best.index) {
                        *best = c;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search_one(near as usize, q, best);
                if diff * diff <= best.d2 {
                    self.search_one(far as usize, q, best);
                }
            }
        }
    }

    /// The `k` closest points, nearest first.
    pub fn k_nearest(&self, query: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        if self.nodes.is_empty() || k == 0 {
            return Vec::new();
        }
        let q = [query.x, query.y, query.z];
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search_k(0, &q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|c| (c.index as usize, c.d2.sqrt()))
            .collect()
    }

    fn search_k(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let c = Candidate {
                        d2: dist2(&self.points[i as usize], q),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("non-empty heap") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search_k(near as usize, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().map_or(f64::INFINITY, |c| c.d2) {
                    self.search_k(far as usize, q, k, heap);
                }
            }
        }
    }

    /// [`KdTree::nearest_within`] over a batch of queries, results in query order.
    pub fn nearest_batch(
        &self,
        queries: &[Point3<f64>],
        max_dist: f64,
        exec: Exec,
    ) -> Vec<Option<(usize, f64)>> {
        exec.map_slice(queries, |q| self.nearest_within(q, max_dist))
    }
}

fn build_node(points: &[[f64; 3]], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] <= 0.0 {
        // all points coincide
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis].total_cmp(&points[b as usize][axis])
    });
    let value = points[order[mid] as usize][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_part, right_part) = order.split_at_mut(mid);
    let left = build_node(points, left_part, offset, nodes);
    let right = build_node(points, right_part, offset + mid, nodes);
    nodes[id as usize] = Node::Split {
        axis: axis as u8,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3<f64>], q: &Point3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn random_points(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(300.0..500.0)))
            .collect()
    }

    #[test]
    fn empty_target_is_an_error() {
        let t = KdTree::build(&[]);
        assert!(matches!(t.nearest(&Point3::origin()), Err(Error::Empty(_))));
        assert!(t.k_nearest(&Point3::origin(), 3).is_empty());
    }

    #[test]
    fn query_on_a_point_returns_it() {
        let pts = random_points(500, 1);
        let t = KdTree::build(&pts);
        for (i, p) in pts.iter().enumerate().step_by(37) {
            assert_eq!(t.nearest(p).unwrap(), (i, 0.0));
        }
    }

    #[test]
    fn three_point_target() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
            Point3::new(0.0, 10.0, 0.0),
        ];
        let t = KdTree::build(&pts);
        let q = Point3::new(6.0, 1.0, 0.5);
        assert_eq!(t.nearest(&q).unwrap(), brute(&pts, &q));
        assert_eq!(t.nearest(&q).unwrap().0, 1);
    }

    #[test]
    fn agrees_with_exhaustive_scan() {
        let pts = random_points(10_000, 7);
        let t = KdTree::build(&pts);
        let queries = random_points(1_000, 8);
        for q in &queries {
            assert_eq!(t.nearest(q).unwrap(), brute(&pts, q));
        }
    }

    #[test]
    fn k_nearest_matches_sorted_scan() {
        let pts = random_points(2_000, 3);
        let t = KdTree::build(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let q = pts[rng.random_range(0..pts.len())] + nalgebra::Vector3::new(0.3, -0.2, 0.1);
            let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm())).collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(t.k_nearest(&q, 20), all[..20].to_vec());
        }
    }

    #[test]
    fn gated_search_and_duplicates() {
        let pts = vec![Point3::new(1.0, 1.0, 1.0); 40];
        let t = KdTree::build(&pts);
        assert_eq!(t.nearest(&Point3::origin()).unwrap().0, 0);
        assert!(t.nearest_within(&Point3::origin(), 1.0).is_none());
        assert!(t.nearest_within(&Point3::origin(), 2.0).is_some());
        let batch = t.nearest_batch(&[Point3::origin(), Point3::new(1.0, 1.0, 1.5)], 1.0, Exec::default());
        assert_eq!(batch, vec![None, Some((0, 0.5))]);
    }
}
