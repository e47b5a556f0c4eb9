//! k-d tree over a weighted point cloud answering closed-ball and
//! closed-box weight sums.
//!
//! Every node caches the exact sum of its weights as a list of partials, so
//! a query returns the correctly rounded sum of the selected weights. The
//! membership predicates used for whole-node acceptance and rejection are
//! monotone relaxations of the per-point predicate, which makes the selected
//! set identical to a brute-force scan.

use crate::numeric::ExactSum;

const LEAF_SIZE: usize = 16;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    start: u32,
    end: u32,
    left: u32,
    right: u32,
    sum_start: u32,
    sum_len: u32,
}

#[derive(Debug, Clone)]
pub struct BallIndex {
    dim: usize,
    // Coordinates and weights in tree order.
    coords: Vec<f64>,
    weights: Vec<f64>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
    // Per node: `dim` lower bounds followed by `dim` upper bounds.
    bounds: Vec<f64>,
    sums: Vec<f64>,
}

/// Squared Euclidean distance with a fixed axis order. All membership
/// decisions in the crate go through this function.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    s
}

impl BallIndex {
    pub fn build(coords: &[f64], weights: &[f64], dim: usize) -> Self {
        let count = weights.len();
        debug_assert_eq!(coords.len(), count * dim);
        let mut order: Vec<u32> = (0..count as u32).collect();
        let mut index = BallIndex {
            dim,
            coords: Vec::new(),
            weights: Vec::new(),
            ids: Vec::new(),
            nodes: Vec::with_capacity(2 * count / LEAF_SIZE + 1),
            bounds: Vec::new(),
            sums: Vec::new(),
        };
        if count > 0 {
            index.build_node(&mut order, 0, coords, weights);
        }
        index.coords = Vec::with_capacity(count * dim);
        index.weights = Vec::with_capacity(count);
        for &i in &order {
            let i = i as usize;
            index
                .coords
                .extend_from_slice(&coords[i * dim..(i + 1) * dim]);
            index.weights.push(weights[i]);
        }
        index.ids = order;
        index
    }

    fn build_node(&mut self, order: &mut [u32], offset: usize, coords: &[f64], weights: &[f64]) -> u32 {
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in order.iter() {
            let p = &coords[i as usize * dim..(i as usize + 1) * dim];
            for a in 0..dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let node_id = self.nodes.len() as u32;
        self.nodes.push(Node {
            start: offset as u32,
            end: (offset + order.len()) as u32,
            left: NO_CHILD,
            right: NO_CHILD,
            sum_start: 0,
            sum_len: 0,
        });
        self.bounds.extend_from_slice(&lo);
        self.bounds.extend_from_slice(&hi);

        let mut acc = ExactSum::new();
        if order.len() <= LEAF_SIZE {
            for &i in order.iter() {
                acc.add(weights[i as usize]);
            }
        } else {
            let axis = (0..dim)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            let mid = order.len() / 2;
            order.select_nth_unstable_by(mid, |&a, &b| {
                coords[a as usize * dim + axis]
                    .total_cmp(&coords[b as usize * dim + axis])
                    .then(a.cmp(&b))
            });
            let (left_half, right_half) = order.split_at_mut(mid);
            let left = self.build_node(left_half, offset, coords, weights);
            let right = self.build_node(right_half, offset + mid, coords, weights);
            for child in [left, right] {
                let c = self.nodes[child as usize];
                let s = c.sum_start as usize;
                acc.add_partials(&self.sums[s..s + c.sum_len as usize]);
            }
            let node = &mut self.nodes[node_id as usize];
            node.left = left;
            node.right = right;
        }
        let node = &mut self.nodes[node_id as usize];
        node.sum_start = self.sums.len() as u32;
        node.sum_len = acc.partials().len() as u32;
        self.sums.extend_from_slice(acc.partials());
        node_id
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    fn node_bounds(&self, node: usize) -> (&[f64], &[f64]) {
        let base = node * 2 * self.dim;
        (
            &self.bounds[base..base + self.dim],
            &self.bounds[base + self.dim..base + 2 * self.dim],
        )
    }

    /// Squared distance from `x` to the nearest and the farthest corner of
    /// the node box.
    #[inline]
    fn node_sq_range(&self, node: usize, x: &[f64]) -> (f64, f64) {
        let (lo, hi) = self.node_bounds(node);
        let mut near = 0.0;
        let mut far = 0.0;
        for a in 0..self.dim {
            let below = lo[a] - x[a];
            let above = x[a] - hi[a];
            let gap = if below > 0.0 {
                below
            } else if above > 0.0 {
                above
            } else {
                0.0
            };
            near += gap * gap;
            let reach = (x[a] - lo[a]).abs().max((hi[a] - x[a]).abs());
            far += reach * reach;
        }
        (near, far)
    }

    #[inline]
    fn point(&self, slot: usize) -> &[f64] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    #[inline]
    fn node_partials(&self, node: &Node) -> &[f64] {
        let s = node.sum_start as usize;
        &self.sums[s..s + node.sum_len as usize]
    }

    /// Exact (correctly rounded) weight of the closed ball `|y - x| <= r`.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        let mut acc = ExactSum::new();
        self.ball_mass_into(x, r, &mut acc);
        acc.value()
    }

    pub(crate) fn ball_mass_into(&self, x: &[f64], r: f64, acc: &mut ExactSum) {
        if self.nodes.is_empty() {
            return;
        }
        let r2 = r * r;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = self.nodes[id as usize];
            let (near, far) = self.node_sq_range(id as usize, x);
            if near > r2 {
                continue;
            }
            if far <= r2 {
                acc.add_partials(self.node_partials(&node));
                continue;
            }
            if node.left == NO_CHILD {
                for slot in node.start as usize..node.end as usize {
                    if sq_dist(self.point(slot), x) <= r2 {
                        acc.add(self.weights[slot]);
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
    }

    /// Original indices of the points in the closed ball, ascending.
    pub fn ball_ids(&self, x: &[f64], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let r2 = r * r;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = self.nodes[id as usize];
            let (near, far) = self.node_sq_range(id as usize, x);
            if near > r2 {
                continue;
            }
            if far <= r2 {
                out.extend((node.start..node.end).map(|s| self.ids[s as usize] as usize));
                continue;
            }
            if node.left == NO_CHILD {
                for slot in node.start as usize..node.end as usize {
                    if sq_dist(self.point(slot), x) <= r2 {
                        out.push(self.ids[slot] as usize);
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn any_in_ball(&self, x: &[f64], r: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let r2 = r * r;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = self.nodes[id as usize];
            let (near, far) = self.node_sq_range(id as usize, x);
            if near > r2 {
                continue;
            }
            if far <= r2 {
                return true;
            }
            if node.left == NO_CHILD {
                if (node.start as usize..node.end as usize)
                    .any(|slot| sq_dist(self.point(slot), x) <= r2)
                {
                    return true;
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        false
    }

    /// Exact weight of the closed axis-aligned box `min <= y <= max`.
    pub fn box_mass(&self, min: &[f64], max: &[f64]) -> f64 {
        let mut acc = ExactSum::new();
        self.visit_box(min, max, &mut acc);
        acc.value()
    }

    /// Original indices of the points in the closed box, ascending.
    pub fn box_ids(&self, min: &[f64], max: &[f64]) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let inside = |p: &[f64]| p.iter().zip(min).zip(max).all(|((v, a), b)| v >= a && v <= b);
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = self.nodes[id as usize];
            match self.box_relation(id as usize, min, max) {
                BoxRelation::Disjoint => {}
                BoxRelation::Inside => {
                    out.extend((node.start..node.end).map(|s| self.ids[s as usize] as usize))
                }
                BoxRelation::Straddles if node.left == NO_CHILD => {
                    for slot in node.start as usize..node.end as usize {
                        if inside(self.point(slot)) {
                            out.push(self.ids[slot] as usize);
                        }
                    }
                }
                BoxRelation::Straddles => {
                    stack.push(node.right);
                    stack.push(node.left);
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn box_relation(&self, node: usize, min: &[f64], max: &[f64]) -> BoxRelation {
        let (lo, hi) = self.node_bounds(node);
        let mut inside = true;
        for a in 0..self.dim {
            if hi[a] < min[a] || lo[a] > max[a] {
                return BoxRelation::Disjoint;
            }
            if lo[a] < min[a] || hi[a] > max[a] {
                inside = false;
            }
        }
        if inside {
            BoxRelation::Inside
        } else {
            BoxRelation::Straddles
        }
    }

    fn visit_box(
        &self,
        min: &[f64],
        max: &[f64],
        acc: &mut ExactSum,
    ) {
        if self.nodes.is_empty() {
            return;
        }
        let inside = |p: &[f64]| p.iter().zip(min).zip(max).all(|((v, a), b)| v >= a && v <= b);
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = self.nodes[id as usize];
            match self.box_relation(id as usize, min, max) {
                BoxRelation::Disjoint => {}
                BoxRelation::Inside => acc.add_partials(self.node_partials(&node)),
                BoxRelation::Straddles if node.left == NO_CHILD => {
                    for slot in node.start as usize..node.end as usize {
                        if inside(self.point(slot)) {
                            acc.add(self.weights[slot]);
                        }
                    }
                }
                BoxRelation::Straddles => {
                    stack.push(node.right);
                    stack.push(node.left);
                }
            }
        }
    }

    /// Calls `f(point, weight)` for every point in a node whose box comes
    /// within `cutoff` of `x`, in tree order. Points in pruned nodes are all
    /// farther than `cutoff`.
    pub fn visit_near(&self, x: &[f64], cutoff: f64, mut f: impl FnMut(&[f64], f64)) {
        if self.nodes.is_empty() {
            return;
        }
        let c2 = cutoff * cutoff;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = self.nodes[id as usize];
            let (near, _) = self.node_sq_range(id as usize, x);
            if near > c2 {
                continue;
            }
            if node.left == NO_CHILD {
                for slot in node.start as usize..node.end as usize {
                    f(self.point(slot), self.weights[slot]);
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
    }

    /// Index and squared distance of the nearest point (smallest index on
    /// ties).
    pub fn nearest(&self, x: &[f64]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = self.nodes[id as usize];
            let (near, _) = self.node_sq_range(id as usize, x);
            if let Some((_, b)) = best {
                if near > b {
                    continue;
                }
            }
            if node.left == NO_CHILD {
                for slot in node.start as usize..node.end as usize {
                    let d = sq_dist(self.point(slot), x);
                    let id = self.ids[slot] as usize;
                    let better = match best {
                        None => true,
                        Some((bi, bd)) => d < bd || (d == bd && id < bi),
                    };
                    if better {
                        best = Some((id, d));
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        best
    }
}

enum BoxRelation {
    Disjoint,
    Inside,
    Straddles,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, dim: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        (coords, weights)
    }

    #[test]
    fn ball_ids_match_brute_force() {
        let (c, w) = cloud(700, 3, 1);
        let idx = BallIndex::build(&c, &w, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let r = rng.gen_range(0.0..1.5);
            let brute: Vec<usize> = (0..700)
                .filter(|&i| sq_dist(&c[i * 3..i * 3 + 3], &x) <= r * r)
                .collect();
            assert_eq!(idx.ball_ids(&x, r), brute);
            assert_eq!(idx.any_in_ball(&x, r), !brute.is_empty());
            let exact = crate::numeric::exact_sum(brute.iter().map(|&i| w[i]));
            assert_eq!(idx.ball_mass(&x, r).to_bits(), exact.to_bits());
        }
    }

    #[test]
    fn box_queries_match_brute_force() {
        let (c, w) = cloud(500, 2, 3);
        let idx = BallIndex::build(&c, &w, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..0.5)).collect();
            let b: Vec<f64> = a.iter().map(|v| v + rng.gen_range(0.0..1.0)).collect();
            let brute: Vec<usize> = (0..500)
                .filter(|&i| (0..2).all(|k| c[i * 2 + k] >= a[k] && c[i * 2 + k] <= b[k]))
                .collect();
            assert_eq!(idx.box_ids(&a, &b), brute);
            let exact = crate::numeric::exact_sum(brute.iter().map(|&i| w[i]));
            assert_eq!(idx.box_mass(&a, &b).to_bits(), exact.to_bits());
        }
    }

    #[test]
    fn nearest_matches_brute_force() {
        let (c, w) = cloud(300, 2, 5);
        let idx = BallIndex::build(&c, &w, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (id, d) = idx.nearest(&x).unwrap();
            let best = (0..300)
                .map(|i| sq_dist(&c[i * 2..i * 2 + 2], &x))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d, best);
            assert_eq!(sq_dist(&c[id * 2..id * 2 + 2], &x), best);
        }
    }

    #[test]
    fn empty_index() {
        let idx = BallIndex::build(&[], &[], 2);
        assert_eq!(idx.ball_mass(&[0.0, 0.0], 10.0), 0.0);
        assert!(idx.ball_ids(&[0.0, 0.0], 1.0).is_empty());
        assert!(idx.nearest(&[0.0, 0.0]).is_none());
    }
}
