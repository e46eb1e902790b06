//! Point octree over cell centers with axis-aligned box queries.
//!
//! Leaves hold up to [`LEAF_CAPACITY`] entries before splitting; nodes stop
//! splitting [`MAX_DEPTH`] levels below the root. The root cube doubles towards
//! any point that falls outside it, so the tree never needs to know the map
//! extent up front.

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::math::Point3;

pub const LEAF_CAPACITY: usize = 8;
pub const MAX_DEPTH: u32 = 21;

#[derive(Debug, Clone)]
struct Node {
    center: Point3,
    half: f64,
    children: Option<[u32; 8]>,
    items: Vec<(Point3, usize)>,
}

impl Node {
    fn leaf(center: Point3, half: f64) -> Self {
        Self {
            center,
            half,
            children: None,
            items: Vec::new(),
        }
    }

    fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| (p[k] - self.center[k]).abs() <= self.half)
    }

    fn intersects(&self, lo: &Point3, hi: &Point3) -> bool {
        (0..3).all(|k| self.center[k] - self.half <= hi[k] && lo[k] <= self.center[k] + self.half)
    }

    fn octant(&self, p: &Point3) -> usize {
        (0..3).fold(0, |acc, k| acc | (usize::from(p[k] >= self.center[k]) << k))
    }
}

fn child_center(center: &Point3, half: f64, octant: usize) -> Point3 {
    let q = half * 0.5;
    Vector3::from_fn(|k, _| {
        if octant & (1 << k) != 0 {
            center[k] + q
        } else {
            center[k] - q
        }
    })
}

#[derive(Debug, Clone)]
pub struct Octree {
    nodes: Vec<Node>,
    root: Option<u32>,
    initial_half: f64,
    len: usize,
}

impl Octree {
    /// `initial_half` is the half-width of the first root cube.
    pub fn new(initial_half: f64) -> Self {
        Self {
            nodes: Vec::new(),
            root: None,
            initial_half,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn push(&mut self, node: Node) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    fn grow_towards(&mut self, p: &Point3) {
        let root = self.root.expect("grow on empty tree") as usize;
        let (c, h) = (self.nodes[root].center, self.nodes[root].half);
        let sign = Vector3::from_fn(|k, _| if p[k] >= c[k] { 1.0 } else { -1.0 });
        let new_center = c + sign * h;
        let new_half = 2.0 * h;
        let mut children = [0u32; 8];
        let old_octant = (0..3).fold(0, |acc, k| acc | (usize::from(sign[k] < 0.0) << k));
        for (o, slot) in children.iter_mut().enumerate() {
            *slot = if o == old_octant {
                root as u32
            } else {
                self.push(Node::leaf(child_center(&new_center, new_half, o), h))
            };
        }
        let mut new_root = Node::leaf(new_center, new_half);
        new_root.children = Some(children);
        let id = self.push(new_root);
        self.root = Some(id);
    }

    pub fn insert(&mut self, p: Point3, id: usize) {
        if self.root.is_none() {
            let r = self.push(Node::leaf(p, self.initial_half));
            self.root = Some(r);
        }
        while !self.nodes[self.root.unwrap() as usize].contains(&p) {
            self.grow_towards(&p);
        }
        let root = self.root.unwrap();
        self.insert_below(root, p, id);
        self.len += 1;
    }

    fn insert_below(&mut self, start: u32, p: Point3, id: usize) {
        let root_half = self.nodes[self.root.unwrap() as usize].half;
        let mut node = start as usize;
        while let Some(children) = self.nodes[node].children {
            node = children[self.nodes[node].octant(&p)] as usize;
        }
        self.nodes[node].items.push((p, id));
        let depth = (root_half / self.nodes[node].half).log2().round() as u32;
        if self.nodes[node].items.len() > LEAF_CAPACITY && depth < MAX_DEPTH {
            self.split(node);
        }
    }

    fn split(&mut self, node: usize) {
        let (c, h) = (self.nodes[node].center, self.nodes[node].half);
        let mut children = [0u32; 8];
        for (o, slot) in children.iter_mut().enumerate() {
            *slot = self.push(Node::leaf(child_center(&c, h, o), h * 0.5));
        }
        let items = core::mem::take(&mut self.nodes[node].items);
        self.nodes[node].children = Some(children);
        for (p, id) in items {
            self.insert_below(node as u32, p, id);
        }
    }

    /// Ids of every entry with `lo <= p <= hi` componentwise, in ascending id
    /// order.
    pub fn query_box(&self, lo: &Point3, hi: &Point3) -> Vec<usize> {
        let mut out = Vec::new();
        let Some(root) = self.root else {
            return out;
        };
        let mut stack = alloc::vec![root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if !node.intersects(lo, hi) {
                continue;
            }
            match node.children {
                Some(children) => stack.extend_from_slice(&children),
                None => out.extend(
                    node.items
                        .iter()
                        .filter(|(p, _)| (0..3).all(|k| lo[k] <= p[k] && p[k] <= hi[k]))
                        .map(|&(_, id)| id),
                ),
            }
        }
        out.sort_unstable();
        out
    }

    pub fn max_depth(&self) -> u32 {
        let Some(root) = self.root else { return 0 };
        let mut best = 0;
        let mut stack = alloc::vec![(root, 0u32)];
        while let Some((n, d)) = stack.pop() {
            best = best.max(d);
            if let Some(children) = self.nodes[n as usize].children {
                stack.extend(children.iter().map(|&c| (c, d + 1)));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_tree_returns_nothing() {
        let t = Octree::new(1.0);
        assert!(t.query_box(&Vector3::repeat(-1e9), &Vector3::repeat(1e9)).is_empty());
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut t = Octree::new(2.0);
        let mut pts = Vec::new();
        for id in 0..3000 {
            let p = Vector3::new(
                rng.random_range(-200i32..200) as f64 + 0.5,
                rng.random_range(-50i32..50) as f64 + 0.5,
                rng.random_range(-10i32..10) as f64 + 0.5,
            );
            t.insert(p, id);
            pts.push(p);
        }
        assert_eq!(t.len(), 3000);
        for _ in 0..500 {
            let a = Vector3::new(
                rng.random_range(-220.0..220.0),
                rng.random_range(-60.0..60.0),
                rng.random_range(-12.0..12.0),
            );
            let ext = Vector3::new(
                rng.random_range(0.0..80.0),
                rng.random_range(0.0..30.0),
                rng.random_range(0.0..8.0),
            );
            let (lo, hi) = (a, a + ext);
            let expected: Vec<usize> = pts
                .iter()
                .enumerate()
                .filter(|(_, p)| (0..3).all(|k| lo[k] <= p[k] && p[k] <= hi[k]))
                .map(|(i, _)| i)
                .collect();
            assert_eq!(t.query_box(&lo, &hi), expected);
        }
    }

    #[test]
    fn depth_is_bounded_for_clustered_points() {
        let mut t = Octree::new(1.0);
        for i in 0..100 {
            t.insert(Vector3::new(1e-12 * i as f64, 0.0, 0.0), i);
        }
        assert!(t.max_depth() <= MAX_DEPTH);
        assert_eq!(t.query_box(&Vector3::repeat(-1.0), &Vector3::repeat(1.0)).len(), 100);
    }
}
