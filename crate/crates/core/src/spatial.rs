//! Static 2-D k-d tree for nearest-neighbour queries over projected points.
//!
//! Built once, read-only afterwards. Ties in distance are broken by the
//! original point index so query results are fully deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// A point in a projected (metric) coordinate system.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

#[derive(Debug, Clone)]
struct Node {
    idx: usize,
    axis: u8,
    left: Option<usize>,
    right: Option<usize>,
}

/// Balanced k-d tree holding indices into the original point slice.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

/// Neighbour returned by a query: index into the indexed points and distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist: f64,
}

#[derive(PartialEq)]
struct HeapItem {
    d2: f64,
    index: usize,
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.index.cmp(&other.index))
    }
}

impl KdTree {
    pub fn new(points: &[Point]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        tree.root = tree.build(&mut idx, 0);
        tree
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = (depth % 2) as u8;
        let pts = &self.points;
        let key = |i: usize| if axis == 0 { pts[i].x } else { pts[i].y };
        idx.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let node_id = self.nodes.len();
        self.nodes.push(Node { idx: idx[mid], axis, left: None, right: None });
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build(lo, depth + 1);
        let right = self.build(hi, depth + 1);
        self.nodes[node_id].left = left;
        self.nodes[node_id].right = right;
        Some(node_id)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Nearest indexed point, lowest index on ties.
    pub fn nearest(&self, q: Point) -> Option<Neighbor> {
        self.k_nearest(q, 1).into_iter().next()
    }

    /// The `k` nearest points ordered by (distance, index).
    pub fn k_nearest(&self, q: Point, k: usize) -> Vec<Neighbor> {
        if k == 0 || self.root.is_none() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(k + 1);
        self.search_knn(self.root, q, k, &mut heap);
        let mut out: Vec<HeapItem> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|h| Neighbor { index: h.index, dist: h.d2.sqrt() })
            .collect()
    }

    fn search_knn(&self, node: Option<usize>, q: Point, k: usize, heap: &mut BinaryHeap<HeapItem>) {
        let Some(nid) = node else { return };
        let n = &self.nodes[nid];
        let p = self.points[n.idx];
        let item = HeapItem { d2: p.dist2(&q), index: n.idx };
        if heap.len() < k {
            heap.push(item);
        } else if let Some(top) = heap.peek() {
            if item < *top {
                heap.pop();
                heap.push(item);
            }
        }
        let diff = if n.axis == 0 { q.x - p.x } else { q.y - p.y };
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.search_knn(near, q, k, heap);
        // `<=` keeps equal-distance candidates with smaller indices reachable.
        let must_visit = heap.len() < k || heap.peek().is_some_and(|t| diff * diff <= t.d2);
        if must_visit {
            self.search_knn(far, q, k, heap);
        }
    }

    /// All points within `radius` (inclusive), ordered by (distance, index).
    pub fn within(&self, q: Point, radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        let r2 = radius * radius;
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        while let Some(nid) = stack.pop() {
            let n = &self.nodes[nid];
            let p = self.points[n.idx];
            let d2 = p.dist2(&q);
            if d2 <= r2 {
                out.push(HeapItem { d2, index: n.idx });
            }
            let diff = if n.axis == 0 { q.x - p.x } else { q.y - p.y };
            let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
            if let Some(c) = near {
                stack.push(c);
            }
            if diff * diff <= r2 {
                if let Some(c) = far {
                    stack.push(c);
                }
            }
        }
        out.sort();
        out.into_iter()
            .map(|h| Neighbor { index: h.index, dist: h.d2.sqrt() })
            .collect()
    }
}
