use crate::spatial::{KdTree, Point};

/// One nearest-neighbour pairing between point sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMatch {
    pub a: usize,
    pub b: usize,
    pub dist: f64,
}

/// Pairs every point of `a` with its nearest point of `b`, omitting pairs
/// farther than `max_dist`. Equidistant candidates resolve to the lower index.
pub fn match_points(a: &[Point], b: &[Point], max_dist: f64) -> Vec<PointMatch> {
    if b.is_empty() {
        return Vec::new();
    }
    let tree = KdTree::new(b);
    match_with_index(a, &tree, max_dist)
}

/// As [`match_points`] with a prebuilt index over `b`.
pub fn match_with_index(a: &[Point], tree: &KdTree, max_dist: f64) -> Vec<PointMatch> {
    a.iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let n = tree.nearest(*p)?;
            (n.dist <= max_dist).then_some(PointMatch { a: i, b: n.index, dist: n.dist })
        })
        .collect()
}
