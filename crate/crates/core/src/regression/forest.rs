//! Breiman-style random forest of CART regression trees.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DesignMatrix, FeatureKind, Regressor};
use crate::error::{Error, Result};
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌈p/3⌉.
    pub mtry: Option<usize>,
    /// Smallest number of (bootstrap) samples in a leaf.
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 500, mtry: None, min_leaf: 5 }
    }
}

impl ForestParams {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf(f64),
    /// `x[feature] <= threshold` goes left.
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    /// Class codes whose bit is set in `left_mask` go left.
    Subset { feature: u32, left_mask: u64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            i = match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    if x[feature as usize] <= threshold {
                        left
                    } else {
                        right
                    }
                }
                Node::Subset { feature, left_mask, left, right } => {
                    let c = x[feature as usize] as u64;
                    if c < 64 && left_mask >> c & 1 == 1 {
                        left
                    } else {
                        right
                    }
                }
            } as usize;
        }
    }

    /// Indices of the features used by at least one split.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf(_) => None,
                Node::Split { feature, .. } | Node::Subset { feature, .. } => Some(*feature as usize),
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    /// Parameters with `mtry` resolved.
    pub params: ForestParams,
    pub seed: u64,
    /// Out-of-bag mean squared error.
    pub oob_error: f64,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
}

/// A fitted forest plus its out-of-bag bookkeeping.
#[derive(Debug, Clone)]
pub struct ForestFit {
    pub forest: Forest,
    /// Mean out-of-bag prediction per training sample (NaN if always in bag).
    pub oob_predictions: Vec<f64>,
    /// Out-of-bag sample indices per tree.
    pub oob_sets: Vec<Vec<usize>>,
}

impl Forest {
    /// Mean of the tree outputs for a row in training-feature order.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

impl Regressor for Forest {
    fn predict(&self, d: &DesignMatrix) -> Result<Vec<f64>> {
        let cols: Vec<&[f64]> = self
            .feature_names
            .iter()
            .map(|n| {
                d.feature(n)
                    .map(|f| f.values.as_slice())
                    .ok_or_else(|| Error::InvalidDesign(format!("missing feature `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok((0..d.n())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = cols.iter().map(|c| c[i]).collect();
                self.predict_row(&row)
            })
            .collect())
    }
}

struct Data<'a> {
    cols: Vec<&'a [f64]>,
    kinds: Vec<FeatureKind>,
    y: &'a [f64],
}

struct Best {
    gain: f64,
    node: Node,
}

fn best_numeric(col: &[f64], y: &[f64], idx: &[usize], min_leaf: usize, buf: &mut Vec<(f64, f64)>) -> Option<(f64, f64)> {
    buf.clear();
    buf.extend(idx.iter().map(|&i| (col[i], y[i])));
    buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let n = buf.len();
    let total: f64 = buf.iter().map(|p| p.1).sum();
    let mut left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for k in 1..n {
        left += buf[k - 1].1;
        if k < min_leaf || n - k < min_leaf || buf[k - 1].0 == buf[k].0 {
            continue;
        }
        let right = total - left;
        let score = left * left / k as f64 + right * right / (n - k) as f64;
        if best.is_none_or(|b| score > b.0) {
            let (a, b) = (buf[k - 1].0, buf[k].0);
            let mut thr = a + (b - a) / 2.0;
            if !(thr < b) {
                thr = a;
            }
            best = Some((score, thr));
        }
    }
    best
}

fn best_subset(col: &[f64], y: &[f64], idx: &[usize], levels: usize, min_leaf: usize) -> Option<(f64, u64)> {
    let mut sum = vec![0.0; levels];
    let mut cnt = vec![0usize; levels];
    for &i in idx {
        let c = col[i] as usize;
        sum[c] += y[i];
        cnt[c] += 1;
    }
    let mut cats: Vec<usize> = (0..levels).filter(|&c| cnt[c] > 0).collect();
    cats.sort_by(|&a, &b| (sum[a] / cnt[a] as f64).total_cmp(&(sum[b] / cnt[b] as f64)).then(a.cmp(&b)));
    let n = idx.len();
    let total: f64 = sum.iter().sum();
    let (mut ls, mut ln, mut mask) = (0.0, 0usize, 0u64);
    let mut best: Option<(f64, u64)> = None;
    for &c in &cats[..cats.len().saturating_sub(1)] {
        ls += sum[c];
        ln += cnt[c];
        mask |= 1 << c;
        if ln < min_leaf || n - ln < min_leaf {
            continue;
        }
        let rs = total - ls;
        let score = ls * ls / ln as f64 + rs * rs / (n - ln) as f64;
        if best.is_none_or(|b| score > b.0) {
            best = Some((score, mask));
        }
    }
    best
}

fn goes_left(node: &Node, x: f64) -> bool {
    match *node {
        Node::Split { threshold, .. } => x <= threshold,
        Node::Subset { left_mask, .. } => left_mask >> (x as u64) & 1 == 1,
        Node::Leaf(_) => unreachable!(),
    }
}

fn grow_tree(data: &Data, mut samples: Vec<usize>, mtry: usize, min_leaf: usize, rng: &mut ChaCha8Rng) -> Tree {
    let p = data.cols.len();
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut stack = vec![(0usize, 0usize, samples.len())];
    let mut feats: Vec<usize> = (0..p).collect();
    let mut buf = Vec::new();
    while let Some((id, lo, hi)) = stack.pop() {
        let idx = &mut samples[lo..hi];
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| data.y[i]).sum();
        let mean = sum / n as f64;
        let first = data.y[idx[0]];
        nodes[id] = Node::Leaf(mean);
        if n < 2 * min_leaf || idx.iter().all(|&i| data.y[i] == first) {
            continue;
        }
        for k in 0..mtry {
            let j = rng.random_range(k..p);
            feats.swap(k, j);
        }
        let parent = sum * sum / n as f64;
        let mut best: Option<Best> = None;
        for &f in &feats[..mtry] {
            let cand = match data.kinds[f] {
                FeatureKind::Numeric => best_numeric(data.cols[f], data.y, idx, min_leaf, &mut buf)
                    .map(|(g, threshold)| (g, Node::Split { feature: f as u32, threshold, left: 0, right: 0 })),
                FeatureKind::Categorical { levels } => best_subset(data.cols[f], data.y, idx, levels, min_leaf)
                    .map(|(g, left_mask)| (g, Node::Subset { feature: f as u32, left_mask, left: 0, right: 0 })),
            };
            if let Some((gain, node)) = cand {
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Best { gain, node });
                }
            }
        }
        let Some(Best { gain, node }) = best else { continue };
        if !(gain > parent * (1.0 + 1e-12)) {
            continue;
        }
        let feature = match node {
            Node::Split { feature, .. } | Node::Subset { feature, .. } => feature as usize,
            Node::Leaf(_) => unreachable!(),
        };
        let col = data.cols[feature];
        let mut split = 0;
        for k in 0..n {
            if goes_left(&node, col[idx[k]]) {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = (nodes.len() as u32, nodes.len() as u32 + 1);
        nodes.push(Node::Leaf(0.0));
        nodes.push(Node::Leaf(0.0));
        nodes[id] = match node {
            Node::Split { feature, threshold, .. } => Node::Split { feature, threshold, left: l, right: r },
            Node::Subset { feature, left_mask, .. } => Node::Subset { feature, left_mask, left: l, right: r },
            Node::Leaf(_) => unreachable!(),
        };
        stack.push((r as usize, lo + split, hi));
        stack.push((l as usize, lo, lo + split));
    }
    Tree { nodes }
}

/// Fits a forest and keeps the out-of-bag bookkeeping.
///
/// Tree `t` draws its bootstrap sample and split candidates from stream `t`
/// of the master seed, so the result does not depend on the thread count.
pub fn fit_random_forest_oob(d: &DesignMatrix, params: &ForestParams, seed: u64) -> Result<ForestFit> {
    let n = d.n();
    let p = d.p();
    if n == 0 || p == 0 {
        return Err(Error::EmptyDesign);
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::InvalidArgument("n_trees and min_leaf must be >= 1".into()));
    }
    let mtry = params.mtry_for(p);
    let data = Data {
        cols: d.features().iter().map(|f| f.values.as_slice()).collect(),
        kinds: d.features().iter().map(|f| f.kind).collect(),
        y: d.target(),
    };
    let grown: Vec<(Tree, Vec<usize>, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let mut inbag = vec![false; n];
            let samples: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    inbag[i] = true;
                    i
                })
                .collect();
            let tree = grow_tree(&data, samples, mtry, params.min_leaf, &mut rng);
            let oob: Vec<usize> = (0..n).filter(|&i| !inbag[i]).collect();
            let preds = oob.iter().map(|&i| tree.predict(&d.row(i))).collect();
            (tree, oob, preds)
        })
        .collect();

    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    for (_, oob, preds) in &grown {
        for (&i, &v) in oob.iter().zip(preds) {
            sum[i] += v;
            cnt[i] += 1;
        }
    }
    let oob_predictions: Vec<f64> =
        sum.iter().zip(&cnt).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect();
    let scored: Vec<f64> = oob_predictions
        .iter()
        .zip(d.target())
        .filter(|(p, _)| !p.is_nan())
        .map(|(p, y)| (p - y) * (p - y))
        .collect();
    let oob_error = if scored.is_empty() { f64::NAN } else { scored.iter().sum::<f64>() / scored.len() as f64 };

    let (trees, oob_sets): (Vec<Tree>, Vec<Vec<usize>>) = grown.into_iter().map(|(t, o, _)| (t, o)).unzip();
    let forest = Forest {
        trees,
        params: ForestParams { mtry: Some(mtry), ..*params },
        seed,
        oob_error,
        feature_names: d.names().into_iter().map(String::from).collect(),
        feature_kinds: d.features().iter().map(|f| f.kind).collect(),
    };
    Ok(ForestFit { forest, oob_predictions, oob_sets })
}

pub fn fit_random_forest(d: &DesignMatrix, params: &ForestParams, seed: u64) -> Result<Forest> {
    fit_random_forest_oob(d, params, seed).map(|f| f.forest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_1d(n: usize) -> DesignMatrix {
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 6.0).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() * 10.0 + ((i * 7919) % 17) as f64 / 8.0).collect();
        let mut d = DesignMatrix::new(y).unwrap();
        d.push_numeric("x", x).unwrap();
        d
    }

    #[test]
    fn constant_target() {
        let mut d = DesignMatrix::new(vec![4.5; 30]).unwrap();
        d.push_numeric("x", (0..30).map(f64::from).collect()).unwrap();
        let f = fit_random_forest(&d, &ForestParams { n_trees: 20, ..Default::default() }, 1).unwrap();
        assert!(f.predict(&d).unwrap().iter().all(|&v| v == 4.5));
    }

    #[test]
    fn predictions_within_target_range_and_beats_mean() {
        let d = smooth_1d(500);
        let fit = fit_random_forest_oob(&d, &ForestParams { n_trees: 100, ..Default::default() }, 7).unwrap();
        let (lo, hi) = d.target().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for t in &fit.forest.trees {
            for n in &t.nodes {
                if let Node::Leaf(v) = n {
                    assert!(*v >= lo && *v <= hi);
                }
            }
        }
        let mean = d.target().iter().sum::<f64>() / 500.0;
        let base = d.target().iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 500.0;
        assert!(fit.forest.oob_error < 0.2 * base, "{} vs {}", fit.forest.oob_error, base);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let d = smooth_1d(200);
        let p = ForestParams { n_trees: 40, ..Default::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit_random_forest(&d, &p, 3).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn categorical_split() {
        let codes: Vec<usize> = (0..120).map(|i| i % 4).collect();
        let y: Vec<f64> = codes.iter().map(|&c| [1.0, 50.0, 2.0, 49.0][c]).collect();
        let mut d = DesignMatrix::new(y).unwrap();
        d.push_categorical("cls", &codes, 4).unwrap();
        let f = fit_random_forest(&d, &ForestParams { n_trees: 10, min_leaf: 2, mtry: None }, 0).unwrap();
        let pred = f.predict(&d).unwrap();
        for (p, y) in pred.iter().zip(d.target()) {
            assert!((p - y).abs() < 1e-9);
        }
        assert!(matches!(f.trees[0].nodes[0], Node::Subset { left_mask: 0b0101, .. }));
    }

    #[test]
    fn empty_design() {
        let d = DesignMatrix::new(vec![]).unwrap();
        assert!(matches!(fit_random_forest(&d, &ForestParams::default(), 0), Err(Error::EmptyDesign)));
    }
}
