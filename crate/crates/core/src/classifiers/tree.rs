//! CART-style trees stored as flat node arenas.
//!
//! Classification trees keep a class-probability vector in each leaf;
//! regression trees (used by gradient boosting) keep a single value.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

impl Criterion {
    fn impurity(self, counts: &[f64], total: f64) -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Gini => 1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>(),
            Criterion::Entropy => -counts
                .iter()
                .filter(|&&c| c > 0.0)
                .map(|c| {
                    let p = c / total;
                    p * libm::log2(p)
                })
                .sum::<f64>(),
        }
    }
}

/// How candidate splits are searched at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Every feature, every midpoint between consecutive distinct values.
    Exhaustive,
    /// Best midpoint over `m` random features (random forest).
    RandomSubset(usize),
    /// One uniform random threshold on each of `m` random features (extra trees).
    FullyRandom(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
    pub split: SplitMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf { value: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: Vec<f64>) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    }
                }
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left as usize).max(go(t, *right as usize)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1.0;
        }
        c
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut Rng) -> u32 {
        let counts = self.counts(idx);
        let total = idx.len() as f64;
        let id = self.nodes.len() as u32;
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        let split = if pure || depth_reached || idx.len() < 2 {
            None
        } else {
            self.best_split(idx, &counts, rng)
        };
        let Some(split) = split else {
            self.nodes.push(Node::Leaf {
                value: counts.iter().map(|c| c / total).collect(),
            });
            return id;
        };
        self.nodes.push(Node::Leaf { value: Vec::new() });
        let mid = partition(idx, |i| self.x.get(i, split.feature) <= split.threshold);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id as usize] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, idx: &[usize], parent: &[f64], rng: &mut Rng) -> Option<Candidate> {
        let n_features = self.x.n_cols();
        let (random, m) = match self.params.split {
            SplitMode::Exhaustive => (false, n_features),
            SplitMode::RandomSubset(m) | SplitMode::FullyRandom(m) => (true, m.clamp(1, n_features)),
        };
        if random {
            self.features.shuffle(rng);
        }
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        // keep drawing features past `m` until at least one valid split exists
        for fi in 0..n_features {
            if visited >= m && best.is_some() {
                break;
            }
            let f = self.features[fi];
            let cand = match self.params.split {
                SplitMode::FullyRandom(_) => self.random_threshold(idx, f, rng),
                _ => self.scan_feature(idx, f, parent),
            };
            let Some(cand) = cand else { continue };
            visited += 1;
            if best.as_ref().is_none_or(|b| cand.score < b.score) {
                best = Some(cand);
            }
        }
        best
    }

    /// Best midpoint on feature `f` by weighted child impurity.
    fn scan_feature(&self, idx: &[usize], f: usize, parent: &[f64]) -> Option<Candidate> {
        let mut order: Vec<(f64, usize)> = idx.iter().map(|&i| (self.x.get(i, f), self.y[i])).collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if order[0].0 == order[order.len() - 1].0 {
            return None;
        }
        let total = order.len() as f64;
        let mut left = vec![0.0; self.n_classes];
        let mut right = parent.to_vec();
        let mut best: Option<Candidate> = None;
        for k in 0..order.len() - 1 {
            left[order[k].1] += 1.0;
            right[order[k].1] -= 1.0;
            let (a, b) = (order[k].0, order[k + 1].0);
            if a == b {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = total - nl;
            let score = (nl * self.params.criterion.impurity(&left, nl)
                + nr * self.params.criterion.impurity(&right, nr))
                / total;
            if best.as_ref().is_none_or(|c| score < c.score) {
                best = Some(Candidate {
                    feature: f,
                    threshold: midpoint(a, b),
                    score,
                });
            }
        }
        best
    }

    fn random_threshold(&self, idx: &[usize], f: usize, rng: &mut Rng) -> Option<Candidate> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in idx {
            let v = self.x.get(i, f);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo < hi) {
            return None;
        }
        let u: f64 = rng.random();
        let mut t = lo + u * (hi - lo);
        if t >= hi {
            t = lo;
        }
        let mut left = vec![0.0; self.n_classes];
        let mut right = vec![0.0; self.n_classes];
        for &i in idx {
            if self.x.get(i, f) <= t {
                left[self.y[i]] += 1.0;
            } else {
                right[self.y[i]] += 1.0;
            }
        }
        let nl: f64 = left.iter().sum();
        let nr: f64 = right.iter().sum();
        let score = (nl * self.params.criterion.impurity(&left, nl)
            + nr * self.params.criterion.impurity(&right, nr))
            / (nl + nr);
        Some(Candidate {
            feature: f,
            threshold: t,
            score,
        })
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Stable-enough in-place partition; returns the number of `true` items.
fn partition<F: Fn(usize) -> bool>(idx: &mut [usize], pred: F) -> usize {
    let mut mid = 0;
    for k in 0..idx.len() {
        if pred(idx[k]) {
            idx.swap(mid, k);
            mid += 1;
        }
    }
    mid
}

/// Greedy impurity-decrease tree over the rows listed in `sample`
/// (repeats allowed, acting as weights). Splits stop at `max_depth`, at pure
/// nodes, or below two samples. Zero-gain splits are accepted so that
/// patterns like XOR can be learned at depth 2.
pub fn train_tree(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    sample: &[usize],
    params: TreeParams,
    rng: &mut Rng,
) -> Tree {
    let mut b = Builder {
        x,
        y,
        n_classes,
        params,
        nodes: Vec::new(),
        features: (0..x.n_cols()).collect(),
    };
    let mut idx = sample.to_vec();
    if idx.is_empty() {
        return Tree::leaf(vec![1.0 / n_classes as f64; n_classes]);
    }
    b.build(&mut idx, 0, rng);
    Tree { nodes: b.nodes }
}

/// Least-squares regression tree on all rows, exhaustive splits over
/// pre-sorted columns. Leaves hold the mean target.
pub fn train_regression_tree(target: &[f64], max_depth: Option<usize>, sorted: &[Vec<(f64, u32)>]) -> Tree {
    let mut nodes = Vec::new();
    let mut left = vec![false; target.len()];
    let columns: Vec<Vec<Entry>> = sorted
        .iter()
        .map(|col| col.iter().map(|&(v, i)| Entry { v, t: target[i as usize], i }).collect())
        .collect();
    build_regression(max_depth, 0, columns, &mut left, &mut nodes);
    Tree { nodes }
}

/// Every column as `(value, row)` pairs in ascending value order, computed
/// once per boosting run.
pub fn presort(x: &Matrix) -> Vec<Vec<(f64, u32)>> {
    (0..x.n_cols())
        .map(|f| {
            let mut o: Vec<(f64, u32)> = (0..x.n_rows() as u32).map(|i| (x.get(i as usize, f), i)).collect();
            o.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            o
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Entry {
    v: f64,
    t: f64,
    i: u32,
}

fn build_regression(
    max_depth: Option<usize>,
    depth: usize,
    columns: Vec<Vec<Entry>>,
    left: &mut [bool],
    nodes: &mut Vec<Node>,
) -> u32 {
    let id = nodes.len() as u32;
    let rows = &columns[0];
    let n = rows.len() as f64;
    let sum: f64 = rows.iter().map(|e| e.t).sum();
    let mean = if rows.is_empty() { 0.0 } else { sum / n };
    let stop = max_depth.is_some_and(|d| depth >= d) || rows.len() < 2;
    let mut best: Option<(f64, usize, f64)> = None; // (sse, feature, threshold)
    if !stop {
        let sum_sq: f64 = rows.iter().map(|e| e.t * e.t).sum();
        let parent_sse = sum_sq - sum * sum / n;
        if parent_sse > 1e-12 {
            for (f, col) in columns.iter().enumerate() {
                let mut ls = 0.0;
                let mut lsq = 0.0;
                for k in 0..col.len() - 1 {
                    let e = col[k];
                    ls += e.t;
                    lsq += e.t * e.t;
                    let (a, b) = (e.v, col[k + 1].v);
                    if a == b {
                        continue;
                    }
                    let nl = (k + 1) as f64;
                    let nr = n - nl;
                    let rs = sum - ls;
                    let rsq = sum_sq - lsq;
                    let sse = (lsq - ls * ls / nl) + (rsq - rs * rs / nr);
                    if best.is_none_or(|b| sse < b.0) {
                        best = Some((sse, f, midpoint(a, b)));
                    }
                }
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        nodes.push(Node::Leaf { value: vec![mean] });
        return id;
    };
    nodes.push(Node::Leaf { value: Vec::new() });
    for e in &columns[feature] {
        left[e.i as usize] = e.v <= threshold;
    }
    let mut lcols = Vec::with_capacity(columns.len());
    let mut rcols = Vec::with_capacity(columns.len());
    for col in columns {
        let (l, r): (Vec<Entry>, Vec<Entry>) = col.into_iter().partition(|e| left[e.i as usize]);
        lcols.push(l);
        rcols.push(r);
    }
    let l = build_regression(max_depth, depth + 1, lcols, left, nodes);
    let r = build_regression(max_depth, depth + 1, rcols, left, nodes);
    nodes[id as usize] = Node::Split {
        feature,
        threshold,
        left: l,
        right: r,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn exhaustive(depth: Option<usize>) -> TreeParams {
        TreeParams {
            max_depth: depth,
            criterion: Criterion::Gini,
            split: SplitMode::Exhaustive,
        }
    }

    fn argmax(v: &[f64]) -> usize {
        crate::classifiers::argmax(v)
    }

    #[test]
    fn one_dimensional_separable() {
        let xs: Vec<[f64; 1]> = (-10..10).map(|i| [i as f64 + 0.5]).collect();
        let y: Vec<usize> = xs.iter().map(|r| usize::from(r[0] >= 0.0)).collect();
        let x = Matrix::from_rows(&xs);
        let all: Vec<usize> = (0..y.len()).collect();
        let t = train_tree(&x, &y, 2, &all, exhaustive(None), &mut rng::from_seed(0));
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert!(threshold.abs() < 0.6),
            _ => panic!("expected split"),
        }
        assert_eq!(t.depth(), 1);
        for (r, &c) in xs.iter().zip(&y) {
            assert_eq!(argmax(t.leaf_value(r)), c);
        }
    }

    #[test]
    fn identical_labels_single_leaf() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]);
        let t = train_tree(&x, &[1, 1, 1], 2, &[0, 1, 2], exhaustive(None), &mut rng::from_seed(0));
        assert_eq!(t.nodes, vec![Node::Leaf { value: vec![0.0, 1.0] }]);
    }

    #[test]
    fn xor_depth_two() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
        let y = [0, 0, 1, 1];
        let t = train_tree(&x, &y, 2, &[0, 1, 2, 3], exhaustive(Some(2)), &mut rng::from_seed(0));
        for i in 0..4 {
            assert_eq!(argmax(t.leaf_value(x.row(i))), y[i]);
        }
        assert!(t.depth() <= 2);
    }

    #[test]
    fn depth_limit_respected() {
        let xs: Vec<[f64; 2]> = (0..200).map(|i| [(i * 37 % 101) as f64, (i * 53 % 97) as f64]).collect();
        let y: Vec<usize> = (0..200).map(|i| (i * 7) % 3).collect();
        let x = Matrix::from_rows(&xs);
        let all: Vec<usize> = (0..200).collect();
        for mode in [SplitMode::Exhaustive, SplitMode::RandomSubset(1), SplitMode::FullyRandom(1)] {
            let p = TreeParams {
                max_depth: Some(4),
                criterion: Criterion::Entropy,
                split: mode,
            };
            let t = train_tree(&x, &y, 3, &all, p, &mut rng::from_seed(3));
            assert!(t.depth() <= 4);
            for n in &t.nodes {
                if let Node::Leaf { value } = n {
                    assert!((value.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn regression_tree_fits_step() {
        let xs: Vec<[f64; 1]> = (0..20).map(|i| [i as f64]).collect();
        let target: Vec<f64> = (0..20).map(|i| if i < 8 { -1.0 } else { 2.0 }).collect();
        let x = Matrix::from_rows(&xs);
        let t = train_regression_tree(&target, Some(3), &presort(&x));
        assert_eq!(t.leaf_value(&[3.0]), [-1.0]);
        assert_eq!(t.leaf_value(&[15.0]), [2.0]);
        assert_eq!(t.depth(), 1);
    }
}
