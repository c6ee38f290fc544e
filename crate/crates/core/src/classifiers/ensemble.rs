//! Tree ensembles: single decision tree, random forest, extra trees and
//! one-vs-rest gradient boosting.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{self, Criterion, SplitMode, Tree, TreeParams};
use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_LEARNING_RATE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Dt,
    Rf,
    Et,
    Xgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub kind: EnsembleKind,
    pub n_features: usize,
    pub n_classes: usize,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
    /// Boosting only.
    pub learning_rate: f64,
    /// Boosting only: initial log-prior score per class.
    pub base_scores: Vec<f64>,
    /// Boosting stores `n_trees` rounds of `n_classes` trees, round-major.
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    pub kind: EnsembleKind,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
    pub learning_rate: f64,
}

fn sqrt_features(n: usize) -> usize {
    (libm::sqrt(n as f64) as usize).max(1)
}

pub fn train_ensemble(x: &Matrix, y: &[usize], n_classes: usize, p: EnsembleParams, seed: u64) -> EnsembleModel {
    let n = x.n_rows();
    let n_trees = if p.kind == EnsembleKind::Dt { 1 } else { p.n_trees.max(1) };
    let mut model = EnsembleModel {
        kind: p.kind,
        n_features: x.n_cols(),
        n_classes,
        n_trees,
        max_depth: p.max_depth,
        criterion: p.criterion,
        learning_rate: if p.kind == EnsembleKind::Xgb { p.learning_rate } else { 0.0 },
        base_scores: Vec::new(),
        trees: Vec::with_capacity(n_trees),
    };
    if p.kind == EnsembleKind::Xgb {
        boost(&mut model, x, y);
        return model;
    }
    let split = match p.kind {
        EnsembleKind::Dt => SplitMode::Exhaustive,
        EnsembleKind::Rf => SplitMode::RandomSubset(sqrt_features(x.n_cols())),
        _ => SplitMode::FullyRandom(sqrt_features(x.n_cols())),
    };
    let params = TreeParams {
        max_depth: p.max_depth,
        criterion: p.criterion,
        split,
    };
    let all: Vec<usize> = (0..n).collect();
    for t in 0..n_trees {
        let mut r = rng::stream(seed, t as u64);
        let sample = if p.kind == EnsembleKind::Rf {
            (0..n).map(|_| r.random_range(0..n)).collect()
        } else {
            all.clone()
        };
        model.trees.push(tree::train_tree(x, y, n_classes, &sample, params, &mut r));
    }
    model
}

fn boost(model: &mut EnsembleModel, x: &Matrix, y: &[usize]) {
    let n = x.n_rows();
    let c = model.n_classes;
    let mut prior = vec![0.0; c];
    for &l in y {
        prior[l] += 1.0;
    }
    model.base_scores = prior
        .iter()
        .map(|&k| libm::log(((k + 1e-3) / (n as f64 + 1e-3 * c as f64)).max(1e-12)))
        .collect();
    let mut scores: Vec<f64> = (0..n).flat_map(|_| model.base_scores.iter().copied()).collect();
    let sorted = tree::presort(x);
    let mut residual = vec![0.0; n];
    let mut probs = vec![0.0; c];
    for _ in 0..model.n_trees {
        let mut round_probs = vec![0.0; n * c];
        for i in 0..n {
            softmax_into(&scores[i * c..(i + 1) * c], &mut probs);
            round_probs[i * c..(i + 1) * c].copy_from_slice(&probs);
        }
        for k in 0..c {
            for i in 0..n {
                residual[i] = f64::from(u8::from(y[i] == k)) - round_probs[i * c + k];
            }
            let t = tree::train_regression_tree(&residual, model.max_depth, &sorted);
            for i in 0..n {
                scores[i * c + k] += model.learning_rate * t.leaf_value(x.row(i))[0];
            }
            model.trees.push(t);
        }
    }
}

pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = libm::exp(v - m);
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

impl EnsembleModel {
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let c = self.n_classes;
        let mut out = vec![0.0; c];
        if self.kind == EnsembleKind::Xgb {
            let scores = self.raw_scores(x);
            softmax_into(&scores, &mut out);
            return out;
        }
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.leaf_value(x)) {
                *o += p;
            }
        }
        let n = self.trees.len() as f64;
        for o in &mut out {
            *o /= n;
        }
        out
    }

    /// Summed boosting scores (boosting only).
    pub fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        let c = self.n_classes;
        let mut scores = self.base_scores.clone();
        for (j, t) in self.trees.iter().enumerate() {
            scores[j % c] += self.learning_rate * t.leaf_value(x)[0];
        }
        scores
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::argmax;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut r = rng::from_seed(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Matrix::new(2);
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -4.0 } else { 4.0 };
            x.push_row(&[centre + noise.sample(&mut r), noise.sample(&mut r) * 2.0]);
            y.push(c);
        }
        (x, y)
    }

    fn params(kind: EnsembleKind, n_trees: usize) -> EnsembleParams {
        EnsembleParams {
            kind,
            n_trees,
            max_depth: Some(6),
            criterion: Criterion::Gini,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }

    fn accuracy(m: &EnsembleModel, x: &Matrix, y: &[usize]) -> f64 {
        let ok = (0..x.n_rows()).filter(|&i| argmax(&m.predict_proba(x.row(i))) == y[i]).count();
        ok as f64 / y.len() as f64
    }

    #[test]
    fn extra_trees_on_blobs() {
        let (x, y) = blobs(400, 1);
        let (tx, ty) = blobs(400, 2);
        let m = train_ensemble(&x, &y, 2, params(EnsembleKind::Et, 50), 9);
        assert_eq!(m.trees.len(), 50);
        assert!(accuracy(&m, &tx, &ty) >= 0.99);
    }

    #[test]
    fn all_kinds_learn_blobs_and_normalise() {
        let (x, y) = blobs(300, 3);
        for kind in [EnsembleKind::Dt, EnsembleKind::Rf, EnsembleKind::Et, EnsembleKind::Xgb] {
            let m = train_ensemble(&x, &y, 2, params(kind, 10), 4);
            assert!(accuracy(&m, &x, &y) >= 0.98, "{kind:?}");
            for i in 0..x.n_rows() {
                let p = m.predict_proba(x.row(i));
                assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
            for t in &m.trees {
                assert!(t.depth() <= 6);
            }
        }
    }

    #[test]
    fn xgb_tree_groups() {
        let (x, y) = blobs(100, 5);
        let m = train_ensemble(&x, &y, 2, params(EnsembleKind::Xgb, 7), 0);
        assert_eq!(m.trees.len(), 14);
    }

    #[test]
    fn seed_determinism() {
        let (x, y) = blobs(200, 6);
        for kind in [EnsembleKind::Rf, EnsembleKind::Et] {
            let a = train_ensemble(&x, &y, 2, params(kind, 5), 77);
            let b = train_ensemble(&x, &y, 2, params(kind, 5), 77);
            assert_eq!(a, b);
            let c = train_ensemble(&x, &y, 2, params(kind, 5), 78);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn duplicating_trees_keeps_argmax() {
        let (x, y) = blobs(200, 7);
        let m = train_ensemble(&x, &y, 2, params(EnsembleKind::Et, 10), 1);
        let mut d = m.clone();
        d.trees.extend(m.trees.iter().cloned());
        d.n_trees *= 2;
        for i in 0..x.n_rows() {
            assert_eq!(argmax(&m.predict_proba(x.row(i))), argmax(&d.predict_proba(x.row(i))));
        }
    }

    #[test]
    fn ensemble_probability_is_member_mean() {
        let (x, y) = blobs(200, 8);
        let m = train_ensemble(&x, &y, 2, params(EnsembleKind::Rf, 4), 2);
        let q = [0.3, -0.2];
        let manual: Vec<f64> = (0..2)
            .map(|c| m.trees.iter().map(|t| t.leaf_value(&q)[c]).sum::<f64>() / 4.0)
            .collect();
        assert_eq!(m.predict_proba(&q), manual);
    }
}
