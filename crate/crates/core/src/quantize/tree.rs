use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AffineQuantizer, QuantizationReport};
use crate::classifiers::tree::Node;
use crate::classifiers::{EnsembleKind, EnsembleModel, Family};
use crate::error::{Error, Result};

/// Fixed-point scale of leaf values: one unit is `1 / LEAF_ONE`.
const LEAF_ONE: f64 = 32767.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QNode {
    /// `q[feature] <= threshold` goes left.
    Split {
        feature: u16,
        threshold: i8,
        left: u32,
        right: u32,
    },
    Leaf { value: Vec<i32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTree {
    pub nodes: Vec<QNode>,
}

impl QTree {
    pub fn leaf_value(&self, q: &[i8]) -> &[i32] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                QNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if q[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    }
                }
                QNode::Leaf { value } => return value,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedEnsemble {
    pub kind: EnsembleKind,
    pub n_classes: usize,
    pub inputs: Vec<AffineQuantizer>,
    pub trees: Vec<QTree>,
    /// Real value of one leaf unit.
    pub leaf_scale: f64,
    /// Boosting base scores in leaf units; empty for averaging ensembles.
    pub base: Vec<i32>,
    pub report: QuantizationReport,
}

impl QuantizedEnsemble {
    pub fn family(&self) -> Family {
        match self.kind {
            EnsembleKind::Dt => Family::Dt,
            EnsembleKind::Rf => Family::Rf,
            EnsembleKind::Et => Family::Et,
            EnsembleKind::Xgb => Family::Xgb,
        }
    }

    /// Summed integer leaf values per class.
    pub fn scores_q(&self, q: &[i8]) -> Vec<i64> {
        let c = self.n_classes;
        let mut out: Vec<i64> = if self.kind == EnsembleKind::Xgb {
            self.base.iter().map(|&b| i64::from(b)).collect()
        } else {
            alloc::vec![0; c]
        };
        for (j, t) in self.trees.iter().enumerate() {
            let v = t.leaf_value(q);
            if self.kind == EnsembleKind::Xgb {
                out[j % c] += i64::from(v[0]);
            } else {
                for (o, &p) in out.iter_mut().zip(v) {
                    *o += i64::from(p);
                }
            }
        }
        out
    }
}

/// Index of the threshold in quantized units: the largest code whose
/// rounding interval lies entirely at or below `t`.
fn quantize_threshold(t: f64, q: &AffineQuantizer, report: &mut QuantizationReport) -> i8 {
    let v = libm::floor(t / q.scale) + f64::from(q.zero_point);
    if !(-128.0..=127.0).contains(&v) {
        report.clamped_thresholds += 1;
    }
    v.clamp(-128.0, 127.0) as i8
}

/// Re-expresses every threshold in the input quantizers' units and every
/// leaf value as a fixed-point integer.
pub fn quantize_tree_model(model: &EnsembleModel, inputs: &[AffineQuantizer]) -> Result<QuantizedEnsemble> {
    if inputs.len() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            got: inputs.len(),
        });
    }
    if model.n_features > usize::from(u16::MAX) {
        return Err(Error::Unsupported("more than 65535 features"));
    }
    let boosted = model.kind == EnsembleKind::Xgb;
    let leaf_scale = if boosted {
        // the largest possible |score| maps to about 2^30
        let mut worst = model.base_scores.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut per_class = alloc::vec![0.0f64; model.n_classes];
        for (j, t) in model.trees.iter().enumerate() {
            let m = t
                .nodes
                .iter()
                .filter_map(|n| match n {
                    Node::Leaf { value } => Some(libm::fabs(value[0] * model.learning_rate)),
                    _ => None,
                })
                .fold(0.0, f64::max);
            per_class[j % model.n_classes] += m;
        }
        worst += per_class.iter().fold(0.0f64, |a, &b| a.max(b));
        if worst > 0.0 {
            worst / f64::from(1u32 << 30)
        } else {
            1.0
        }
    } else {
        1.0 / LEAF_ONE
    };
    let mut report = QuantizationReport::default();
    let trees = model
        .trees
        .iter()
        .map(|t| QTree {
            nodes: t
                .nodes
                .iter()
                .map(|n| match n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => QNode::Split {
                        feature: *feature as u16,
                        threshold: quantize_threshold(*threshold, &inputs[*feature], &mut report),
                        left: *left,
                        right: *right,
                    },
                    Node::Leaf { value } => QNode::Leaf {
                        value: value
                            .iter()
                            .map(|&v| {
                                let v = if boosted { v * model.learning_rate } else { v };
                                libm::round(v / leaf_scale) as i32
                            })
                            .collect(),
                    },
                })
                .collect(),
        })
        .collect();
    let base = if boosted {
        model.base_scores.iter().map(|&b| libm::round(b / leaf_scale) as i32).collect()
    } else {
        Vec::new()
    };
    Ok(QuantizedEnsemble {
        kind: model.kind,
        n_classes: model.n_classes,
        inputs: inputs.to_vec(),
        trees,
        leaf_scale,
        base,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::tree::Tree;
    use crate::classifiers::{fit, Classifier, Criterion, HyperParams, Model};
    use crate::matrix::Matrix;
    use crate::quantize::{calibrate, QuantizedModel};
    use crate::rng;
    use alloc::vec;
    use rand::Rng as _;

    fn data(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut r = rng::from_seed(seed);
        let mut x = Matrix::new(3);
        let mut y = Vec::new();
        for _ in 0..n {
            let row = [r.random_range(0.0..100.0), r.random_range(-50.0..50.0), r.random_range(0.0..1.0)];
            y.push(usize::from(row[0] + row[1] > 60.0) + usize::from(row[2] > 0.7));
            x.push_row(&row);
        }
        (x, y)
    }

    #[test]
    fn constant_leaf_tree_always_agrees() {
        let m = EnsembleModel {
            kind: EnsembleKind::Dt,
            n_features: 1,
            n_classes: 2,
            n_trees: 1,
            max_depth: Some(0),
            criterion: Criterion::Gini,
            learning_rate: 0.0,
            base_scores: vec![],
            trees: vec![Tree::leaf(vec![0.3, 0.7])],
        };
        let x = Matrix::from_rows(&[[1.0], [5.0], [-3.0]]);
        let q = QuantizedModel::Ensemble(quantize_tree_model(&m, &calibrate(&x).unwrap()).unwrap());
        for v in [-1e6, 0.0, 3.0, 1e6] {
            assert_eq!(q.predict_class(&[v]).unwrap(), 1);
        }
    }

    /// Follows the float path; true when every feature on it is at least
    /// one step from the threshold.
    fn far_from_thresholds(t: &Tree, x: &[f64], q: &[AffineQuantizer]) -> bool {
        let mut i = 0;
        loop {
            match &t.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    if (x[*feature] - threshold).abs() < q[*feature].scale {
                        return false;
                    }
                    i = if x[*feature] <= *threshold { *left } else { *right } as usize;
                }
                Node::Leaf { .. } => return true,
            }
        }
    }

    #[test]
    fn order_preserved_away_from_thresholds() {
        let (x, y) = data(400, 1);
        let hp = HyperParams::Tree { max_depth: Some(8), criterion: Criterion::Gini };
        let Model::Ensemble(m) = fit(crate::classifiers::Family::Dt, &hp, &x, &y, 3, 0).unwrap() else { panic!() };
        let inputs = calibrate(&x).unwrap();
        let q = QuantizedModel::Ensemble(quantize_tree_model(&m, &inputs).unwrap());
        let (tx, _) = data(2000, 2);
        let mut checked = 0;
        for row in tx.rows() {
            if far_from_thresholds(&m.trees[0], row, &inputs) {
                checked += 1;
                assert_eq!(q.predict_class(row).unwrap(), Model::Ensemble(m.clone()).predict_class(row).unwrap());
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn ensembles_agree_closely() {
        let (x, y) = data(600, 3);
        let (tx, _) = data(2000, 4);
        for family in [crate::classifiers::Family::Et, crate::classifiers::Family::Rf, crate::classifiers::Family::Xgb] {
            let hp = HyperParams::Ensemble { n_trees: 20, max_depth: Some(8) };
            let m = fit(family, &hp, &x, &y, 3, 5).unwrap();
            let q = crate::quantize::quantize_model(&m, &x).unwrap();
            let r = crate::quantize::agreement_report(&m, &q, &tx).unwrap();
            assert!(r.rate >= 0.97, "{family}: {}", r.rate);
            assert_eq!(q.report().clamped_thresholds, 0);
        }
    }

    #[test]
    fn out_of_range_threshold_flagged() {
        let m = EnsembleModel {
            kind: EnsembleKind::Dt,
            n_features: 1,
            n_classes: 2,
            n_trees: 1,
            max_depth: Some(1),
            criterion: Criterion::Gini,
            learning_rate: 0.0,
            base_scores: vec![],
            trees: vec![Tree {
                nodes: vec![
                    Node::Split { feature: 0, threshold: 1e6, left: 1, right: 2 },
                    Node::Leaf { value: vec![1.0, 0.0] },
                    Node::Leaf { value: vec![0.0, 1.0] },
                ],
            }],
        };
        let q = quantize_tree_model(&m, &[AffineQuantizer::from_range(0.0, 10.0)]).unwrap();
        assert_eq!(q.report.clamped_thresholds, 1);
    }
}
