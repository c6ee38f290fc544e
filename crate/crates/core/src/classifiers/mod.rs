//! The six supervised model families, a common prediction interface, and
//! grid search with internal k-fold cross-validation.

pub mod ensemble;
pub mod gnb;
pub mod grid;
pub mod mlp;
pub mod tree;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ensemble::{EnsembleKind, EnsembleModel, EnsembleParams};
pub use gnb::GaussianNbModel;
pub use grid::{grid_search, GridResult, HyperGrid};
pub use mlp::{MlpModel, MlpParams};
pub use tree::{Criterion, Node, Tree};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dt,
    Rf,
    Et,
    Xgb,
    Gnb,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 6] = [Family::Dt, Family::Rf, Family::Et, Family::Xgb, Family::Gnb, Family::Mlp];

    pub const fn as_str(self) -> &'static str {
        match self {
            Family::Dt => "dt",
            Family::Rf => "rf",
            Family::Et => "et",
            Family::Xgb => "xgb",
            Family::Gnb => "gnb",
            Family::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| s.trim().eq_ignore_ascii_case(f.as_str()))
            .ok_or_else(|| Error::InvalidParameter(alloc::format!("unknown model family {s:?}")))
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperParams {
    Tree {
        max_depth: Option<usize>,
        criterion: Criterion,
    },
    Ensemble {
        n_trees: usize,
        max_depth: Option<usize>,
    },
    Gnb,
    Mlp {
        hidden: usize,
        learning_rate: f64,
    },
}

impl HyperParams {
    /// Ordering key for breaking score ties: fewer trees, then smaller
    /// depth, then fewer neurons.
    pub fn complexity(&self) -> (usize, usize, usize) {
        let depth = |d: &Option<usize>| d.unwrap_or(usize::MAX);
        match self {
            HyperParams::Tree { max_depth, .. } => (1, depth(max_depth), 0),
            HyperParams::Ensemble { n_trees, max_depth } => (*n_trees, depth(max_depth), 0),
            HyperParams::Gnb => (0, 0, 0),
            HyperParams::Mlp { hidden, .. } => (0, 0, *hidden),
        }
    }

    pub fn fits(&self, family: Family) -> bool {
        matches!(
            (family, self),
            (Family::Dt, HyperParams::Tree { .. })
                | (Family::Rf | Family::Et | Family::Xgb, HyperParams::Ensemble { .. })
                | (Family::Gnb, HyperParams::Gnb)
                | (Family::Mlp, HyperParams::Mlp { .. })
        )
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let depth = |d: &Option<usize>| d.map_or(String::from("none"), |d| alloc::format!("{d}"));
        match self {
            HyperParams::Tree { max_depth, criterion } => {
                write!(f, "max_depth={} criterion={:?}", depth(max_depth), criterion)
            }
            HyperParams::Ensemble { n_trees, max_depth } => {
                write!(f, "n_trees={} max_depth={}", n_trees, depth(max_depth))
            }
            HyperParams::Gnb => f.write_str("-"),
            HyperParams::Mlp { hidden, learning_rate } => {
                write!(f, "hidden={hidden} learning_rate={learning_rate}")
            }
        }
    }
}

/// Anything that maps a feature vector to a class index.
pub trait Classifier {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn predict_class(&self, x: &[f64]) -> Result<usize>;
}

/// A trained floating-point model of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Ensemble(EnsembleModel),
    Gnb(GaussianNbModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn family(&self) -> Family {
        match self {
            Model::Ensemble(m) => match m.kind {
                EnsembleKind::Dt => Family::Dt,
                EnsembleKind::Rf => Family::Rf,
                EnsembleKind::Et => Family::Et,
                EnsembleKind::Xgb => Family::Xgb,
            },
            Model::Gnb(_) => Family::Gnb,
            Model::Mlp(_) => Family::Mlp,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let expected = self.n_features();
        if x.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: x.len() });
        }
        Ok(match self {
            Model::Ensemble(m) => m.predict_proba(x),
            Model::Gnb(m) => m.predict_proba(x),
            Model::Mlp(m) => m.predict_proba(x),
        })
    }

    /// Argmax class (lowest index on ties) and the probability vector.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let p = self.predict_proba(x)?;
        Ok((argmax(&p), p))
    }
}

impl Classifier for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Ensemble(m) => m.n_features,
            Model::Gnb(m) => m.n_features,
            Model::Mlp(m) => m.n_inputs,
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            Model::Ensemble(m) => m.n_classes,
            Model::Gnb(m) => m.n_classes(),
            Model::Mlp(m) => m.n_outputs,
        }
    }

    fn predict_class(&self, x: &[f64]) -> Result<usize> {
        self.predict(x).map(|(c, _)| c)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Trains one model of `family` with fixed hyperparameters.
pub fn fit(family: Family, hyper: &HyperParams, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Model> {
    if x.n_rows() == 0 {
        return Err(Error::Empty("training set"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::InvalidParameter("features and labels differ in length".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidParameter(alloc::format!("label {bad} >= {n_classes} classes")));
    }
    if !hyper.fits(family) {
        return Err(Error::InvalidParameter(alloc::format!("{hyper} does not apply to {family}")));
    }
    let ensemble = |kind, n_trees, max_depth, criterion| {
        Model::Ensemble(ensemble::train_ensemble(
            x,
            y,
            n_classes,
            EnsembleParams {
                kind,
                n_trees,
                max_depth,
                criterion,
                learning_rate: ensemble::DEFAULT_LEARNING_RATE,
            },
            seed,
        ))
    };
    Ok(match (family, *hyper) {
        (Family::Dt, HyperParams::Tree { max_depth, criterion }) => ensemble(EnsembleKind::Dt, 1, max_depth, criterion),
        (Family::Rf, HyperParams::Ensemble { n_trees, max_depth }) => {
            ensemble(EnsembleKind::Rf, n_trees, max_depth, Criterion::Gini)
        }
        (Family::Et, HyperParams::Ensemble { n_trees, max_depth }) => {
            ensemble(EnsembleKind::Et, n_trees, max_depth, Criterion::Gini)
        }
        (Family::Xgb, HyperParams::Ensemble { n_trees, max_depth }) => {
            ensemble(EnsembleKind::Xgb, n_trees, max_depth, Criterion::Gini)
        }
        (Family::Gnb, HyperParams::Gnb) => Model::Gnb(gnb::train_gnb(x, y, n_classes)),
        (Family::Mlp, HyperParams::Mlp { hidden, learning_rate }) => {
            Model::Mlp(mlp::train_mlp(x, y, n_classes, MlpParams::new(hidden, learning_rate), seed).model)
        }
        _ => unreachable!("checked by HyperParams::fits"),
    })
}

/// Per-class F1 over sample labels, averaged over the classes that occur in
/// either `truth` or `pred`.
pub fn macro_f1(truth: &[usize], pred: &[usize], n_classes: usize) -> f64 {
    let mut tp = alloc::vec![0usize; n_classes];
    let mut fp = alloc::vec![0usize; n_classes];
    let mut fn_ = alloc::vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut n = 0;
    for c in 0..n_classes {
        if tp[c] + fp[c] + fn_[c] == 0 {
            continue;
        }
        sum += 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
