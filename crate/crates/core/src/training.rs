//! Training-set assembly and model fitting for both classifier roles.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::balance::{self, DEFAULT_K_NEIGHBORS};
use crate::classifiers::{fit, grid_search, Classifier, Family, HyperGrid, HyperParams, Model};
use crate::datamodel::{CycleEvent, OperationMode, SensorRecord};
use crate::error::{Error, Result};
use crate::evaluate::{match_pairs, Tolerance};
use crate::features::extract_segmented;
use crate::matrix::Matrix;
use crate::pipeline::{encode_transitions, threshold_cycle_patterns, PipelineConfig};
use crate::rng;

/// Fixed hyperparameters or a grid search over the family's default grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Fixed { hyper: HyperParams },
    Grid { folds: usize },
}

impl ModelSpec {
    /// Defaults used when no search is requested, all taken from the grid.
    pub fn default_fixed(family: Family) -> Self {
        let hyper = match family {
            Family::Dt => HyperParams::Tree {
                max_depth: Some(10),
                criterion: crate::classifiers::Criterion::Gini,
            },
            Family::Rf | Family::Et => HyperParams::Ensemble {
                n_trees: 50,
                max_depth: Some(10),
            },
            Family::Xgb => HyperParams::Ensemble {
                n_trees: 50,
                max_depth: Some(6),
            },
            Family::Gnb => HyperParams::Gnb,
            Family::Mlp => HyperParams::Mlp {
                hidden: 12,
                learning_rate: 0.1,
            },
        };
        ModelSpec::Fixed { hyper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: Family,
    pub hyper: HyperParams,
    pub model: Model,
    /// Cross-validated score per grid point; empty for fixed settings.
    pub grid_scores: Vec<(HyperParams, f64)>,
}

pub fn fit_spec(
    family: Family,
    spec: &ModelSpec,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<TrainedModel> {
    match spec {
        ModelSpec::Fixed { hyper } => Ok(TrainedModel {
            family,
            hyper: *hyper,
            model: fit(family, hyper, x, y, n_classes, seed)?,
            grid_scores: Vec::new(),
        }),
        ModelSpec::Grid { folds } => {
            let r = grid_search(family, x, y, n_classes, &HyperGrid::for_family(family), *folds, seed)?;
            Ok(TrainedModel {
                family,
                hyper: r.best,
                model: r.model,
                grid_scores: r.scores,
            })
        }
    }
}

/// Features and ground-truth mode labels of every record.
pub fn mode_training_set(records: &[SensorRecord]) -> Result<(Matrix, Vec<usize>)> {
    let y = records
        .iter()
        .enumerate()
        .map(|(i, r)| match r.mode {
            Some(m) if m != OperationMode::Pad => Ok(m.ordinal() as usize),
            Some(_) => Err(Error::InvalidParameter(alloc::format!("record {i} is labelled Pad"))),
            None => Err(Error::InvalidParameter(alloc::format!("record {i} has no mode label"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((extract_segmented(records), y))
}

/// Balances the labelled minutes and fits the mode classifier.
pub fn train_mode_model(records: &[SensorRecord], family: Family, spec: &ModelSpec, seed: u64) -> Result<TrainedModel> {
    let (x, y) = mode_training_set(records)?;
    let (bx, by) = balance::balance_mode_training_set(&x, &y, rng::derive_seed(seed, 1))?;
    fit_spec(family, spec, &bx, &by, OperationMode::REAL.len(), rng::derive_seed(seed, 2))
}

/// Encoded transition vectors of the threshold-detected cycles in
/// `records`, using the modes predicted by `mode_model`. Each cycle takes
/// the class of the reference cycle it matches; unmatched cycles and
/// cycles too long for the encoder are skipped.
pub fn duty_training_set(
    config: &PipelineConfig,
    mode_model: &dyn Classifier,
    records: &[SensorRecord],
    reference: &[CycleEvent],
    tol: Tolerance,
) -> Result<(Vec<Vec<u8>>, Vec<usize>)> {
    let cycles = threshold_cycle_patterns(config, mode_model, records)?;
    let detected: Vec<CycleEvent> = cycles
        .iter()
        .map(|(on, off, _)| CycleEvent::new(*on, *off, crate::datamodel::CycleClass::Normal))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, p) in match_pairs(reference, &detected, tol)? {
        if let Ok(code) = encode_transitions(&cycles[p].2, config.encoder_slots) {
            xs.push(code);
            ys.push(reference[r].class.index());
        }
    }
    Ok((xs, ys))
}

/// SMOTEN-equalizes the encoded cycles and fits the duty-cycle classifier.
pub fn train_duty_model(
    codes: &[Vec<u8>],
    y: &[usize],
    family: Family,
    spec: &ModelSpec,
    seed: u64,
) -> Result<TrainedModel> {
    if codes.is_empty() {
        return Err(Error::Empty("duty-cycle training set"));
    }
    let (bx, by) = balance::equalize_categorical(codes, y, 2, DEFAULT_K_NEIGHBORS, rng::derive_seed(seed, 1))?;
    let rows: Vec<Vec<f64>> = bx.iter().map(|c| c.iter().map(|&v| f64::from(v)).collect()).collect();
    fit_spec(family, spec, &Matrix::from_rows(&rows), &by, 2, rng::derive_seed(seed, 2))
}
