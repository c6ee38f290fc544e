//! Exhaustive hyperparameter search scored by k-fold macro-F1.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{fit, macro_f1, Classifier, Criterion, Family, HyperParams, Model};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_FOLDS: usize = 5;

pub struct HyperGrid;

impl HyperGrid {
    /// The search space per family.
    pub fn for_family(family: Family) -> Vec<HyperParams> {
        match family {
            Family::Dt => {
                let depths = [Some(10), Some(20), Some(30), Some(40), Some(50), None];
                let mut out = Vec::new();
                for max_depth in depths {
                    for criterion in [Criterion::Gini, Criterion::Entropy] {
                        out.push(HyperParams::Tree { max_depth, criterion });
                    }
                }
                out
            }
            Family::Rf | Family::Et | Family::Xgb => {
                let mut out = Vec::new();
                for n_trees in [10, 25, 50] {
                    for d in [4, 6, 8, 10] {
                        out.push(HyperParams::Ensemble {
                            n_trees,
                            max_depth: Some(d),
                        });
                    }
                }
                out
            }
            Family::Gnb => vec![HyperParams::Gnb],
            Family::Mlp => {
                let mut out = Vec::new();
                for hidden in 4..=15 {
                    for learning_rate in [0.1, 0.01, 0.001] {
                        out.push(HyperParams::Mlp { hidden, learning_rate });
                    }
                }
                out
            }
        }
    }
}

/// Shuffled k-fold partition of `0..n`; returns the held-out indices of
/// each fold, sorted.
pub fn kfold(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::from_seed(seed));
    let k = k.clamp(1, n.max(1));
    let mut folds = vec![Vec::new(); k];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for (f, fold) in folds.iter_mut().enumerate() {
        let size = base + usize::from(f < extra);
        fold.extend_from_slice(&idx[pos..pos + size]);
        fold.sort_unstable();
        pos += size;
    }
    folds
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: HyperParams,
    pub best_score: f64,
    /// Fold-averaged macro-F1 for every grid point, in grid order.
    pub scores: Vec<(HyperParams, f64)>,
    /// Refit on the full training set with `best`.
    pub model: Model,
}

/// Scores every grid point by mean macro-F1 over `folds`-fold CV, keeps the
/// best (ties go to the simplest point, then grid order) and refits it on
/// all of `x`.
pub fn grid_search(
    family: Family,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    grid: &[HyperParams],
    folds: usize,
    seed: u64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Empty("hyperparameter grid"));
    }
    let parts = kfold(x.n_rows(), folds, rng::derive_seed(seed, 0xF01D));
    let mut scores = Vec::with_capacity(grid.len());
    for (g, hp) in grid.iter().enumerate() {
        let mut total = 0.0;
        for (f, test) in parts.iter().enumerate() {
            let mut in_test = vec![false; x.n_rows()];
            for &i in test {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..x.n_rows()).filter(|&i| !in_test[i]).collect();
            let tx = x.select(&train);
            let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let unit = rng::derive_seed(seed, ((g as u64) << 8) | f as u64);
            let model = fit(family, hp, &tx, &ty, n_classes, unit)?;
            let pred = test
                .iter()
                .map(|&i| model.predict_class(x.row(i)))
                .collect::<Result<Vec<_>>>()?;
            let truth: Vec<usize> = test.iter().map(|&i| y[i]).collect();
            total += macro_f1(&truth, &pred, n_classes);
        }
        scores.push((*hp, total / parts.len() as f64));
    }
    let mut best = 0;
    for i in 1..scores.len() {
        let (s, b) = (scores[i].1, scores[best].1);
        let better = s > b + 1e-12 || ((s - b).abs() <= 1e-12 && scores[i].0.complexity() < scores[best].0.complexity());
        if better {
            best = i;
        }
    }
    let (best_hp, best_score) = scores[best];
    let model = fit(family, &best_hp, x, y, n_classes, seed)?;
    Ok(GridResult {
        best: best_hp,
        best_score,
        scores,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_have_expected_sizes() {
        assert_eq!(HyperGrid::for_family(Family::Dt).len(), 12);
        assert_eq!(HyperGrid::for_family(Family::Et).len(), 12);
        assert_eq!(HyperGrid::for_family(Family::Mlp).len(), 36);
        assert_eq!(HyperGrid::for_family(Family::Gnb).len(), 1);
    }

    #[test]
    fn kfold_is_disjoint_cover() {
        for n in [0usize, 1, 7, 23, 100] {
            let folds = kfold(n, 5, 3);
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            if n >= 5 {
                assert_eq!(folds.len(), 5);
                assert!(folds.iter().all(|f| f.len() >= n / 5 && f.len() <= n / 5 + 1));
            }
        }
    }

    fn separable() -> (Matrix, Vec<usize>) {
        let rows: Vec<[f64; 2]> = (0..60).map(|i| [i as f64, (i % 5) as f64]).collect();
        let y = (0..60).map(|i| usize::from(i >= 30)).collect();
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn single_point_grid_selected() {
        let (x, y) = separable();
        let hp = HyperParams::Ensemble { n_trees: 3, max_depth: Some(2) };
        let r = grid_search(Family::Et, &x, &y, 2, &[hp], 5, 0).unwrap();
        assert_eq!(r.best, hp);
    }

    #[test]
    fn degenerate_option_loses() {
        let (x, y) = separable();
        let grid = [
            HyperParams::Tree { max_depth: Some(0), criterion: Criterion::Gini },
            HyperParams::Tree { max_depth: Some(3), criterion: Criterion::Gini },
        ];
        let r = grid_search(Family::Dt, &x, &y, 2, &grid, 5, 0).unwrap();
        assert_eq!(r.best, grid[1]);
        assert!(r.best_score > 0.95);
    }

    #[test]
    fn ties_prefer_fewer_trees() {
        let (x, y) = separable();
        let grid = [
            HyperParams::Ensemble { n_trees: 25, max_depth: Some(4) },
            HyperParams::Ensemble { n_trees: 10, max_depth: Some(4) },
        ];
        let r = grid_search(Family::Xgb, &x, &y, 2, &grid, 5, 0).unwrap();
        assert_eq!(r.scores[0].1, r.scores[1].1);
        assert_eq!(r.best, grid[1]);
    }

    #[test]
    fn empty_grid_rejected() {
        let (x, y) = separable();
        assert!(grid_search(Family::Dt, &x, &y, 2, &[], 5, 0).is_err());
    }
}
