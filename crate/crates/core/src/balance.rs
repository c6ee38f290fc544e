//! Class balancing for training sets: SMOTE for continuous features, SMOTEN
//! for categorical transition encodings, and random undersampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datamodel::OperationMode;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_K_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassAction {
    /// Add `fraction * count` synthetic samples.
    Oversample(f64),
    /// Keep `ceil(fraction * count)` samples, `fraction` in (0, 1].
    Undersample(f64),
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRecipe {
    /// Action per class index; classes not listed are kept.
    pub actions: Vec<(usize, ClassAction)>,
    pub k_neighbors: usize,
}

impl BalanceRecipe {
    /// Off and Operational doubled, 80 % of Idle dropped, Active untouched.
    pub fn mode_default() -> Self {
        Self {
            actions: vec![
                (OperationMode::Off.ordinal() as usize, ClassAction::Oversample(1.0)),
                (OperationMode::Idle.ordinal() as usize, ClassAction::Undersample(0.2)),
                (OperationMode::Operational.ordinal() as usize, ClassAction::Oversample(1.0)),
                (OperationMode::Active.ordinal() as usize, ClassAction::Keep),
            ],
            k_neighbors: DEFAULT_K_NEIGHBORS,
        }
    }
}

impl Default for BalanceRecipe {
    fn default() -> Self {
        Self::mode_default()
    }
}

fn class_indices(y: &[usize], class: usize) -> Vec<usize> {
    y.iter()
        .enumerate()
        .filter_map(|(i, &c)| (c == class).then_some(i))
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `members`) of the `k` nearest members to `members[me]`,
/// excluding itself; ties broken by position.
fn nearest<D: Fn(usize, usize) -> f64>(members: usize, me: usize, k: usize, dist: D) -> Vec<usize> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for other in 0..members {
        if other == me {
            continue;
        }
        let d = dist(me, other);
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, other));
        best.truncate(k);
    }
    best.into_iter().map(|(_, i)| i).collect()
}

/// Interpolates `floor(fraction * n)` new samples of `target` between random
/// class members and one of their `k` nearest same-class neighbours.
pub fn smote_oversample(
    x: &Matrix,
    y: &[usize],
    target: usize,
    fraction: f64,
    k: usize,
    seed: u64,
) -> Result<Matrix> {
    if !(fraction >= 0.0) {
        return Err(Error::InvalidParameter(format!("oversample fraction {fraction}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k_neighbors must be >= 1".into()));
    }
    let members = class_indices(y, target);
    let n_new = libm::floor(fraction * members.len() as f64) as usize;
    let mut out = Matrix::with_capacity(x.n_cols(), n_new);
    if n_new == 0 {
        return Ok(out);
    }
    if members.len() < k + 1 {
        return Err(Error::TooFewSamples {
            class: target,
            available: members.len(),
            required: k + 1,
        });
    }
    let mut rng = rng::from_seed(seed);
    let mut cache: Vec<Option<Vec<usize>>> = vec![None; members.len()];
    let mut row = vec![0.0; x.n_cols()];
    for _ in 0..n_new {
        let b = rng.random_range(0..members.len());
        let nn = cache[b].get_or_insert_with(|| {
            nearest(members.len(), b, k, |i, j| sq_dist(x.row(members[i]), x.row(members[j])))
        });
        let pick = nn[rng.random_range(0..nn.len())];
        let u: f64 = rng.random();
        let (base, other) = (x.row(members[b]), x.row(members[pick]));
        for j in 0..row.len() {
            row[j] = base[j] + u * (other[j] - base[j]);
        }
        out.push_row(&row);
    }
    Ok(out)
}

/// Generates categorical samples of `target` until the class holds
/// `target_count` samples. Each synthetic vector takes, per position, the
/// majority value among the `k` nearest (Hamming) neighbours of a random
/// seed member; ties go to the seed member's own value, then to the
/// smallest code.
pub fn smoten_oversample(
    x: &[Vec<u8>],
    y: &[usize],
    target: usize,
    target_count: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<u8>>> {
    let members = class_indices(y, target);
    if members.is_empty() {
        return Err(Error::MissingClass(format!("{target}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k_neighbors must be >= 1".into()));
    }
    let n_new = target_count.saturating_sub(members.len());
    let mut rng = rng::from_seed(seed);
    let mut cache: Vec<Option<Vec<u8>>> = vec![None; members.len()];
    let mut out = Vec::with_capacity(n_new);
    for _ in 0..n_new {
        let b = rng.random_range(0..members.len());
        let synth = cache[b].get_or_insert_with(|| {
            let hamming = |i: usize, j: usize| {
                x[members[i]]
                    .iter()
                    .zip(&x[members[j]])
                    .filter(|(a, b)| a != b)
                    .count() as f64
            };
            let nn = nearest(members.len(), b, k, hamming);
            let own = &x[members[b]];
            (0..own.len())
                .map(|j| {
                    if nn.is_empty() {
                        return own[j];
                    }
                    let mut counts = [0usize; 256];
                    for &n in &nn {
                        counts[x[members[n]][j] as usize] += 1;
                    }
                    let top = *counts.iter().max().unwrap_or(&0);
                    if counts[own[j] as usize] == top {
                        own[j]
                    } else {
                        counts.iter().position(|&c| c == top).unwrap_or(0) as u8
                    }
                })
                .collect()
        });
        out.push(synth.clone());
    }
    Ok(out)
}

/// Indices of the samples kept after dropping all but
/// `ceil(keep_fraction * n)` random members of `target`, in input order.
pub fn random_undersample(y: &[usize], target: usize, keep_fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("keep fraction {keep_fraction}")));
    }
    let members = class_indices(y, target);
    let keep = libm::ceil(keep_fraction * members.len() as f64 - 1e-9) as usize;
    let mut rng = rng::from_seed(seed);
    let mut chosen = vec![false; members.len()];
    for i in index::sample(&mut rng, members.len(), keep.min(members.len())) {
        chosen[i] = true;
    }
    let mut member_pos = 0;
    let mut out = Vec::with_capacity(y.len());
    for (i, &c) in y.iter().enumerate() {
        if c == target {
            if chosen[member_pos] {
                out.push(i);
            }
            member_pos += 1;
        } else {
            out.push(i);
        }
    }
    Ok(out)
}

/// Applies each class action with its own RNG stream. Undersampling runs
/// first, then synthetic samples are appended class by class.
pub fn apply_recipe(x: &Matrix, y: &[usize], recipe: &BalanceRecipe, seed: u64) -> Result<(Matrix, Vec<usize>)> {
    let mut keep: Vec<usize> = (0..y.len()).collect();
    for &(class, action) in &recipe.actions {
        if let ClassAction::Undersample(f) = action {
            let sub_y: Vec<usize> = keep.iter().map(|&i| y[i]).collect();
            let kept = random_undersample(&sub_y, class, f, rng::derive_seed(seed, class as u64))?;
            keep = kept.into_iter().map(|i| keep[i]).collect();
        }
    }
    let mut out_x = x.select(&keep);
    let mut out_y: Vec<usize> = keep.iter().map(|&i| y[i]).collect();
    for &(class, action) in &recipe.actions {
        if let ClassAction::Oversample(f) = action {
            let synth = smote_oversample(x, y, class, f, recipe.k_neighbors, rng::derive_seed(seed, class as u64))?;
            for row in synth.rows() {
                out_x.push_row(row);
                out_y.push(class);
            }
        }
    }
    Ok((out_x, out_y))
}

/// The operation-mode recipe. Every real mode must be present.
pub fn balance_mode_training_set(x: &Matrix, y: &[usize], seed: u64) -> Result<(Matrix, Vec<usize>)> {
    balance_mode_training_set_with(x, y, &BalanceRecipe::mode_default(), seed)
}

pub fn balance_mode_training_set_with(
    x: &Matrix,
    y: &[usize],
    recipe: &BalanceRecipe,
    seed: u64,
) -> Result<(Matrix, Vec<usize>)> {
    for mode in OperationMode::REAL {
        if !y.contains(&(mode.ordinal() as usize)) {
            return Err(Error::MissingClass(mode.as_str().into()));
        }
    }
    apply_recipe(x, y, recipe, seed)
}

/// SMOTEN every class up to the size of the largest one.
pub fn equalize_categorical(
    x: &[Vec<u8>],
    y: &[usize],
    n_classes: usize,
    k: usize,
    seed: u64,
) -> Result<(Vec<Vec<u8>>, Vec<usize>)> {
    let counts: Vec<usize> = (0..n_classes).map(|c| y.iter().filter(|&&v| v == c).count()).collect();
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut out_x = x.to_vec();
    let mut out_y = y.to_vec();
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::MissingClass(format!("{c}")));
        }
        for s in smoten_oversample(x, y, c, max, k, rng::derive_seed(seed, c as u64))? {
            out_x.push(s);
            out_y.push(c);
        }
    }
    Ok((out_x, out_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;

    fn counts(y: &[usize], n: usize) -> Vec<usize> {
        (0..n).map(|c| y.iter().filter(|&&v| v == c).count()).collect()
    }

    #[test]
    fn smote_fraction_one_doubles() {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64, (i * i) as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let y = vec![0; 50];
        let s = smote_oversample(&x, &y, 0, 1.0, 5, 7).unwrap();
        assert_eq!(s.n_rows(), 50);
        assert_eq!(smote_oversample(&x, &y, 0, 0.0, 5, 7).unwrap().n_rows(), 0);
    }

    #[test]
    fn smote_two_points_stay_on_segment() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]);
        let s = smote_oversample(&x, &[0, 0], 0, 500.0, 1, 11).unwrap();
        assert_eq!(s.n_rows(), 1000);
        for r in s.rows() {
            assert!((0.0..=1.0).contains(&r[0]));
            assert_eq!(r[0], r[1]);
        }
    }

    #[test]
    fn smote_needs_k_plus_one() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        assert!(matches!(
            smote_oversample(&x, &[0, 0], 0, 1.0, 5, 0),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn smoten_cases() {
        let x = vec![vec![1u8, 2, 3], vec![1, 2, 1], vec![1, 2, 1]];
        let y = [0, 1, 1];
        assert!(smoten_oversample(&x, &y, 1, 2, 5, 0).unwrap().is_empty());
        let single = smoten_oversample(&x, &y, 0, 4, 5, 0).unwrap();
        assert_eq!(single, vec![vec![1u8, 2, 3]; 3]);
        let same = smoten_oversample(&x, &y, 1, 6, 5, 0).unwrap();
        assert_eq!(same, vec![vec![1u8, 2, 1]; 4]);
    }

    #[test]
    fn smoten_majority_with_tie_to_own_value() {
        // member 0 neighbours: 1 and 2 (k=2). Position 0: {5,6} tie, own 5.
        // Position 1: {7,7} majority 7.
        let x = vec![vec![5u8, 0], vec![5, 7], vec![6, 7]];
        let s = smoten_oversample(&x, &[0, 0, 0], 0, 40, 2, 3).unwrap();
        assert!(s.contains(&vec![5u8, 7]));
    }

    #[test]
    fn undersample_keeps_fraction() {
        let mut y = vec![1usize; 1000];
        y.extend([0, 2, 3]);
        let kept = random_undersample(&y, 1, 0.2, 5).unwrap();
        let ky: Vec<usize> = kept.iter().map(|&i| y[i]).collect();
        assert_eq!(counts(&ky, 4), [1, 200, 1, 1]);
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(random_undersample(&y, 1, 1.0, 5).unwrap(), (0..y.len()).collect::<Vec<_>>());
        assert!(random_undersample(&y, 1, 0.0, 5).is_err());
    }

    fn synthetic_modes(n: [usize; 4]) -> (Matrix, Vec<usize>) {
        let mut x = Matrix::new(2);
        let mut y = Vec::new();
        for (c, &cnt) in n.iter().enumerate() {
            for i in 0..cnt {
                x.push_row(&[c as f64 * 10.0 + (i % 7) as f64, i as f64 * 0.01]);
                y.push(c);
            }
        }
        (x, y)
    }

    #[test]
    fn mode_recipe_counts() {
        let (x, y) = synthetic_modes([100, 1000, 100, 300]);
        let (bx, by) = balance_mode_training_set(&x, &y, 42).unwrap();
        assert_eq!(counts(&by, 4), [200, 200, 200, 300]);
        assert_eq!(bx.n_rows(), by.len());
        let again = balance_mode_training_set(&x, &y, 42).unwrap();
        assert_eq!(again, (bx, by));
    }

    #[test]
    fn mode_recipe_is_unconditional() {
        let (x, y) = synthetic_modes([100, 100, 100, 100]);
        let (_, by) = balance_mode_training_set(&x, &y, 1).unwrap();
        assert_eq!(counts(&by, 4), [200, 20, 200, 100]);
    }

    #[test]
    fn mode_recipe_names_missing_class() {
        let (x, y) = synthetic_modes([10, 10, 0, 10]);
        assert_eq!(
            balance_mode_training_set(&x, &y, 1),
            Err(Error::MissingClass("Operational".into()))
        );
    }

    #[test]
    fn equalize_categorical_balances() {
        let x = vec![vec![1u8, 2, 3, 1], vec![1, 2, 1, 4], vec![1, 2, 1, 4], vec![1, 3, 1, 4]];
        let (ex, ey) = equalize_categorical(&x, &[0, 1, 1, 1], 2, 5, 0).unwrap();
        assert_eq!(counts(&ey, 2), [3, 3]);
        assert_eq!(ex.len(), 6);
    }
}
