use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Gaussian naive Bayes with per-class priors, means and variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub n_features: usize,
    pub priors: Vec<f64>,
    /// `n_classes x n_features`, row-major.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub epsilon: f64,
}

/// Closed-form fit. Every variance gets `1e-9 * max feature variance` added.
pub fn train_gnb(x: &Matrix, y: &[usize], n_classes: usize) -> GaussianNbModel {
    let d = x.n_cols();
    let n = x.n_rows() as f64;
    let mut counts = vec![0.0; n_classes];
    let mut sums = vec![0.0; n_classes * d];
    for (row, &c) in x.rows().zip(y) {
        counts[c] += 1.0;
        for j in 0..d {
            sums[c * d + j] += row[j];
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .enumerate()
        .map(|(k, s)| if counts[k / d] > 0.0 { s / counts[k / d] } else { 0.0 })
        .collect();
    let mut sq = vec![0.0; n_classes * d];
    for (row, &c) in x.rows().zip(y) {
        for j in 0..d {
            let e = row[j] - means[c * d + j];
            sq[c * d + j] += e * e;
        }
    }
    let mut max_var: f64 = 0.0;
    for j in 0..d {
        let mean = x.rows().map(|r| r[j]).sum::<f64>() / n;
        let var = x.rows().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
        max_var = max_var.max(var);
    }
    let epsilon = (1e-9 * max_var).max(f64::MIN_POSITIVE);
    let variances = sq
        .iter()
        .enumerate()
        .map(|(k, s)| if counts[k / d] > 0.0 { s / counts[k / d] } else { 0.0 } + epsilon)
        .collect();
    GaussianNbModel {
        n_features: d,
        priors: counts.iter().map(|c| c / n).collect(),
        means,
        variances,
        epsilon,
    }
}

impl GaussianNbModel {
    pub fn n_classes(&self) -> usize {
        self.priors.len()
    }

    pub fn joint_log_likelihood(&self, x: &[f64]) -> Vec<f64> {
        let d = self.n_features;
        (0..self.n_classes())
            .map(|c| {
                if self.priors[c] <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let mut ll = libm::log(self.priors[c]);
                for j in 0..d {
                    let v = self.variances[c * d + j];
                    let e = x[j] - self.means[c * d + j];
                    ll -= 0.5 * (libm::log(2.0 * core::f64::consts::PI * v) + e * e / v);
                }
                ll
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let jll = self.joint_log_likelihood(x);
        let mut out = vec![0.0; jll.len()];
        super::ensemble::softmax_into(&jll, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::argmax;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn boundary_between_symmetric_gaussians() {
        let mut r = rng::from_seed(12);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Matrix::new(1);
        let mut y = Vec::new();
        for i in 0..4000 {
            let c = i % 2;
            x.push_row(&[if c == 0 { -3.0 } else { 3.0 } + noise.sample(&mut r)]);
            y.push(c);
        }
        let m = train_gnb(&x, &y, 2);
        // scan for the sign change of P(class 1) - 0.5
        let mut boundary = None;
        let mut prev = m.predict_proba(&[-2.0])[1] - 0.5;
        for k in 1..=4000 {
            let v = -2.0 + k as f64 * 0.001;
            let cur = m.predict_proba(&[v])[1] - 0.5;
            if prev < 0.0 && cur >= 0.0 {
                boundary = Some(v);
                break;
            }
            prev = cur;
        }
        let b = boundary.expect("boundary in range");
        assert!(b.abs() <= 0.1, "{b}");
    }

    #[test]
    fn symmetric_midpoint_ties_to_lower_class() {
        let x = Matrix::from_rows(&[[-1.0], [-3.0], [1.0], [3.0]]);
        let m = train_gnb(&x, &[0, 0, 1, 1], 2);
        let p = m.predict_proba(&[0.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn constant_feature_variance_floored() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [8.0, 5.0], [9.0, 5.0]]);
        let m = train_gnb(&x, &[0, 0, 1, 1], 2);
        assert!(m.variances.iter().all(|&v| v >= m.epsilon && v > 0.0));
        assert!((m.priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p = m.predict_proba(&[1.5, 5.0]);
        assert!(p[0] > 0.99);
    }
}
