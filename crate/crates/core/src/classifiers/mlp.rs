//! Single-hidden-layer perceptron trained with minibatch SGD on softmax
//! cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(z > 0.0)),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub activation: Activation,
    /// Min-max scale inputs to [0, 1] with training-set statistics.
    pub scale_inputs: bool,
}

impl MlpParams {
    pub fn new(hidden: usize, learning_rate: f64) -> Self {
        Self {
            hidden,
            learning_rate,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH,
            activation: Activation::Relu,
            scale_inputs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_outputs: usize,
    pub activation: Activation,
    /// Per-input offset and range; the network sees `(x - min) / range`.
    pub input_min: Vec<f64>,
    pub input_range: Vec<f64>,
    /// `n_hidden x n_inputs`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `n_outputs x n_hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradients with the same layout as the model's weight tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

struct Forward {
    z1: Vec<f64>,
    a1: Vec<f64>,
    probs: Vec<f64>,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases, identity input scaling.
    pub fn init(n_inputs: usize, n_hidden: usize, n_outputs: usize, activation: Activation, seed: u64) -> Self {
        let mut r = rng::from_seed(seed);
        let mut glorot = |fan_in: usize, fan_out: usize| -> Vec<f64> {
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            (0..fan_in * fan_out).map(|_| r.random_range(-limit..limit)).collect()
        };
        let w1 = glorot(n_inputs, n_hidden);
        let w2 = glorot(n_hidden, n_outputs);
        Self {
            n_inputs,
            n_hidden,
            n_outputs,
            activation,
            input_min: vec![0.0; n_inputs],
            input_range: vec![1.0; n_inputs],
            w1,
            b1: vec![0.0; n_hidden],
            w2,
            b2: vec![0.0; n_outputs],
        }
    }

    pub fn scale_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_min.iter().zip(&self.input_range))
            .map(|(v, (m, r))| (v - m) / r)
            .collect()
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let xs = self.scale_input(x);
        let mut z1 = self.b1.clone();
        for (h, z) in z1.iter_mut().enumerate() {
            let row = &self.w1[h * self.n_inputs..(h + 1) * self.n_inputs];
            *z += row.iter().zip(&xs).map(|(w, v)| w * v).sum::<f64>();
        }
        let a1: Vec<f64> = z1.iter().map(|&z| self.activation.apply(z)).collect();
        let mut logits = self.b2.clone();
        for (k, l) in logits.iter_mut().enumerate() {
            let row = &self.w2[k * self.n_hidden..(k + 1) * self.n_hidden];
            *l += row.iter().zip(&a1).map(|(w, v)| w * v).sum::<f64>();
        }
        let mut probs = vec![0.0; self.n_outputs];
        super::ensemble::softmax_into(&logits, &mut probs);
        Forward { z1, a1, probs }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).probs
    }

    /// Post-activation hidden layer, used for quantization calibration.
    pub fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).a1
    }

    /// Mean cross-entropy over the rows of `x`.
    pub fn loss(&self, x: &Matrix, y: &[usize]) -> f64 {
        let total: f64 = x
            .rows()
            .zip(y)
            .map(|(r, &c)| -libm::log(self.forward(r).probs[c].max(1e-300)))
            .sum();
        total / y.len() as f64
    }

    /// Exact gradient of [`MlpModel::loss`] over the listed rows.
    pub fn gradients(&self, x: &Matrix, y: &[usize], rows: &[usize]) -> MlpGradients {
        let mut g = MlpGradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        };
        let inv = 1.0 / rows.len() as f64;
        let mut delta_h = vec![0.0; self.n_hidden];
        for &i in rows {
            let row = x.row(i);
            let f = self.forward(row);
            let xs = self.scale_input(row);
            delta_h.fill(0.0);
            for k in 0..self.n_outputs {
                let d = (f.probs[k] - f64::from(u8::from(k == y[i]))) * inv;
                g.b2[k] += d;
                for h in 0..self.n_hidden {
                    g.w2[k * self.n_hidden + h] += d * f.a1[h];
                    delta_h[h] += d * self.w2[k * self.n_hidden + h];
                }
            }
            for h in 0..self.n_hidden {
                let d = delta_h[h] * self.activation.derivative(f.z1[h], f.a1[h]);
                if d == 0.0 {
                    continue;
                }
                g.b1[h] += d;
                for (j, v) in xs.iter().enumerate() {
                    g.w1[h * self.n_inputs + j] += d * v;
                }
            }
        }
        g
    }

    /// All trainable tensors, in a fixed order.
    pub fn parameters_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

impl MlpGradients {
    pub fn tensors(&self) -> [&Vec<f64>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }
}

pub struct MlpFit {
    pub model: MlpModel,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train_mlp(x: &Matrix, y: &[usize], n_classes: usize, p: MlpParams, seed: u64) -> MlpFit {
    let d = x.n_cols();
    let mut model = MlpModel::init(d, p.hidden, n_classes, p.activation, rng::derive_seed(seed, 0));
    if p.scale_inputs && x.n_rows() > 0 {
        for j in 0..d {
            let (lo, hi) = x
                .rows()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[j]), b.max(r[j])));
            model.input_min[j] = lo;
            model.input_range[j] = if hi > lo { hi - lo } else { 1.0 };
        }
    }
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    let mut shuffle = rng::stream(seed, 1);
    let batch = p.batch_size.max(1);
    let mut epoch_losses = Vec::with_capacity(p.epochs);
    for _ in 0..p.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            for &i in chunk {
                loss_sum -= libm::log(model.forward(x.row(i)).probs[y[i]].max(1e-300));
            }
            let g = model.gradients(x, y, chunk);
            let lr = p.learning_rate;
            for (w, dw) in model.parameters_mut().into_iter().zip(g.tensors()) {
                for (a, b) in w.iter_mut().zip(dw) {
                    *a -= lr * b;
                }
            }
        }
        epoch_losses.push(loss_sum / x.n_rows().max(1) as f64);
    }
    MlpFit { model, epoch_losses }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::argmax;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut r = rng::from_seed(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Matrix::new(3);
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 3;
            let cx = [0.0, 6.0, 12.0][c];
            x.push_row(&[cx + noise.sample(&mut r), 100.0 + noise.sample(&mut r) * 5.0, c as f64 * -2.0 + noise.sample(&mut r)]);
            y.push(c);
        }
        (x, y)
    }

    fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let na: f64 = a.iter().map(|v| v * v).sum::<f64>();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>();
        libm::sqrt(diff) / (libm::sqrt(na) + libm::sqrt(nb)).max(1e-300)
    }

    #[test]
    fn gradient_matches_central_differences() {
        for activation in [Activation::Relu, Activation::Tanh] {
            let (x, y) = blobs(3, 21);
            let mut m = MlpModel::init(3, 6, 3, activation, 5);
            m.input_min = vec![-1.0, 90.0, -5.0];
            m.input_range = vec![14.0, 20.0, 6.0];
            let rows = [0, 1, 2];
            let g = m.gradients(&x, &y, &rows);
            let h = 1e-6;
            for t in 0..4 {
                let n = m.parameters_mut()[t].len();
                let mut numeric = vec![0.0; n];
                for i in 0..n {
                    let orig = m.parameters_mut()[t][i];
                    m.parameters_mut()[t][i] = orig + h;
                    let plus = m.loss(&x, &y);
                    m.parameters_mut()[t][i] = orig - h;
                    let minus = m.loss(&x, &y);
                    m.parameters_mut()[t][i] = orig;
                    numeric[i] = (plus - minus) / (2.0 * h);
                }
                let err = relative_error(g.tensors()[t], &numeric);
                assert!(err < 1e-5, "{activation:?} tensor {t}: {err}");
            }
        }
    }

    #[test]
    fn learns_blobs_within_200_epochs() {
        let (x, y) = blobs(600, 22);
        let fit = train_mlp(&x, &y, 3, MlpParams::new(8, 0.01), 3);
        let ok = (0..x.n_rows())
            .filter(|&i| argmax(&fit.model.predict_proba(x.row(i))) == y[i])
            .count();
        assert!(ok as f64 / 600.0 >= 0.95, "{ok}");
        // epoch-average loss trends down: allow small SGD noise
        let l = &fit.epoch_losses;
        for w in l.windows(2) {
            assert!(w[1] <= w[0] * 1.05 + 1e-3, "{} -> {}", w[0], w[1]);
        }
        assert!(l[l.len() - 1] < l[0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = blobs(90, 23);
        let mut p = MlpParams::new(4, 0.1);
        p.epochs = 5;
        assert_eq!(train_mlp(&x, &y, 3, p, 9).model, train_mlp(&x, &y, 3, p, 9).model);
    }
}
