use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{calibrate, hex_i8, AffineQuantizer, FixedMultiplier, QuantizationReport};
use crate::classifiers::mlp::{Activation, MlpModel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Two-layer ReLU network with int8 weights and int32 biases.
///
/// The input min-max scaling and the input quantizers are folded into the
/// first layer: it consumes `q - zero_point` per feature directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedMlp {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_outputs: usize,
    pub inputs: Vec<AffineQuantizer>,
    #[serde(with = "hex_i8")]
    pub w1: Vec<i8>,
    pub w1_scale: f64,
    pub b1: Vec<i32>,
    /// Accumulator scale of layer 1 over the hidden activation scale.
    pub requant: FixedMultiplier,
    pub hidden: AffineQuantizer,
    #[serde(with = "hex_i8")]
    pub w2: Vec<i8>,
    pub w2_scale: f64,
    pub b2: Vec<i32>,
    pub report: QuantizationReport,
}

fn symmetric(w: &[f64]) -> (Vec<i8>, f64) {
    let max = w.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let scale = if max > 0.0 { max / 127.0 } else { 1.0 };
    (
        w.iter().map(|&v| libm::round(v / scale).clamp(-127.0, 127.0) as i8).collect(),
        scale,
    )
}

fn bias(b: f64, scale: f64, report: &mut QuantizationReport) -> i32 {
    let v = libm::round(b / scale);
    if !(f64::from(i32::MIN)..=f64::from(i32::MAX)).contains(&v) {
        report.clamped_biases += 1;
    }
    v.clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32
}

impl QuantizedMlp {
    /// Effective real-valued first-layer weights on `q - zero_point`.
    pub fn folded_weights(model: &MlpModel, inputs: &[AffineQuantizer]) -> (Vec<f64>, Vec<f64>) {
        let d = model.n_inputs;
        let mut w = Vec::with_capacity(model.w1.len());
        let mut b = model.b1.clone();
        for h in 0..model.n_hidden {
            for i in 0..d {
                let wi = model.w1[h * d + i];
                w.push(wi * inputs[i].scale / model.input_range[i]);
                b[h] -= wi * model.input_min[i] / model.input_range[i];
            }
        }
        (w, b)
    }

    /// Layer-2 accumulators; proportional to the float logits.
    pub fn scores_q(&self, q: &[i8]) -> Vec<i64> {
        let (d, hdim) = (self.n_inputs, self.n_hidden);
        let zh = i64::from(self.hidden.zero_point);
        let hidden: Vec<i64> = (0..hdim)
            .map(|h| {
                let mut acc = i64::from(self.b1[h]);
                for i in 0..d {
                    let u = i64::from(q[i]) - i64::from(self.inputs[i].zero_point);
                    acc += i64::from(self.w1[h * d + i]) * u;
                }
                // ReLU is the clamp at the zero point
                (self.requant.apply(acc) + zh).clamp(zh, 127) - zh
            })
            .collect();
        (0..self.n_outputs)
            .map(|k| {
                let mut acc = i64::from(self.b2[k]);
                for h in 0..hdim {
                    acc += i64::from(self.w2[k * hdim + h]) * hidden[h];
                }
                acc
            })
            .collect()
    }
}

/// Quantizes a ReLU MLP; `calibration` provides the input and hidden
/// activation ranges.
pub fn quantize_mlp(model: &MlpModel, calibration: &Matrix) -> Result<QuantizedMlp> {
    if model.activation != Activation::Relu {
        return Err(Error::Unsupported("integer inference supports ReLU hidden layers only"));
    }
    if calibration.n_cols() != model.n_inputs {
        return Err(Error::DimensionMismatch {
            expected: model.n_inputs,
            got: calibration.n_cols(),
        });
    }
    let inputs = calibrate(calibration)?;
    let mut report = QuantizationReport::default();
    let (w1f, b1f) = QuantizedMlp::folded_weights(model, &inputs);
    let (w1, w1_scale) = symmetric(&w1f);
    let b1 = b1f.iter().map(|&b| bias(b, w1_scale, &mut report)).collect();
    // hidden range from the dequantized inputs the integer path will see
    let mut hmax = 0.0f64;
    for row in calibration.rows() {
        let deq: Vec<f64> = row.iter().zip(&inputs).map(|(&v, q)| q.dequantize(q.quantize(v))).collect();
        for a in model.hidden_activations(&deq) {
            hmax = hmax.max(a);
        }
    }
    let hidden = AffineQuantizer::from_range(0.0, hmax);
    let requant = FixedMultiplier::new(w1_scale / hidden.scale)?;
    let (w2, w2_scale) = symmetric(&model.w2);
    let b2 = model
        .b2
        .iter()
        .map(|&b| bias(b, w2_scale * hidden.scale, &mut report))
        .collect();
    Ok(QuantizedMlp {
        n_inputs: model.n_inputs,
        n_hidden: model.n_hidden,
        n_outputs: model.n_outputs,
        inputs,
        w1,
        w1_scale,
        b1,
        requant,
        hidden,
        w2,
        w2_scale,
        b2,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::mlp::{train_mlp, MlpParams};
    use crate::classifiers::{Classifier, Model};
    use crate::quantize::{agreement_report, QuantizedModel};
    use crate::rng;
    use rand::Rng as _;

    fn data(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut r = rng::from_seed(seed);
        let mut x = Matrix::new(4);
        let mut y = Vec::new();
        for _ in 0..n {
            let c = r.random_range(0..3usize);
            let row = [
                c as f64 * 40.0 + r.random_range(-15.0..15.0),
                r.random_range(0.0..5.0),
                100.0 - c as f64 * 20.0 + r.random_range(-10.0..10.0),
                r.random_range(-1.0..1.0),
            ];
            x.push_row(&row);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn zero_weights_constant_output() {
        let mut m = MlpModel::init(3, 4, 2, Activation::Relu, 0);
        for t in m.parameters_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let q = quantize_mlp(&m, &x).unwrap();
        assert!(q.w1.iter().chain(&q.w2).all(|&w| w == 0));
        let a = q.scores_q(&[0, 0, 0]);
        assert_eq!(a, q.scores_q(&[127, -128, 5]));
    }

    #[test]
    fn weights_within_half_step() {
        let (x, y) = data(300, 1);
        let m = train_mlp(&x, &y, 3, MlpParams { epochs: 20, ..MlpParams::new(8, 0.05) }, 2).model;
        let q = quantize_mlp(&m, &x).unwrap();
        let (w1f, _) = QuantizedMlp::folded_weights(&m, &q.inputs);
        for (&qw, &w) in q.w1.iter().zip(&w1f) {
            assert!((f64::from(qw) * q.w1_scale - w).abs() <= q.w1_scale / 2.0 + 1e-12);
        }
        for (&qw, &w) in q.w2.iter().zip(&m.w2) {
            assert!((f64::from(qw) * q.w2_scale - w).abs() <= q.w2_scale / 2.0 + 1e-12);
        }
    }

    #[test]
    fn agreement_on_held_out() {
        let (x, y) = data(1500, 3);
        let m = Model::Mlp(train_mlp(&x, &y, 3, MlpParams::new(12, 0.05), 4).model);
        let Model::Mlp(inner) = &m else { unreachable!() };
        let q = QuantizedModel::Mlp(quantize_mlp(inner, &x).unwrap());
        let (tx, _) = data(2000, 5);
        let r = agreement_report(&m, &q, &tx).unwrap();
        assert!(r.rate >= 0.97, "{}", r.rate);
        assert_eq!(q.n_classes(), 3);
        assert_eq!(agreement_report(&m, &m, &tx).unwrap().rate, 1.0);
    }

    #[test]
    fn tanh_rejected() {
        let m = MlpModel::init(2, 3, 2, Activation::Tanh, 0);
        assert!(quantize_mlp(&m, &Matrix::from_rows(&[[0.0, 1.0]])).is_err());
    }
}
