//! Post-training int8 quantization with integer-only inference.
//!
//! Inputs are quantized per feature with an affine map calibrated on
//! representative samples. Tree ensembles compare quantized inputs with
//! thresholds expressed in the same units; MLPs run int8 x int8 products
//! into int32 accumulators with fixed-point requantization between layers.

mod mlp;
mod tree;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use mlp::{quantize_mlp, QuantizedMlp};
pub use tree::{quantize_tree_model, QNode, QTree, QuantizedEnsemble};

use crate::classifiers::{Classifier, Family, Model};
use crate::datamodel::{CycleEvent, SensorRecord};
use crate::error::{Error, Result};
use crate::evaluate::{match_events, EvalCounts, Tolerance};
use crate::matrix::Matrix;
use crate::pipeline::{run_approach, PipelineConfig};

/// `q = clamp(round(x / scale) + zero_point, -128, 127)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineQuantizer {
    pub scale: f64,
    pub zero_point: i32,
}

impl AffineQuantizer {
    /// Quantizer for `[min, max]` widened to contain zero, so that zero is
    /// exactly representable and the zero point stays in range.
    pub fn from_range(min: f64, max: f64) -> Self {
        let (lo, hi) = (min.min(0.0), max.max(0.0));
        if hi - lo <= 0.0 || !(hi - lo).is_finite() {
            return AffineQuantizer {
                scale: 1.0,
                zero_point: 0,
            };
        }
        let scale = (hi - lo) / 255.0;
        let zp = libm::round(-128.0 - lo / scale).clamp(-128.0, 127.0) as i32;
        AffineQuantizer { scale, zero_point: zp }
    }

    pub fn quantize(&self, x: f64) -> i8 {
        let q = libm::round(x / self.scale) + f64::from(self.zero_point);
        q.clamp(-128.0, 127.0) as i8
    }

    pub fn dequantize(&self, q: i8) -> f64 {
        f64::from(i32::from(q) - self.zero_point) * self.scale
    }

    /// Smallest and largest values that quantize without clamping.
    pub fn range(&self) -> (f64, f64) {
        (self.dequantize(i8::MIN), self.dequantize(i8::MAX))
    }
}

/// One quantizer per column of `samples`.
pub fn calibrate(samples: &Matrix) -> Result<Vec<AffineQuantizer>> {
    if samples.n_rows() == 0 {
        return Err(Error::Empty("calibration set"));
    }
    Ok((0..samples.n_cols())
        .map(|j| {
            let (lo, hi) = samples
                .rows()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            AffineQuantizer::from_range(lo, hi)
        })
        .collect())
}

/// A positive real multiplier as `m0 * 2^-shift` with `m0` in `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedMultiplier {
    pub m0: i32,
    pub shift: u32,
}

impl FixedMultiplier {
    pub fn new(real: f64) -> Result<Self> {
        if !(real > 0.0 && real.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("multiplier {real} must be positive")));
        }
        let (frac, exp) = libm::frexp(real);
        let mut m = libm::round(frac * (1u64 << 31) as f64) as i64;
        let mut e = exp;
        if m == 1 << 31 {
            m /= 2;
            e += 1;
        }
        let shift = 31 - e;
        if !(0..=94).contains(&shift) {
            return Err(Error::InvalidParameter(alloc::format!("multiplier {real} out of range")));
        }
        Ok(FixedMultiplier {
            m0: m as i32,
            shift: shift as u32,
        })
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.m0) / libm::pow(2.0, f64::from(self.shift))
    }

    /// `round(acc * m0 / 2^shift)`, halves rounded up.
    pub fn apply(&self, acc: i64) -> i64 {
        let prod = i128::from(acc) * i128::from(self.m0);
        if self.shift == 0 {
            return prod as i64;
        }
        let half = 1i128 << (self.shift - 1);
        ((prod + half) >> self.shift) as i64
    }
}

/// Summary of values that did not fit their integer type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuantizationReport {
    pub clamped_thresholds: usize,
    pub clamped_biases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QuantizedModel {
    Ensemble(QuantizedEnsemble),
    Mlp(QuantizedMlp),
}

impl QuantizedModel {
    pub fn family(&self) -> Family {
        match self {
            QuantizedModel::Ensemble(m) => m.family(),
            QuantizedModel::Mlp(_) => Family::Mlp,
        }
    }

    pub fn report(&self) -> QuantizationReport {
        match self {
            QuantizedModel::Ensemble(m) => m.report,
            QuantizedModel::Mlp(m) => m.report,
        }
    }

    pub fn input_quantizers(&self) -> &[AffineQuantizer] {
        match self {
            QuantizedModel::Ensemble(m) => &m.inputs,
            QuantizedModel::Mlp(m) => &m.inputs,
        }
    }

    pub fn quantize_input(&self, x: &[f64]) -> Result<Vec<i8>> {
        let q = self.input_quantizers();
        if x.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(q).map(|(&v, q)| q.quantize(v)).collect())
    }

    /// Integer class scores; the predicted class is their argmax.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<i64>> {
        let q = self.quantize_input(x)?;
        Ok(match self {
            QuantizedModel::Ensemble(m) => m.scores_q(&q),
            QuantizedModel::Mlp(m) => m.scores_q(&q),
        })
    }
}

/// Index of the largest integer score; the first one wins ties.
pub fn argmax_i64(v: &[i64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Classifier for QuantizedModel {
    fn n_features(&self) -> usize {
        self.input_quantizers().len()
    }

    fn n_classes(&self) -> usize {
        match self {
            QuantizedModel::Ensemble(m) => m.n_classes,
            QuantizedModel::Mlp(m) => m.n_outputs,
        }
    }

    fn predict_class(&self, x: &[f64]) -> Result<usize> {
        self.scores(x).map(|s| argmax_i64(&s))
    }
}

/// Quantizes any supported model; `calibration` holds representative inputs.
pub fn quantize_model(model: &Model, calibration: &Matrix) -> Result<QuantizedModel> {
    let inputs = calibrate(calibration)?;
    match model {
        Model::Ensemble(m) => Ok(QuantizedModel::Ensemble(quantize_tree_model(m, &inputs)?)),
        Model::Mlp(m) => Ok(QuantizedModel::Mlp(quantize_mlp(m, calibration)?)),
        Model::Gnb(_) => Err(Error::Unsupported("quantization of Gaussian naive Bayes")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n: usize,
    pub agree: usize,
    pub rate: f64,
    /// `confusion[float][quantized]`, counted only where they differ.
    pub disagreements: Vec<Vec<usize>>,
}

/// Fraction of samples on which both models predict the same class.
pub fn agreement_report(float: &dyn Classifier, quantized: &dyn Classifier, x: &Matrix) -> Result<AgreementReport> {
    let c = float.n_classes().max(quantized.n_classes());
    let mut confusion = vec![vec![0usize; c]; c];
    let mut agree = 0;
    for row in x.rows() {
        let (a, b) = (float.predict_class(row)?, quantized.predict_class(row)?);
        if a == b {
            agree += 1;
        } else {
            confusion[a][b] += 1;
        }
    }
    let n = x.n_rows();
    Ok(AgreementReport {
        n,
        agree,
        rate: if n == 0 { 1.0 } else { agree as f64 / n as f64 },
        disagreements: confusion,
    })
}

/// Event scores of the float and quantized model stacks on the same data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndToEnd {
    pub float: EvalCounts,
    pub float_detection: EvalCounts,
    pub quantized: EvalCounts,
    pub quantized_detection: EvalCounts,
}

#[allow(clippy::too_many_arguments)]
pub fn compare_end_to_end(
    config: &PipelineConfig,
    float_mode: &dyn Classifier,
    float_duty: Option<&dyn Classifier>,
    quant_mode: &dyn Classifier,
    quant_duty: Option<&dyn Classifier>,
    records: &[SensorRecord],
    reference: &[CycleEvent],
    tol: Tolerance,
) -> Result<EndToEnd> {
    let f = run_approach(config, float_mode, float_duty, records)?;
    let q = run_approach(config, quant_mode, quant_duty, records)?;
    Ok(EndToEnd {
        float: match_events(reference, &f.events, tol, true)?,
        float_detection: match_events(reference, &f.events, tol, false)?,
        quantized: match_events(reference, &q.events, tol, true)?,
        quantized_detection: match_events(reference, &q.events, tol, false)?,
    })
}

/// Serializes `Vec<i8>` as a hex string of the two's-complement bytes.
pub mod hex_i8 {
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[i8], s: S) -> Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = v.iter().map(|&b| b as u8).collect();
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<i8>, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(s).map_err(serde::de::Error::custom)?;
        Ok(bytes.into_iter().map(|b| b as i8).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn range_0_255() {
        let q = AffineQuantizer::from_range(0.0, 255.0);
        assert_eq!(q.scale, 1.0);
        assert_eq!(q.zero_point, -128);
        assert_eq!(q.quantize(0.0), -128);
        assert_eq!(q.quantize(255.0), 127);
    }

    #[test]
    fn constant_feature() {
        let x = Matrix::from_rows(&[[7.0, 0.0], [7.0, 0.0], [7.0, 0.0]]);
        let q = calibrate(&x).unwrap();
        let codes: Vec<i8> = x.rows().map(|r| q[0].quantize(r[0])).collect();
        assert!(codes.iter().all(|&c| c == codes[0]));
        assert_eq!(q[1], AffineQuantizer { scale: 1.0, zero_point: 0 });
        assert_eq!(q[1].quantize(0.0), 0);
        assert!(calibrate(&Matrix::new(2)).is_err());
    }

    #[test]
    fn multiplier_examples() {
        let m = FixedMultiplier::new(0.5).unwrap();
        assert_eq!((m.m0, m.shift), (1 << 30, 31));
        assert_eq!(m.apply(10), 5);
        assert_eq!(m.apply(3), 2);
        assert_eq!(m.apply(-3), -1);
        assert!(FixedMultiplier::new(0.0).is_err());
        let m = FixedMultiplier::new(3.0).unwrap();
        assert_eq!(m.apply(7), 21);
    }

    proptest! {
        #[test]
        fn roundtrip_within_half_step(v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let x = Matrix::from_vec(v.clone(), 1);
            let q = calibrate(&x).unwrap()[0];
            prop_assert!((-128..=127).contains(&q.zero_point));
            for &s in &v {
                let err = (q.dequantize(q.quantize(s)) - s).abs();
                prop_assert!(err <= q.scale / 2.0 + 1e-9 * q.scale.max(1.0), "{} {}", err, q.scale);
            }
        }

        #[test]
        fn multiplier_close_to_real(real in 1e-6f64..100.0, acc in -100_000i64..100_000) {
            let m = FixedMultiplier::new(real).unwrap();
            prop_assert!((m.as_f64() - real).abs() <= real * 1e-9);
            let exact = acc as f64 * m.as_f64();
            prop_assert!((m.apply(acc) as f64 - exact).abs() <= 0.5 + 1e-6);
        }
    }
}
