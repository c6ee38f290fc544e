//! The 12-value feature vector: speed, high pressure, low pressure and
//! differential pressure, followed by trailing 3- and 5-sample moving
//! averages of those four. All windows are causal and shrink at the start
//! of a series.

use alloc::vec::Vec;

use crate::datamodel::SensorRecord;
use crate::matrix::Matrix;

pub const N_BASE: usize = 4;
pub const N_FEATURES: usize = 12;
const HISTORY: usize = 5;

pub type BaseFeatures = [f64; N_BASE];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `(speed, hp, lp, hp - lp)`; the differential is not clamped.
pub fn base_features(r: &SensorRecord) -> BaseFeatures {
    [
        r.speed,
        r.high_pressure,
        r.low_pressure,
        r.high_pressure - r.low_pressure,
    ]
}

/// Ring buffer of the last five base vectors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureState {
    buf: [BaseFeatures; HISTORY],
    head: usize,
    len: usize,
}

impl FeatureState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn push(&mut self, record: &SensorRecord) -> FeatureVector {
        self.buf[self.head] = base_features(record);
        self.head = (self.head + 1) % HISTORY;
        self.len = (self.len + 1).min(HISTORY);

        let mut out = [0.0; N_FEATURES];
        out[..N_BASE].copy_from_slice(&self.newest(0));
        out[N_BASE..2 * N_BASE].copy_from_slice(&self.trailing_mean(3));
        out[2 * N_BASE..].copy_from_slice(&self.trailing_mean(5));
        FeatureVector(out)
    }

    /// `age` 0 is the most recent entry.
    fn newest(&self, age: usize) -> BaseFeatures {
        self.buf[(self.head + HISTORY - 1 - age) % HISTORY]
    }

    fn trailing_mean(&self, k: usize) -> BaseFeatures {
        let n = k.min(self.len);
        let mut sum = [0.0; N_BASE];
        // oldest first, matching the batch extractor's summation order
        for age in (0..n).rev() {
            let v = self.newest(age);
            for j in 0..N_BASE {
                sum[j] += v[j];
            }
        }
        sum.map(|s| s / n as f64)
    }
}

/// Functional form of [`FeatureState::push`].
pub fn step(mut state: FeatureState, record: &SensorRecord) -> (FeatureState, FeatureVector) {
    let v = state.push(record);
    (state, v)
}

/// Batch extraction over one contiguous series.
pub fn extract_series(records: &[SensorRecord]) -> Vec<FeatureVector> {
    let base: Vec<BaseFeatures> = records.iter().map(base_features).collect();
    (0..base.len())
        .map(|t| {
            let mut out = [0.0; N_FEATURES];
            out[..N_BASE].copy_from_slice(&base[t]);
            for (slot, k) in [(1, 3usize), (2, 5usize)] {
                let window = &base[(t + 1).saturating_sub(k)..=t];
                let mut sum = [0.0; N_BASE];
                for v in window {
                    for j in 0..N_BASE {
                        sum[j] += v[j];
                    }
                }
                for j in 0..N_BASE {
                    out[slot * N_BASE + j] = sum[j] / window.len() as f64;
                }
            }
            FeatureVector(out)
        })
        .collect()
}

/// Features for a multi-month series, restarting the windows at every
/// contiguous segment.
pub fn extract_segmented(records: &[SensorRecord]) -> Matrix {
    let mut m = Matrix::with_capacity(N_FEATURES, records.len());
    for seg in crate::datamodel::segments(records) {
        for v in extract_series(&records[seg]) {
            m.push_row(&v.0);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(speed: f64, hp: f64, lp: f64) -> SensorRecord {
        SensorRecord::new(0, "m", speed, hp, lp)
    }

    #[test]
    fn differential_pressure() {
        assert_eq!(base_features(&rec(45.0, 200.0, 10.0))[3], 190.0);
        assert_eq!(base_features(&rec(0.0, 0.0, 0.0)), [0.0; 4]);
        assert_eq!(base_features(&rec(10.0, 5.0, 8.0))[3], -3.0);
    }

    #[test]
    fn ma3_of_speed() {
        let mut s = FeatureState::new();
        let mut last = None;
        for v in [10.0, 20.0, 30.0] {
            last = Some(s.push(&rec(v, 0.0, 0.0)));
        }
        assert_eq!(last.unwrap().0[4], 20.0);
    }

    #[test]
    fn first_record_uses_window_of_one() {
        let (_, v) = step(FeatureState::new(), &rec(3.0, 7.0, 1.0));
        assert_eq!(&v.0[4..8], &v.0[..4]);
        assert_eq!(&v.0[8..], &v.0[..4]);
    }

    #[test]
    fn constant_input_is_constant() {
        let mut s = FeatureState::new();
        for _ in 0..8 {
            let v = s.push(&rec(4.5, 120.0, 9.0));
            assert_eq!(v.0, [4.5, 120.0, 9.0, 111.0, 4.5, 120.0, 9.0, 111.0, 4.5, 120.0, 9.0, 111.0]);
        }
        assert_eq!(s.len(), 5);
    }

    proptest! {
        #[test]
        fn streaming_equals_batch(vals in prop::collection::vec((0.0f64..60.0, 0.0f64..300.0, 0.0f64..30.0), 1..40)) {
            let records: Vec<_> = vals.iter().map(|&(a, b, c)| rec(a, b, c)).collect();
            let batch = extract_series(&records);
            let mut s = FeatureState::new();
            for (r, b) in records.iter().zip(&batch) {
                prop_assert_eq!(s.push(r), *b);
            }
        }

        #[test]
        fn ma5_is_trailing_mean(vals in prop::collection::vec(0.0f64..300.0, 5..30)) {
            let records: Vec<_> = vals.iter().map(|&v| rec(v, v * 2.0, 1.0)).collect();
            let out = extract_series(&records);
            for t in 4..vals.len() {
                let mean = vals[t - 4..=t].iter().sum::<f64>() / 5.0;
                let got = out[t].0[8];
                prop_assert!((got - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            }
        }

        #[test]
        fn causal(vals in prop::collection::vec(0.0f64..60.0, 2..20), cut in 1usize..19, tail in 0.0f64..100.0) {
            let cut = cut.min(vals.len() - 1);
            let records: Vec<_> = vals.iter().map(|&v| rec(v, v, v)).collect();
            let mut altered = records.clone();
            for r in &mut altered[cut..] {
                r.speed = tail;
            }
            let a = extract_series(&records);
            let b = extract_series(&altered);
            prop_assert_eq!(&a[..cut], &b[..cut]);
        }
    }

    #[test]
    fn segmented_restarts_windows() {
        let mut a = rec(10.0, 0.0, 0.0);
        a.timestamp = 0;
        let mut b = rec(30.0, 0.0, 0.0);
        b.timestamp = 100;
        b.month = "n".into();
        let m = extract_segmented(&[a, b]);
        assert_eq!(m.get(1, 4), 30.0);
    }
}
