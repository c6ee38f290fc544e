//! From classified minutes to labelled duty cycles.
//!
//! Three approaches share the same per-minute mode classifier and median
//! filter. They differ in how cycles are delimited and how they are labelled:
//!
//! * [`Approach::ModeRules`] delimits cycles by moving modes in the filtered
//!   label sequence and labels them with the pattern rules.
//! * [`Approach::ThresholdRules`] delimits cycles by the speed threshold and
//!   labels them with the pattern rules.
//! * [`Approach::ThresholdLearned`] delimits cycles by the speed threshold
//!   and labels the encoded transition vector with a second classifier.
//!
//! A cycle is only reported once a static mode has been seen on both sides;
//! cycles touching the start or end of a contiguous segment are dropped.

mod ops;
pub mod stream;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ops::{
    classify_cycle_pattern, compress_runs, dedup_modes, detect_cycles_modes, detect_cycles_threshold,
    encode_transitions, median_filter, ModeCycle, Run, ThresholdCycle, TransitionSequence,
};
pub use stream::{PendingCycle, StreamEvent, StreamingPipeline};

use crate::classifiers::Classifier;
use crate::datamodel::{CycleClass, CycleEvent, OperationMode, SensorRecord};
use crate::error::{Error, Result};
use crate::features;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Approach {
    ModeRules = 1,
    ThresholdRules = 2,
    ThresholdLearned = 3,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::ModeRules, Approach::ThresholdRules, Approach::ThresholdLearned];

    pub const fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Approach::ModeRules),
            2 => Ok(Approach::ThresholdRules),
            3 => Ok(Approach::ThresholdLearned),
            _ => Err(Error::InvalidParameter(alloc::format!("approach must be 1, 2 or 3, got {n}"))),
        }
    }

    pub const fn needs_duty_model(self) -> bool {
        matches!(self, Approach::ThresholdLearned)
    }
}

impl From<Approach> for u8 {
    fn from(a: Approach) -> u8 {
        a.number()
    }
}

impl TryFrom<u8> for Approach {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        Approach::from_number(n)
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(alloc::format!("approach must be 1, 2 or 3, got {s:?}")))?;
        Approach::from_number(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub approach: Approach,
    /// Speed (rpm) above which the belt counts as moving.
    pub speed_threshold: f64,
    pub median_window: usize,
    pub encoder_slots: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            approach: Approach::ThresholdLearned,
            speed_threshold: 5.0,
            median_window: 3,
            encoder_slots: 20,
        }
    }
}

impl PipelineConfig {
    pub fn new(approach: Approach) -> Self {
        PipelineConfig {
            approach,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.median_window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(alloc::format!(
                "median window {} must be odd",
                self.median_window
            )));
        }
        if !self.speed_threshold.is_finite() {
            return Err(Error::InvalidConfig("speed threshold must be finite".into()));
        }
        if self.encoder_slots == 0 {
            return Err(Error::InvalidConfig("encoder needs at least one slot".into()));
        }
        Ok(())
    }
}

/// Per-minute output: raw classifier label and the filtered label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinutePrediction {
    pub timestamp: i64,
    pub predicted: OperationMode,
    pub filtered: OperationMode,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOutput {
    pub minutes: Vec<MinutePrediction>,
    pub events: Vec<CycleEvent>,
}

/// Labels a flanked, compressed cycle pattern the way `approach` does.
/// Patterns that cannot be handled (too long for the encoder, unflanked) are
/// abnormal.
pub fn label_pattern(
    config: &PipelineConfig,
    duty_model: Option<&dyn Classifier>,
    pattern: &[OperationMode],
) -> Result<CycleClass> {
    match config.approach {
        Approach::ModeRules | Approach::ThresholdRules => {
            Ok(classify_cycle_pattern(pattern).unwrap_or(CycleClass::Abnormal))
        }
        Approach::ThresholdLearned => {
            let model = duty_model.ok_or(Error::InvalidConfig("approach 3 needs a duty-cycle model".into()))?;
            match encode_transitions(pattern, config.encoder_slots) {
                Ok(code) => {
                    let x: Vec<f64> = code.iter().map(|&c| f64::from(c)).collect();
                    let c = model.predict_class(&x)?;
                    CycleClass::from_index(c)
                        .ok_or(Error::InvalidParameter(alloc::format!("duty model produced class {c}")))
                }
                Err(Error::TooManyTransitions { .. }) => Ok(CycleClass::Abnormal),
                Err(e) => Err(e),
            }
        }
    }
}

/// Raw per-minute mode predictions for one contiguous segment.
pub fn predict_modes(mode_model: &dyn Classifier, records: &[SensorRecord]) -> Result<Vec<OperationMode>> {
    features::extract_series(records)
        .iter()
        .map(|f| {
            let c = mode_model.predict_class(f.as_slice())?;
            u8::try_from(c)
                .ok()
                .and_then(OperationMode::from_ordinal)
                .filter(|m| *m != OperationMode::Pad)
                .ok_or(Error::InvalidParameter(alloc::format!("mode model produced class {c}")))
        })
        .collect()
}

/// Batch run of one approach over a whole record series.
pub fn run_approach(
    config: &PipelineConfig,
    mode_model: &dyn Classifier,
    duty_model: Option<&dyn Classifier>,
    records: &[SensorRecord],
) -> Result<PipelineOutput> {
    config.validate()?;
    if config.approach.needs_duty_model() && duty_model.is_none() {
        return Err(Error::InvalidConfig("approach 3 needs a duty-cycle model".into()));
    }
    let mut out = PipelineOutput::default();
    for seg in crate::datamodel::segments(records) {
        let recs = &records[seg];
        let predicted = predict_modes(mode_model, recs)?;
        let filtered = median_filter(&predicted, config.median_window)?;
        out.minutes.extend(recs.iter().zip(predicted.iter().zip(&filtered)).map(|(r, (&p, &f))| {
            MinutePrediction {
                timestamp: r.timestamp,
                predicted: p,
                filtered: f,
            }
        }));
        match config.approach {
            Approach::ModeRules => {
                let labels: Vec<(i64, OperationMode)> =
                    recs.iter().zip(&filtered).map(|(r, &m)| (r.timestamp, m)).collect();
                let seq = compress_runs(&labels);
                for cycle in detect_cycles_modes(&seq) {
                    if let Some(pattern) = cycle.pattern(&seq) {
                        let class = label_pattern(config, None, &pattern)?;
                        out.events.push(CycleEvent::new(cycle.onset, cycle.offset, class));
                    }
                }
            }
            Approach::ThresholdRules | Approach::ThresholdLearned => {
                for cycle in detect_cycles_threshold(recs, config.speed_threshold) {
                    if cycle.first == 0 || cycle.last + 1 == recs.len() {
                        continue;
                    }
                    let pattern = dedup_modes(&filtered[cycle.first - 1..=cycle.last + 1]);
                    let class = label_pattern(config, duty_model, &pattern)?;
                    out.events.push(CycleEvent::new(cycle.onset, cycle.offset, class));
                }
            }
        }
    }
    Ok(out)
}

/// Transition patterns of the threshold-detected cycles in `records`, with
/// the span of each cycle. Used to build duty-cycle training sets.
pub fn threshold_cycle_patterns(
    config: &PipelineConfig,
    mode_model: &dyn Classifier,
    records: &[SensorRecord],
) -> Result<Vec<(i64, i64, Vec<OperationMode>)>> {
    config.validate()?;
    let mut out = Vec::new();
    for seg in crate::datamodel::segments(records) {
        let recs = &records[seg];
        let predicted = predict_modes(mode_model, recs)?;
        let filtered = median_filter(&predicted, config.median_window)?;
        for cycle in detect_cycles_threshold(recs, config.speed_threshold) {
            if cycle.first == 0 || cycle.last + 1 == recs.len() {
                continue;
            }
            out.push((
                cycle.onset,
                cycle.offset,
                dedup_modes(&filtered[cycle.first - 1..=cycle.last + 1]),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;
    use OperationMode::*;

    /// Reads the mode straight off the record: the speed value encodes it.
    pub(crate) struct Oracle;

    impl Classifier for Oracle {
        fn n_features(&self) -> usize {
            features::N_FEATURES
        }
        fn n_classes(&self) -> usize {
            4
        }
        fn predict_class(&self, x: &[f64]) -> Result<usize> {
            // hp is feature 1; series below put the mode ordinal in hp
            Ok(x[1] as usize)
        }
    }

    struct Constant(usize);

    impl Classifier for Constant {
        fn n_features(&self) -> usize {
            20
        }
        fn n_classes(&self) -> usize {
            2
        }
        fn predict_class(&self, _: &[f64]) -> Result<usize> {
            Ok(self.0)
        }
    }

    pub(crate) fn series(modes: &[OperationMode], start: i64) -> Vec<SensorRecord> {
        modes
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let speed = if m.is_moving() { 40.0 } else { 0.0 };
                SensorRecord::new(start + i as i64, "2021-01", speed, f64::from(m.ordinal()), 0.0)
            })
            .collect()
    }

    fn expand(runs: &[(OperationMode, usize)]) -> Vec<OperationMode> {
        runs.iter().flat_map(|&(m, n)| core::iter::repeat_n(m, n)).collect()
    }

    #[test]
    fn approach_parsing() {
        assert_eq!("2".parse::<Approach>().unwrap(), Approach::ThresholdRules);
        assert!("4".parse::<Approach>().is_err());
        assert!("x".parse::<Approach>().is_err());
    }

    #[test]
    fn normal_cycle_all_approaches() {
        let modes = expand(&[(Idle, 5), (Operational, 3), (Active, 6), (Operational, 2), (Idle, 5)]);
        let recs = series(&modes, 100);
        for approach in Approach::ALL {
            let cfg = PipelineConfig::new(approach);
            let out = run_approach(&cfg, &Oracle, Some(&Constant(0)), &recs).unwrap();
            assert_eq!(out.events, [CycleEvent::new(105, 116, CycleClass::Normal)], "{approach}");
            assert_eq!(out.minutes.len(), recs.len());
        }
    }

    #[test]
    fn abnormal_pattern_and_duty_override() {
        let modes = expand(&[(Idle, 4), (Operational, 4), (Idle, 4)]);
        let recs = series(&modes, 0);
        let a2 = run_approach(&PipelineConfig::new(Approach::ThresholdRules), &Oracle, None, &recs).unwrap();
        assert_eq!(a2.events[0].class, CycleClass::Abnormal);
        let a3 = run_approach(
            &PipelineConfig::new(Approach::ThresholdLearned),
            &Oracle,
            Some(&Constant(0)),
            &recs,
        )
        .unwrap();
        assert_eq!(a3.events[0].class, CycleClass::Normal);
    }

    #[test]
    fn approach3_requires_duty_model() {
        let recs = series(&[Idle, Idle], 0);
        assert!(run_approach(&PipelineConfig::new(Approach::ThresholdLearned), &Oracle, None, &recs).is_err());
    }

    #[test]
    fn edge_cycles_dropped() {
        let modes = expand(&[(Operational, 3), (Idle, 4), (Operational, 3), (Active, 3), (Idle, 3), (Operational, 2)]);
        let recs = series(&modes, 0);
        for approach in [Approach::ModeRules, Approach::ThresholdRules] {
            let out = run_approach(&PipelineConfig::new(approach), &Oracle, None, &recs).unwrap();
            assert_eq!(out.events, [CycleEvent::new(7, 13, CycleClass::Normal)], "{approach}");
        }
    }

    #[test]
    fn gap_splits_cycles() {
        let mut recs = series(&expand(&[(Idle, 3), (Operational, 3)]), 0);
        recs.extend(series(&expand(&[(Operational, 3), (Idle, 3)]), 50));
        let out = run_approach(&PipelineConfig::new(Approach::ThresholdRules), &Oracle, None, &recs).unwrap();
        assert!(out.events.is_empty());
        let mut month = series(&expand(&[(Idle, 3), (Operational, 3)]), 0);
        let mut next = series(&expand(&[(Operational, 3), (Idle, 3)]), 6);
        for r in &mut next {
            r.month = String::from("2021-02");
        }
        month.append(&mut next);
        assert!(run_approach(&PipelineConfig::new(Approach::ModeRules), &Oracle, None, &month)
            .unwrap()
            .events
            .is_empty());
    }

    #[test]
    fn single_glitch_is_filtered() {
        let modes = expand(&[(Idle, 5), (Operational, 1), (Idle, 5)]);
        let mut recs = series(&modes, 0);
        // speed stays low: only the classifier glitches
        recs[5].speed = 0.0;
        let out = run_approach(&PipelineConfig::new(Approach::ModeRules), &Oracle, None, &recs).unwrap();
        assert!(out.events.is_empty());
        assert!(out.minutes.iter().all(|m| m.filtered == Idle));
        assert_eq!(out.minutes[5].predicted, Operational);
    }

    #[test]
    fn long_pattern_is_abnormal_for_encoder() {
        let mut runs = vec![(Idle, 3)];
        for _ in 0..12 {
            runs.push((Operational, 2));
            runs.push((Active, 2));
        }
        runs.push((Idle, 3));
        let recs = series(&expand(&runs), 0);
        let out = run_approach(
            &PipelineConfig::new(Approach::ThresholdLearned),
            &Oracle,
            Some(&Constant(0)),
            &recs,
        )
        .unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].class, CycleClass::Abnormal);
    }

    #[test]
    fn even_window_rejected() {
        let cfg = PipelineConfig {
            median_window: 4,
            ..PipelineConfig::new(Approach::ModeRules)
        };
        assert!(run_approach(&cfg, &Oracle, None, &series(&[Idle], 0)).is_err());
    }
}
