//! Building blocks shared by the three approaches.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::datamodel::{CycleClass, OperationMode, SensorRecord};
use crate::error::{Error, Result};

/// Centred running median over ordinal codes, edges padded by replication.
pub fn median_filter(labels: &[OperationMode], window: usize) -> Result<Vec<OperationMode>> {
    if window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(alloc::format!("median window {window} must be odd")));
    }
    let half = window / 2;
    let n = labels.len();
    let mut buf = vec![0u8; window];
    Ok((0..n)
        .map(|i| {
            for (k, slot) in buf.iter_mut().enumerate() {
                let j = (i + k).saturating_sub(half).min(n - 1);
                *slot = labels[j].ordinal();
            }
            buf.sort_unstable();
            OperationMode::from_ordinal(buf[half]).unwrap_or(OperationMode::Pad)
        })
        .collect())
}

/// One run of identical labels covering minutes `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub mode: OperationMode,
    pub start: i64,
    pub end: i64,
}

/// Run-length compressed mode labels; adjacent runs always differ.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransitionSequence {
    pub runs: Vec<Run>,
}

impl TransitionSequence {
    pub fn modes(&self) -> Vec<OperationMode> {
        self.runs.iter().map(|r| r.mode).collect()
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }
}

/// Merges consecutive equal labels of a contiguous series.
pub fn compress_runs(labels: &[(i64, OperationMode)]) -> TransitionSequence {
    let mut runs: Vec<Run> = Vec::new();
    for &(ts, mode) in labels {
        match runs.last_mut() {
            Some(r) if r.mode == mode => r.end = ts + 1,
            _ => runs.push(Run {
                mode,
                start: ts,
                end: ts + 1,
            }),
        }
    }
    TransitionSequence { runs }
}

/// Drops adjacent duplicates.
pub fn dedup_modes(modes: &[OperationMode]) -> Vec<OperationMode> {
    let mut out: Vec<OperationMode> = Vec::with_capacity(modes.len());
    for &m in modes {
        if out.last() != Some(&m) {
            out.push(m);
        }
    }
    out
}

/// A maximal run of records with `speed > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdCycle {
    /// Index of the first and last above-threshold record.
    pub first: usize,
    pub last: usize,
    pub onset: i64,
    pub offset: i64,
}

/// Cycles from the speed signal alone. Runs never span a timestamp gap.
pub fn detect_cycles_threshold(records: &[SensorRecord], threshold: f64) -> Vec<ThresholdCycle> {
    let mut out = Vec::new();
    for seg in crate::datamodel::segments(records) {
        let mut open: Option<usize> = None;
        for i in seg.clone() {
            let above = records[i].speed > threshold;
            match (above, open) {
                (true, None) => open = Some(i),
                (false, Some(first)) => {
                    out.push(threshold_cycle(records, first, i - 1));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(first) = open {
            out.push(threshold_cycle(records, first, seg.end - 1));
        }
    }
    out
}

fn threshold_cycle(records: &[SensorRecord], first: usize, last: usize) -> ThresholdCycle {
    ThresholdCycle {
        first,
        last,
        onset: records[first].timestamp,
        offset: records[last].timestamp + 1,
    }
}

/// A maximal stretch of moving runs inside a transition sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeCycle {
    pub runs: Range<usize>,
    pub onset: i64,
    pub offset: i64,
}

impl ModeCycle {
    /// True when a static run precedes and follows the cycle.
    pub fn is_flanked(&self, seq: &TransitionSequence) -> bool {
        self.runs.start > 0 && self.runs.end < seq.len()
    }

    /// Cycle modes with one flanking static mode on each side.
    pub fn pattern(&self, seq: &TransitionSequence) -> Option<Vec<OperationMode>> {
        self.is_flanked(seq)
            .then(|| seq.runs[self.runs.start - 1..=self.runs.end].iter().map(|r| r.mode).collect())
    }
}

/// Cycles delimited by static modes in the (filtered) label sequence.
pub fn detect_cycles_modes(seq: &TransitionSequence) -> Vec<ModeCycle> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, r) in seq.runs.iter().enumerate() {
        match (r.mode.is_moving(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(mode_cycle(seq, s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(mode_cycle(seq, s, seq.len()));
    }
    out
}

fn mode_cycle(seq: &TransitionSequence, s: usize, e: usize) -> ModeCycle {
    ModeCycle {
        runs: s..e,
        onset: seq.runs[s].start,
        offset: seq.runs[e - 1].end,
    }
}

const NORMAL_SHORT: [OperationMode; 4] = [
    OperationMode::Idle,
    OperationMode::Operational,
    OperationMode::Active,
    OperationMode::Idle,
];
const NORMAL_LONG: [OperationMode; 5] = [
    OperationMode::Idle,
    OperationMode::Operational,
    OperationMode::Active,
    OperationMode::Operational,
    OperationMode::Idle,
];

/// Rule-based cycle class. The pattern must start and end with a static
/// mode; only the two canonical Idle-anchored sequences are normal.
pub fn classify_cycle_pattern(pattern: &[OperationMode]) -> Result<CycleClass> {
    let flanked = pattern.len() >= 2
        && pattern.first().is_some_and(|m| m.is_static())
        && pattern.last().is_some_and(|m| m.is_static());
    if !flanked {
        return Err(Error::UnflankedPattern);
    }
    if pattern == NORMAL_SHORT || pattern == NORMAL_LONG {
        Ok(CycleClass::Normal)
    } else {
        Ok(CycleClass::Abnormal)
    }
}

/// Fixed-length categorical vector: ordinal of the j-th mode, `Pad` after.
pub fn encode_transitions(pattern: &[OperationMode], slots: usize) -> Result<Vec<u8>> {
    if pattern.len() > slots {
        return Err(Error::TooManyTransitions {
            count: pattern.len(),
            slots,
        });
    }
    let mut out = vec![OperationMode::Pad.ordinal(); slots];
    for (o, m) in out.iter_mut().zip(pattern) {
        *o = m.ordinal();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use OperationMode::*;

    fn codes(v: &[u8]) -> Vec<OperationMode> {
        v.iter().map(|&c| OperationMode::from_ordinal(c).unwrap()).collect()
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_filter(&codes(&[1, 2, 1]), 3).unwrap(), codes(&[1, 1, 1]));
        assert_eq!(median_filter(&codes(&[2, 2, 2, 2]), 3).unwrap(), codes(&[2, 2, 2, 2]));
        let s = codes(&[1, 1, 2, 2, 1, 1]);
        assert_eq!(median_filter(&s, 3).unwrap(), s);
        assert!(median_filter(&s, 4).is_err());
        assert!(median_filter(&[], 3).unwrap().is_empty());
        assert_eq!(median_filter(&codes(&[3]), 5).unwrap(), codes(&[3]));
    }

    #[test]
    fn compress_examples() {
        let labels: Vec<(i64, OperationMode)> = [Idle, Idle, Operational, Operational, Idle]
            .into_iter()
            .enumerate()
            .map(|(i, m)| (100 + i as i64, m))
            .collect();
        let seq = compress_runs(&labels);
        assert_eq!(
            seq.runs,
            [
                Run { mode: Idle, start: 100, end: 102 },
                Run { mode: Operational, start: 102, end: 104 },
                Run { mode: Idle, start: 104, end: 105 },
            ]
        );
        assert_eq!(compress_runs(&[(5, Active)]).len(), 1);
        let alt: Vec<(i64, OperationMode)> = [Idle, Operational, Idle, Operational]
            .into_iter()
            .enumerate()
            .map(|(i, m)| (i as i64, m))
            .collect();
        assert_eq!(compress_runs(&alt).modes(), [Idle, Operational, Idle, Operational]);
    }

    fn speeds(v: &[f64]) -> Vec<SensorRecord> {
        v.iter()
            .enumerate()
            .map(|(i, &s)| SensorRecord::new(1000 + i as i64, "m", s, 50.0, 5.0))
            .collect()
    }

    #[test]
    fn threshold_examples() {
        let c = detect_cycles_threshold(&speeds(&[0.0, 0.0, 6.0, 40.0, 44.0, 3.0, 0.0]), 5.0);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].first, c[0].last, c[0].onset, c[0].offset), (2, 4, 1002, 1005));
        assert!(detect_cycles_threshold(&speeds(&[0.0, 4.9, 1.0]), 5.0).is_empty());
        let two = detect_cycles_threshold(&speeds(&[0.0, 6.0, 0.0, 6.0, 0.0]), 5.0);
        assert_eq!(two.iter().map(|c| (c.first, c.last)).collect::<Vec<_>>(), [(1, 1), (3, 3)]);
    }

    #[test]
    fn threshold_ignores_pressure() {
        let mut a = speeds(&[0.0, 10.0, 20.0, 0.0]);
        let b = detect_cycles_threshold(&a, 5.0);
        for (i, r) in a.iter_mut().enumerate() {
            r.high_pressure = 1000.0 * i as f64;
            r.low_pressure = 3.0;
        }
        assert_eq!(detect_cycles_threshold(&a, 5.0), b);
    }

    fn seq_of(modes: &[OperationMode]) -> TransitionSequence {
        let labels: Vec<(i64, OperationMode)> = modes.iter().enumerate().map(|(i, &m)| (i as i64 * 3, m)).collect();
        compress_runs(&labels)
    }

    #[test]
    fn mode_cycle_examples() {
        let s = seq_of(&[Idle, Operational, Active, Idle]);
        let c = detect_cycles_modes(&s);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].onset, c[0].offset), (3, 7));
        assert_eq!(c[0].pattern(&s).unwrap(), [Idle, Operational, Active, Idle]);
        assert!(detect_cycles_modes(&seq_of(&[Idle])).is_empty());
        assert_eq!(detect_cycles_modes(&seq_of(&[Idle, Operational, Idle, Operational, Idle])).len(), 2);
        let open = seq_of(&[Operational, Idle]);
        assert!(!detect_cycles_modes(&open)[0].is_flanked(&open));
    }

    #[test]
    fn pattern_examples() {
        assert_eq!(
            classify_cycle_pattern(&[Idle, Operational, Active, Operational, Idle]),
            Ok(CycleClass::Normal)
        );
        assert_eq!(classify_cycle_pattern(&[Idle, Operational, Active, Idle]), Ok(CycleClass::Normal));
        assert_eq!(classify_cycle_pattern(&[Idle, Operational, Idle]), Ok(CycleClass::Abnormal));
        assert_eq!(
            classify_cycle_pattern(&[Idle, Operational, Active, Operational, Active, Operational, Idle]),
            Ok(CycleClass::Abnormal)
        );
        assert_eq!(classify_cycle_pattern(&[Off, Operational, Active, Idle]), Ok(CycleClass::Abnormal));
        assert_eq!(classify_cycle_pattern(&[Operational, Active, Idle]), Err(Error::UnflankedPattern));
        assert_eq!(classify_cycle_pattern(&[]), Err(Error::UnflankedPattern));
    }

    #[test]
    fn encoder_examples() {
        let e = encode_transitions(&[Idle, Operational, Active, Idle], 20).unwrap();
        let mut want = vec![4u8; 20];
        want[..4].copy_from_slice(&[1, 2, 3, 1]);
        assert_eq!(e, want);
        let e = encode_transitions(&[Idle, Operational, Idle], 20).unwrap();
        assert_eq!(&e[..4], &[1, 2, 1, 4]);
        let long: Vec<OperationMode> = (0..21).map(|i| if i % 2 == 0 { Idle } else { Operational }).collect();
        assert_eq!(
            encode_transitions(&long, 20),
            Err(Error::TooManyTransitions { count: 21, slots: 20 })
        );
    }
}
