//! Event-based scoring and the leave-one-month-out harness.

pub mod loocv;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datamodel::{validate_events, CycleClass, CycleEvent, EventViolation};
use crate::error::{Error, Result};

pub use loocv::{holdout_run, loocv_run, FoldResult, LoocvConfig, LoocvReport, MetricRow, ModelChoice, SummaryRow};

pub const DEFAULT_TOLERANCE_SECONDS: f64 = 202.75;

/// Maximum onset and offset deviation for a match, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Tolerance {
    seconds: f64,
}

impl Tolerance {
    pub fn new(seconds: f64) -> Result<Self> {
        if seconds.is_finite() && seconds > 0.0 {
            Ok(Tolerance { seconds })
        } else {
            Err(Error::InvalidParameter(alloc::format!(
                "tolerance must be a positive number of seconds, got {seconds}"
            )))
        }
    }

    pub fn seconds(self) -> f64 {
        self.seconds
    }

    /// Whether two minute timestamps are close enough.
    pub fn admits(self, a_min: i64, b_min: i64) -> bool {
        ((a_min - b_min).abs() as f64) * 60.0 <= self.seconds
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            seconds: DEFAULT_TOLERANCE_SECONDS,
        }
    }
}

impl TryFrom<f64> for Tolerance {
    type Error = Error;

    fn try_from(s: f64) -> Result<Self> {
        Tolerance::new(s)
    }
}

impl From<Tolerance> for f64 {
    fn from(t: Tolerance) -> f64 {
        t.seconds
    }
}

/// True positives, insertions and deletions per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: [usize; 2],
    pub fp: [usize; 2],
    pub fn_: [usize; 2],
}

impl EvalCounts {
    pub fn add(&mut self, other: &EvalCounts) {
        for c in 0..2 {
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            self.fn_[c] += other.fn_[c];
        }
    }

    pub fn class(&self, c: CycleClass) -> (usize, usize, usize) {
        let i = c.index();
        (self.tp[i], self.fp[i], self.fn_[i])
    }

    pub fn pooled(&self) -> (usize, usize, usize) {
        (
            self.tp.iter().sum(),
            self.fp.iter().sum(),
            self.fn_.iter().sum(),
        )
    }

    /// Number of reference events counted.
    pub fn n_reference(&self) -> usize {
        self.tp.iter().sum::<usize>() + self.fn_.iter().sum::<usize>()
    }
}

/// `2TP / (2TP + FP + FN)`, zero when all counts are zero.
pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        (2 * tp) as f64 / den as f64
    }
}

pub fn f1_per_class(counts: &EvalCounts) -> [f64; 2] {
    [
        f1(counts.tp[0], counts.fp[0], counts.fn_[0]),
        f1(counts.tp[1], counts.fp[1], counts.fn_[1]),
    ]
}

pub fn micro_f1(counts: &EvalCounts) -> f64 {
    let (tp, fp, fn_) = counts.pooled();
    f1(tp, fp, fn_)
}

fn check_ordered(events: &[CycleEvent]) -> Result<()> {
    match validate_events(events).first() {
        None => Ok(()),
        Some(EventViolation::OnsetNotBeforeOffset(i) | EventViolation::Overlap(i)) => {
            Err(Error::OverlappingEvents(*i))
        }
    }
}

/// Greedy first-fit matching of two onset-ordered event lists. Returns the
/// matched `(reference, predicted)` index pairs.
fn greedy(reference: &[&CycleEvent], predicted: &[&CycleEvent], tol: Tolerance) -> Vec<(usize, usize)> {
    let mut used = vec![false; predicted.len()];
    let mut pairs = Vec::new();
    let mut lo = 0;
    for (ri, r) in reference.iter().enumerate() {
        // predictions whose onset is too early for this reference are too
        // early for every later one as well
        while lo < predicted.len() && predicted[lo].onset < r.onset && !tol.admits(predicted[lo].onset, r.onset) {
            lo += 1;
        }
        for pi in lo..predicted.len() {
            let p = predicted[pi];
            if p.onset > r.onset && !tol.admits(p.onset, r.onset) {
                break;
            }
            if !used[pi] && tol.admits(p.onset, r.onset) && tol.admits(p.offset, r.offset) {
                used[pi] = true;
                pairs.push((ri, pi));
                break;
            }
        }
    }
    pairs
}

/// Class-insensitive matched `(reference, predicted)` index pairs.
pub fn match_pairs(reference: &[CycleEvent], predicted: &[CycleEvent], tol: Tolerance) -> Result<Vec<(usize, usize)>> {
    check_ordered(reference)?;
    check_ordered(predicted)?;
    let refs: Vec<&CycleEvent> = reference.iter().collect();
    let preds: Vec<&CycleEvent> = predicted.iter().collect();
    Ok(greedy(&refs, &preds, tol))
}

/// Scores `predicted` against `reference`. Class-sensitive matching only
/// pairs events of the same class; otherwise classes are ignored for
/// matching and counts are booked under the reference class (TP, FN) or
/// predicted class (FP).
pub fn match_events(
    reference: &[CycleEvent],
    predicted: &[CycleEvent],
    tol: Tolerance,
    class_sensitive: bool,
) -> Result<EvalCounts> {
    check_ordered(reference)?;
    check_ordered(predicted)?;
    let mut counts = EvalCounts::default();
    let groups: Vec<Option<CycleClass>> = if class_sensitive {
        CycleClass::ALL.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    for class in groups {
        let refs: Vec<&CycleEvent> = reference.iter().filter(|e| class.is_none_or(|c| e.class == c)).collect();
        let preds: Vec<&CycleEvent> = predicted.iter().filter(|e| class.is_none_or(|c| e.class == c)).collect();
        let pairs = greedy(&refs, &preds, tol);
        let mut ref_used = vec![false; refs.len()];
        let mut pred_used = vec![false; preds.len()];
        for &(r, p) in &pairs {
            ref_used[r] = true;
            pred_used[p] = true;
            counts.tp[refs[r].class.index()] += 1;
        }
        for (e, used) in refs.iter().zip(&ref_used) {
            if !used {
                counts.fn_[e.class.index()] += 1;
            }
        }
        for (e, used) in preds.iter().zip(&pred_used) {
            if !used {
                counts.fp[e.class.index()] += 1;
            }
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use CycleClass::*;

    fn ev(on: i64, off: i64, c: CycleClass) -> CycleEvent {
        CycleEvent::new(on, off, c)
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerance::new(0.0).is_err());
        assert!(Tolerance::new(-1.0).is_err());
        assert!(Tolerance::new(f64::NAN).is_err());
        assert_eq!(Tolerance::default().seconds(), 202.75);
        let t = Tolerance::default();
        assert!(t.admits(0, 3));
        assert!(!t.admits(0, 4));
    }

    #[test]
    fn match_examples() {
        let t = Tolerance::default();
        let r = [ev(1000, 1020, Normal)];
        let c = match_events(&r, &[ev(1002, 1019, Normal)], t, true).unwrap();
        assert_eq!(c.tp, [1, 0]);
        let c = match_events(&r, &[ev(1002, 1019, Abnormal)], t, true).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), ([0, 0], [0, 1], [1, 0]));
        let c = match_events(&r, &[ev(1002, 1019, Abnormal)], t, false).unwrap();
        assert_eq!(c.tp, [1, 0]);
        // five minutes = 300 s
        let c = match_events(&r, &[ev(1005, 1020, Normal)], t, true).unwrap();
        assert_eq!(c.tp, [0, 0]);
        let c = match_events(&r, &[ev(1000, 1025, Normal)], t, true).unwrap();
        assert_eq!(c.tp, [0, 0]);
    }

    #[test]
    fn overlapping_inputs_rejected() {
        let bad = [ev(0, 10, Normal), ev(5, 20, Normal)];
        assert_eq!(
            match_events(&bad, &[], Tolerance::default(), true),
            Err(Error::OverlappingEvents(1))
        );
        assert!(match_events(&[], &bad, Tolerance::default(), false).is_err());
    }

    #[test]
    fn f1_examples() {
        assert!((f1(2, 1, 1) - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(f1(0, 0, 0), 0.0);
        let c = EvalCounts {
            tp: [8, 2],
            fp: [2, 1],
            fn_: [2, 1],
        };
        assert!((micro_f1(&c) - 20.0 / 26.0).abs() < 1e-15);
    }

    #[test]
    fn reference_used_once() {
        let t = Tolerance::default();
        let c = match_events(&[ev(100, 120, Normal)], &[ev(100, 120, Normal), ev(121, 122, Normal)], t, true);
        assert_eq!(c.unwrap().tp, [1, 0]);
    }

    fn arb_events() -> impl Strategy<Value = Vec<CycleEvent>> {
        prop::collection::vec((1i64..8, 1i64..25, any::<bool>()), 0..25).prop_map(|v| {
            let mut t = 0;
            v.into_iter()
                .map(|(gap, len, ab)| {
                    let e = ev(t + gap, t + gap + len, if ab { Abnormal } else { Normal });
                    t = e.offset;
                    e
                })
                .collect()
        })
    }

    /// Maximum bipartite matching by augmenting paths.
    fn max_matching(a: &[CycleEvent], b: &[CycleEvent], tol: Tolerance, cs: bool) -> usize {
        fn aug(u: usize, adj: &[Vec<usize>], seen: &mut [bool], m: &mut [Option<usize>]) -> bool {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    if m[v].is_none_or(|w| aug(w, adj, seen, m)) {
                        m[v] = Some(u);
                        return true;
                    }
                }
            }
            false
        }
        let adj: Vec<Vec<usize>> = a
            .iter()
            .map(|r| {
                (0..b.len())
                    .filter(|&j| {
                        (!cs || b[j].class == r.class)
                            && tol.admits(b[j].onset, r.onset)
                            && tol.admits(b[j].offset, r.offset)
                    })
                    .collect()
            })
            .collect();
        let mut m = vec![None; b.len()];
        (0..a.len()).filter(|&u| aug(u, &adj, &mut vec![false; b.len()], &mut m)).count()
    }

    proptest! {
        #[test]
        fn greedy_is_maximum(r in arb_events(), p in arb_events(), cs in any::<bool>()) {
            let t = Tolerance::default();
            let c = match_events(&r, &p, t, cs).unwrap();
            prop_assert_eq!(c.pooled().0, max_matching(&r, &p, t, cs));
        }

        #[test]
        fn swap_symmetry(r in arb_events(), p in arb_events(), cs in any::<bool>()) {
            let t = Tolerance::default();
            let a = match_events(&r, &p, t, cs).unwrap();
            let b = match_events(&p, &r, t, cs).unwrap();
            prop_assert_eq!(a.pooled().0, b.pooled().0);
            prop_assert_eq!(a.pooled().1, b.pooled().2);
            prop_assert_eq!(a.pooled().2, b.pooled().1);
            if cs {
                prop_assert_eq!(a.tp, b.tp);
                prop_assert_eq!(a.fp, b.fn_);
            }
        }

        #[test]
        fn tolerance_monotone(r in arb_events(), p in arb_events()) {
            let mut last = 0;
            for s in [60.0, 202.75, 600.0] {
                let tp = match_events(&r, &p, Tolerance::new(s).unwrap(), true).unwrap().pooled().0;
                prop_assert!(tp >= last);
                last = tp;
            }
        }

        #[test]
        fn tp_bounded(r in arb_events(), p in arb_events()) {
            let c = match_events(&r, &p, Tolerance::default(), true).unwrap();
            for cl in CycleClass::ALL {
                let nr = r.iter().filter(|e| e.class == cl).count();
                let np = p.iter().filter(|e| e.class == cl).count();
                prop_assert!(c.class(cl).0 <= nr.min(np));
                prop_assert_eq!(c.class(cl).0 + c.class(cl).2, nr);
                prop_assert_eq!(c.class(cl).0 + c.class(cl).1, np);
            }
        }
    }
}
