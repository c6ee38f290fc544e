//! Incremental version of [`run_approach`](super::run_approach).
//!
//! Memory is bounded: the feature window, the median delay line and the
//! compressed pattern of the open cycle are the only per-minute state. The
//! output is identical to the batch run over the same records.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{label_pattern, MinutePrediction, PipelineConfig};
use crate::classifiers::Classifier;
use crate::datamodel::{CycleEvent, OperationMode, SensorRecord};
use crate::error::{Error, Result};
use crate::features::FeatureState;
use crate::pipeline::Approach;

#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Minute(MinutePrediction),
    Cycle(CycleEvent),
}

/// A cycle that was still open (or never saw a closing static mode) when
/// its segment ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingCycle {
    pub onset: i64,
    pub last_seen: i64,
}

#[derive(Debug, Clone, Copy)]
struct Item {
    timestamp: i64,
    speed: f64,
    predicted: OperationMode,
}

/// Centred median with replicate padding, delayed by half a window.
#[derive(Debug, Clone)]
struct MedianDelay {
    half: usize,
    /// Items from segment index `base` onwards.
    buf: VecDeque<Item>,
    base: usize,
    /// Items received in the segment.
    count: usize,
    /// Next segment index to emit.
    next: usize,
    scratch: Vec<u8>,
}

impl MedianDelay {
    fn new(window: usize) -> Self {
        MedianDelay {
            half: window / 2,
            buf: VecDeque::with_capacity(window + 1),
            base: 0,
            count: 0,
            next: 0,
            scratch: vec![0; window],
        }
    }

    fn reset(&mut self) {
        self.buf.clear();
        self.base = 0;
        self.count = 0;
        self.next = 0;
    }

    fn emit(&mut self, i: usize) -> (Item, OperationMode) {
        let last = self.count - 1;
        for k in 0..self.scratch.len() {
            let j = (i + k).saturating_sub(self.half).min(last);
            self.scratch[k] = self.buf[j - self.base].predicted.ordinal();
        }
        self.scratch.sort_unstable();
        let m = OperationMode::from_ordinal(self.scratch[self.half]).unwrap_or(OperationMode::Pad);
        let item = self.buf[i - self.base];
        self.next = i + 1;
        // the lowest index still needed is next - half
        while self.base + self.half < self.next && !self.buf.is_empty() {
            self.buf.pop_front();
            self.base += 1;
        }
        (item, m)
    }

    fn push(&mut self, item: Item) -> Option<(Item, OperationMode)> {
        self.buf.push_back(item);
        self.count += 1;
        (self.count > self.half).then(|| self.emit(self.count - 1 - self.half))
    }

    fn flush(&mut self) -> Vec<(Item, OperationMode)> {
        let mut out = Vec::new();
        while self.next < self.count {
            out.push(self.emit(self.next));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct OpenCycle {
    onset: i64,
    last: i64,
    flanked: bool,
    pattern: Vec<OperationMode>,
    overflow: bool,
}

/// Compressed pattern of the open cycle, capped at the longest pattern any
/// approach can tell apart from "too long".
#[derive(Debug, Clone)]
struct CycleTracker {
    cap: usize,
    prev: Option<OperationMode>,
    open: Option<OpenCycle>,
}

impl CycleTracker {
    fn new(cap: usize) -> Self {
        CycleTracker {
            cap,
            prev: None,
            open: None,
        }
    }

    fn reset(&mut self) -> Option<PendingCycle> {
        self.prev = None;
        self.open.take().map(|c| PendingCycle {
            onset: c.onset,
            last_seen: c.last,
        })
    }

    fn push_mode(cycle: &mut OpenCycle, m: OperationMode, cap: usize) {
        if cycle.pattern.last() == Some(&m) || cycle.overflow {
            return;
        }
        if cycle.pattern.len() == cap {
            cycle.overflow = true;
        } else {
            cycle.pattern.push(m);
        }
    }

    /// Feeds one filtered minute; returns a closed cycle with its pattern
    /// (None pattern when overflowed) if one ends here.
    fn push(&mut self, moving: bool, ts: i64, m: OperationMode) -> Option<(i64, i64, Option<Vec<OperationMode>>)> {
        let mut closed = None;
        if moving {
            let cycle = self.open.get_or_insert_with(|| OpenCycle {
                onset: ts,
                last: ts,
                flanked: self.prev.is_some(),
                pattern: self.prev.into_iter().collect(),
                overflow: false,
            });
            Self::push_mode(cycle, m, self.cap);
            cycle.last = ts;
        } else if let Some(mut cycle) = self.open.take() {
            Self::push_mode(&mut cycle, m, self.cap);
            if cycle.flanked {
                let pattern = (!cycle.overflow).then_some(cycle.pattern);
                closed = Some((cycle.onset, cycle.last + 1, pattern));
            }
        }
        self.prev = Some(m);
        closed
    }
}

/// Online detector fed one record at a time.
pub struct StreamingPipeline<'a> {
    config: PipelineConfig,
    mode_model: &'a dyn Classifier,
    duty_model: Option<&'a dyn Classifier>,
    features: FeatureState,
    last: Option<(i64, String)>,
    median: MedianDelay,
    tracker: CycleTracker,
    pending: Vec<PendingCycle>,
}

impl<'a> StreamingPipeline<'a> {
    pub fn new(
        config: PipelineConfig,
        mode_model: &'a dyn Classifier,
        duty_model: Option<&'a dyn Classifier>,
    ) -> Result<Self> {
        config.validate()?;
        if config.approach.needs_duty_model() && duty_model.is_none() {
            return Err(Error::InvalidConfig("approach 3 needs a duty-cycle model".into()));
        }
        Ok(StreamingPipeline {
            config,
            mode_model,
            duty_model,
            features: FeatureState::new(),
            last: None,
            median: MedianDelay::new(config.median_window),
            tracker: CycleTracker::new(config.encoder_slots.max(5) + 1),
            pending: Vec::new(),
        })
    }

    /// Cycles cut short by a gap or month change so far.
    pub fn interrupted(&self) -> &[PendingCycle] {
        &self.pending
    }

    pub fn push(&mut self, record: &SensorRecord) -> Result<Vec<StreamEvent>> {
        let mut out = Vec::new();
        let contiguous = self
            .last
            .as_ref()
            .is_some_and(|(ts, month)| record.timestamp == ts + 1 && *month == record.month);
        if !contiguous && self.last.is_some() {
            self.end_segment(&mut out)?;
        }
        self.last = Some((record.timestamp, record.month.clone()));
        let f = self.features.push(record);
        let c = self.mode_model.predict_class(f.as_slice())?;
        let predicted = u8::try_from(c)
            .ok()
            .and_then(OperationMode::from_ordinal)
            .filter(|m| *m != OperationMode::Pad)
            .ok_or(Error::InvalidParameter(alloc::format!("mode model produced class {c}")))?;
        let item = Item {
            timestamp: record.timestamp,
            speed: record.speed,
            predicted,
        };
        if let Some((item, filtered)) = self.median.push(item) {
            self.process(item, filtered, &mut out)?;
        }
        Ok(out)
    }

    /// Drains the delay line. The open cycle, if any, is returned as pending.
    pub fn finish(&mut self) -> Result<(Vec<StreamEvent>, Option<PendingCycle>)> {
        let mut out = Vec::new();
        for (item, filtered) in self.median.flush() {
            self.process(item, filtered, &mut out)?;
        }
        let pending = self.tracker.reset();
        self.median.reset();
        self.features.reset();
        self.last = None;
        Ok((out, pending))
    }

    fn end_segment(&mut self, out: &mut Vec<StreamEvent>) -> Result<()> {
        for (item, filtered) in self.median.flush() {
            self.process(item, filtered, out)?;
        }
        if let Some(p) = self.tracker.reset() {
            self.pending.push(p);
        }
        self.median.reset();
        self.features.reset();
        Ok(())
    }

    fn process(&mut self, item: Item, filtered: OperationMode, out: &mut Vec<StreamEvent>) -> Result<()> {
        out.push(StreamEvent::Minute(MinutePrediction {
            timestamp: item.timestamp,
            predicted: item.predicted,
            filtered,
        }));
        let moving = match self.config.approach {
            Approach::ModeRules => filtered.is_moving(),
            _ => item.speed > self.config.speed_threshold,
        };
        if let Some((onset, offset, pattern)) = self.tracker.push(moving, item.timestamp, filtered) {
            let class = match pattern {
                Some(p) => label_pattern(&self.config, self.duty_model, &p)?,
                None => crate::datamodel::CycleClass::Abnormal,
            };
            out.push(StreamEvent::Cycle(CycleEvent::new(onset, offset, class)));
        }
        Ok(())
    }
}
