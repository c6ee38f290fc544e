//! Domain types shared by every stage: sensor records, operation modes and
//! duty-cycle events, plus series/event validation.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Per-minute machine state. `Pad` only fills unused transition-encoder slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum OperationMode {
    Off = 0,
    Idle = 1,
    Operational = 2,
    Active = 3,
    Pad = 4,
}

impl OperationMode {
    /// The four modes that can occur in a real series.
    pub const REAL: [OperationMode; 4] = [
        OperationMode::Off,
        OperationMode::Idle,
        OperationMode::Operational,
        OperationMode::Active,
    ];

    pub const fn ordinal(self) -> u8 {
        self as u8
    }

    pub const fn from_ordinal(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Off),
            1 => Some(Self::Idle),
            2 => Some(Self::Operational),
            3 => Some(Self::Active),
            4 => Some(Self::Pad),
            _ => None,
        }
    }

    /// Belt moving: Operational or Active.
    pub const fn is_moving(self) -> bool {
        matches!(self, Self::Operational | Self::Active)
    }

    /// Belt stationary: Off or Idle.
    pub const fn is_static(self) -> bool {
        matches!(self, Self::Off | Self::Idle)
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Off => "Off",
            Self::Idle => "Idle",
            Self::Operational => "Operational",
            Self::Active => "Active",
            Self::Pad => "Pad",
        }
    }
}

impl From<OperationMode> for u8 {
    fn from(m: OperationMode) -> u8 {
        m.ordinal()
    }
}

impl TryFrom<u8> for OperationMode {
    type Error = UnknownLabel;
    fn try_from(code: u8) -> Result<Self, UnknownLabel> {
        Self::from_ordinal(code).ok_or_else(|| UnknownLabel(alloc::format!("{code}")))
    }
}

impl fmt::Display for OperationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown label {:?}", self.0)
    }
}

impl FromStr for OperationMode {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, UnknownLabel> {
        let t = s.trim();
        for m in [
            Self::Off,
            Self::Idle,
            Self::Operational,
            Self::Active,
            Self::Pad,
        ] {
            if t.eq_ignore_ascii_case(m.as_str()) {
                return Ok(m);
            }
        }
        Err(UnknownLabel(String::from(t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleClass {
    Normal = 0,
    Abnormal = 1,
}

impl CycleClass {
    pub const ALL: [CycleClass; 2] = [CycleClass::Normal, CycleClass::Abnormal];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Self::Normal),
            1 => Some(Self::Abnormal),
            _ => None,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for CycleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CycleClass {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, UnknownLabel> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("normal") {
            Ok(Self::Normal)
        } else if t.eq_ignore_ascii_case("abnormal") {
            Ok(Self::Abnormal)
        } else {
            Err(UnknownLabel(String::from(t)))
        }
    }
}

/// One one-minute averaged reading. `timestamp` is in epoch minutes and the
/// sample covers `[timestamp, timestamp + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub timestamp: i64,
    pub month: String,
    /// rpm
    pub speed: f64,
    /// bar
    pub high_pressure: f64,
    /// bar
    pub low_pressure: f64,
    pub mode: Option<OperationMode>,
}

impl SensorRecord {
    pub fn new(timestamp: i64, month: &str, speed: f64, high_pressure: f64, low_pressure: f64) -> Self {
        Self {
            timestamp,
            month: String::from(month),
            speed,
            high_pressure,
            low_pressure,
            mode: None,
        }
    }

    pub fn with_mode(mut self, mode: OperationMode) -> Self {
        self.mode = Some(mode);
        self
    }
}

/// A duty cycle as a half-open minute interval `[onset, offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleEvent {
    pub onset: i64,
    pub offset: i64,
    pub class: CycleClass,
}

impl CycleEvent {
    pub fn new(onset: i64, offset: i64, class: CycleClass) -> Self {
        Self {
            onset,
            offset,
            class,
        }
    }

    pub fn duration(&self) -> i64 {
        self.offset - self.onset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    NegativeSpeed,
    NegativeHighPressure,
    NegativeLowPressure,
    NonFinite,
    NonIncreasingTimestamp,
    /// Spacing other than one minute inside a month.
    Gap { minutes: i64 },
    PadLabel,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NegativeSpeed => f.write_str("negative speed"),
            Self::NegativeHighPressure => f.write_str("negative high pressure"),
            Self::NegativeLowPressure => f.write_str("negative low pressure"),
            Self::NonFinite => f.write_str("non-finite value"),
            Self::NonIncreasingTimestamp => f.write_str("non-increasing timestamp"),
            Self::Gap { minutes } => write!(f, "gap of {minutes} minutes inside a month"),
            Self::PadLabel => f.write_str("pad label in ground truth"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_series(records: &[SensorRecord]) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |index, kind| violations.push(Violation { index, kind });
    for (i, r) in records.iter().enumerate() {
        if !(r.speed.is_finite() && r.high_pressure.is_finite() && r.low_pressure.is_finite()) {
            push(i, ViolationKind::NonFinite);
        }
        if r.speed < 0.0 {
            push(i, ViolationKind::NegativeSpeed);
        }
        if r.high_pressure < 0.0 {
            push(i, ViolationKind::NegativeHighPressure);
        }
        if r.low_pressure < 0.0 {
            push(i, ViolationKind::NegativeLowPressure);
        }
        if r.mode == Some(OperationMode::Pad) {
            push(i, ViolationKind::PadLabel);
        }
        if i > 0 {
            let prev = &records[i - 1];
            let step = r.timestamp - prev.timestamp;
            if step <= 0 {
                push(i, ViolationKind::NonIncreasingTimestamp);
            } else if step != 1 && prev.month == r.month {
                push(i, ViolationKind::Gap { minutes: step });
            }
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventViolation {
    OnsetNotBeforeOffset(usize),
    Overlap(usize),
}

impl fmt::Display for EventViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OnsetNotBeforeOffset(i) => write!(f, "onset >= offset at event {i}"),
            Self::Overlap(i) => write!(f, "overlapping reference cycles at event {i}"),
        }
    }
}

/// Events must have `onset < offset` and be time-ordered without overlap.
pub fn validate_events(events: &[CycleEvent]) -> Vec<EventViolation> {
    let mut out = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if e.onset >= e.offset {
            out.push(EventViolation::OnsetNotBeforeOffset(i));
        }
        if i > 0 && e.onset < events[i - 1].offset {
            out.push(EventViolation::Overlap(i));
        }
    }
    out
}

/// Splits a series into contiguous runs: one-minute spacing, same month.
pub fn segments(records: &[SensorRecord]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..records.len() {
        let (a, b) = (&records[i - 1], &records[i]);
        if b.timestamp - a.timestamp != 1 || a.month != b.month {
            out.push(start..i);
            start = i;
        }
    }
    if !records.is_empty() {
        out.push(start..records.len());
    }
    out
}

/// Distinct month tags in order of first appearance.
pub fn month_tags(records: &[SensorRecord]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in records {
        if out.last() != Some(&r.month) && !out.contains(&r.month) {
            out.push(r.month.clone());
        }
    }
    out
}
