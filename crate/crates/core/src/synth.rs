//! Labelled synthetic belt data.
//!
//! Each month is a sequence of duty cycles separated by Idle (sometimes Off)
//! stretches. A cycle is a script of modes with lognormal dwell times; each
//! minute draws speed and pressures from the mode's Gaussian emission, with
//! the month's pressure drift applied on top.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{validate_events, validate_series, CycleClass, CycleEvent, OperationMode, SensorRecord};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

use OperationMode::{Active, Idle, Off, Operational};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub mean: f64,
    pub std: f64,
}

impl Emission {
    pub const fn new(mean: f64, std: f64) -> Self {
        Emission { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEmission {
    pub speed: Emission,
    pub high_pressure: Emission,
    pub low_pressure: Emission,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emissions {
    pub off: ModeEmission,
    pub idle: ModeEmission,
    pub operational: ModeEmission,
    pub active: ModeEmission,
}

impl Emissions {
    pub fn get(&self, m: OperationMode) -> &ModeEmission {
        match m {
            Off | OperationMode::Pad => &self.off,
            Idle => &self.idle,
            Operational => &self.operational,
            Active => &self.active,
        }
    }

    fn all_mut(&mut self) -> [&mut ModeEmission; 4] {
        [&mut self.off, &mut self.idle, &mut self.operational, &mut self.active]
    }

    /// Same means, zero spread.
    pub fn noiseless(mut self) -> Self {
        for e in self.all_mut() {
            e.speed.std = 0.0;
            e.high_pressure.std = 0.0;
            e.low_pressure.std = 0.0;
        }
        self
    }
}

impl Default for Emissions {
    fn default() -> Self {
        let e = |speed: (f64, f64), hp: (f64, f64), lp: (f64, f64)| ModeEmission {
            speed: Emission::new(speed.0, speed.1),
            high_pressure: Emission::new(hp.0, hp.1),
            low_pressure: Emission::new(lp.0, lp.1),
        };
        Emissions {
            off: e((0.0, 0.3), (2.0, 1.0), (1.0, 0.5)),
            idle: e((0.0, 0.3), (30.0, 4.0), (8.0, 1.0)),
            operational: e((45.0, 1.5), (80.0, 8.0), (12.0, 1.5)),
            active: e((45.0, 1.5), (160.0, 12.0), (15.0, 2.0)),
        }
    }
}

/// One month tag and its pressure drift: `p' = p * scale + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthSpec {
    pub tag: String,
    pub high_offset: f64,
    pub low_offset: f64,
    pub scale: f64,
}

impl MonthSpec {
    pub fn plain(tag: &str) -> Self {
        MonthSpec {
            tag: tag.into(),
            high_offset: 0.0,
            low_offset: 0.0,
            scale: 1.0,
        }
    }

    pub fn drifted(tag: &str, high_offset: f64, low_offset: f64, scale: f64) -> Self {
        MonthSpec {
            tag: tag.into(),
            high_offset,
            low_offset,
            scale,
        }
    }
}

/// Lognormal dwell time given by its median (minutes) and log-space sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dwell {
    pub median: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Four undrifted months.
    Baseline,
    /// Six months whose pressures drift up and back down.
    Drift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_cycles: usize,
    pub p_abnormal: f64,
    pub months: Vec<MonthSpec>,
    pub start_timestamp: i64,
    /// Minutes without data between consecutive months.
    pub month_gap_minutes: i64,
    /// Idle minutes before the first and after the last cycle of a month.
    pub lead_in_minutes: usize,
    pub emissions: Emissions,
    pub dwell_operational: Dwell,
    pub dwell_active: Dwell,
    pub min_dwell_minutes: usize,
    pub min_normal_cycle_minutes: usize,
    /// Inclusive range of idle minutes between cycles.
    pub idle_between: (usize, usize),
    pub p_off_between: f64,
    pub off_between: (usize, usize),
    /// Probability that a normal cycle returns through Operational.
    pub p_tail_operational: f64,
    /// Transition minutes average the two neighbouring modes' pressures.
    pub blend_transitions: bool,
    /// Spread of the per-cycle load factor applied to moving-mode pressures.
    pub cycle_load_sigma: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::preset(Preset::Baseline, 0)
    }
}

impl GeneratorConfig {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let months = match preset {
            Preset::Baseline => ["2021-06", "2021-07", "2021-08", "2021-09"].map(MonthSpec::plain).to_vec(),
            Preset::Drift => [
                ("2022-01", 0.0, 0.0, 1.0),
                ("2022-02", 10.0, 1.0, 1.05),
                ("2022-03", 20.0, 2.0, 1.10),
                ("2022-04", 30.0, 3.0, 1.15),
                ("2022-05", 20.0, 2.0, 1.10),
                ("2022-06", 10.0, 1.0, 1.05),
            ]
            .map(|(t, h, l, s)| MonthSpec::drifted(t, h, l, s))
            .to_vec(),
        };
        let n_cycles = 150 * months.len();
        GeneratorConfig {
            seed,
            n_cycles,
            p_abnormal: 0.177,
            months,
            start_timestamp: 26_838_000,
            month_gap_minutes: 1440,
            lead_in_minutes: 30,
            emissions: Emissions::default(),
            dwell_operational: Dwell { median: 4.0, sigma: 0.4 },
            dwell_active: Dwell { median: 12.0, sigma: 0.4 },
            min_dwell_minutes: 2,
            min_normal_cycle_minutes: 14,
            idle_between: (20, 90),
            p_off_between: 0.2,
            off_between: (10, 60),
            p_tail_operational: 0.7,
            blend_transitions: true,
            cycle_load_sigma: 0.08,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(0.0..=1.0).contains(&self.p_abnormal) {
            return bad("p_abnormal must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.p_off_between) || !(0.0..=1.0).contains(&self.p_tail_operational) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.min_normal_cycle_minutes < 14 {
            return bad("min_normal_cycle_minutes must be at least 14");
        }
        if self.months.is_empty() {
            return bad("at least one month is required");
        }
        if self.min_dwell_minutes == 0 {
            return bad("min_dwell_minutes must be at least 1");
        }
        if self.idle_between.0 < 2 * self.min_dwell_minutes.max(3) || self.idle_between.0 > self.idle_between.1 {
            return bad("idle_between must be an ordered range leaving room for an Off stretch");
        }
        if self.off_between.0 == 0 || self.off_between.0 > self.off_between.1 {
            return bad("off_between must be an ordered range of positive lengths");
        }
        if !(self.cycle_load_sigma.is_finite() && self.cycle_load_sigma >= 0.0) {
            return bad("cycle_load_sigma must be non-negative");
        }
        if self.lead_in_minutes < 3 {
            return bad("lead_in_minutes must be at least 3");
        }
        for d in [self.dwell_operational, self.dwell_active] {
            if !(d.median > 0.0 && d.sigma >= 0.0 && d.median.is_finite() && d.sigma.is_finite()) {
                return bad("dwell medians must be positive and sigmas non-negative");
            }
        }
        for e in [self.emissions.off, self.emissions.idle, self.emissions.operational, self.emissions.active] {
            for v in [e.speed, e.high_pressure, e.low_pressure] {
                if !(v.mean.is_finite() && v.std.is_finite() && v.std >= 0.0) {
                    return bad("emission means must be finite and spreads non-negative");
                }
            }
        }
        for m in &self.months {
            if !(m.scale.is_finite() && m.scale > 0.0 && m.high_offset.is_finite() && m.low_offset.is_finite()) {
                return bad("month drift must be finite with a positive scale");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { config: GeneratorConfig },
    Ingested { sensors: String, events: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<SensorRecord>,
    pub reference_cycles: Vec<CycleEvent>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Checks the series and event invariants and that every reference
    /// cycle lies inside the recorded time span.
    pub fn validate(&self) -> Result<()> {
        let report = validate_series(&self.records);
        if let Some(v) = report.violations.first() {
            return Err(Error::InvalidParameter(alloc::format!("record {}: {}", v.index, v.kind)));
        }
        if let Some(v) = validate_events(&self.reference_cycles).first() {
            return Err(Error::InvalidParameter(alloc::format!("{v}")));
        }
        if let (Some(first), Some(last)) = (self.records.first(), self.records.last()) {
            let outside = self
                .reference_cycles
                .iter()
                .position(|e| e.onset < first.timestamp || e.offset > last.timestamp + 1);
            if let Some(i) = outside {
                return Err(Error::InvalidParameter(alloc::format!(
                    "reference cycle {i} lies outside the recorded span"
                )));
            }
        } else if !self.reference_cycles.is_empty() {
            return Err(Error::InvalidParameter("reference cycles without records".into()));
        }
        Ok(())
    }

    /// Records and reference cycles of the given months.
    pub fn select_months(&self, months: &[String]) -> Dataset {
        let records: Vec<SensorRecord> = self.records.iter().filter(|r| months.contains(&r.month)).cloned().collect();
        let reference_cycles = self
            .reference_cycles
            .iter()
            .filter(|e| records.binary_search_by_key(&e.onset, |r| r.timestamp).is_ok())
            .copied()
            .collect();
        Dataset {
            records,
            reference_cycles,
            provenance: self.provenance.clone(),
        }
    }
}

/// The interior (moving) part of a cycle with its flanking static modes.
#[derive(Debug, Clone, PartialEq)]
struct Script {
    before: OperationMode,
    interior: Vec<OperationMode>,
    after: OperationMode,
}

fn alternating(start: OperationMode, len: usize) -> Vec<OperationMode> {
    (0..len)
        .map(|i| match (start, i % 2) {
            (Operational, 0) | (Active, 1) => Operational,
            _ => Active,
        })
        .collect()
}

fn normal_script(cfg: &GeneratorConfig, r: &mut Rng) -> Script {
    let mut interior = vec![Operational, Active];
    if r.random_bool(cfg.p_tail_operational) {
        interior.push(Operational);
    }
    Script {
        before: Idle,
        interior,
        after: Idle,
    }
}

fn abnormal_script(r: &mut Rng) -> Script {
    let idle = |interior: Vec<OperationMode>| Script {
        before: Idle,
        interior,
        after: Idle,
    };
    match r.random_range(0..9) {
        0 => idle(vec![Operational]),
        1 => idle(vec![Active]),
        2 => idle(vec![Active, Operational]),
        3 => idle(alternating(Operational, 4)),
        4 => idle(alternating(Operational, 5)),
        5 => idle(alternating(Operational, r.random_range(6..=13))),
        6 => Script {
            before: Off,
            interior: vec![Operational, Active, Operational],
            after: Idle,
        },
        7 => Script {
            before: Idle,
            interior: vec![Operational, Active, Operational],
            after: Off,
        },
        _ => Script {
            before: Off,
            interior: vec![Operational, Active],
            after: Off,
        },
    }
}

fn dwell(d: Dwell, min: usize, r: &mut Rng) -> usize {
    let ln = LogNormal::new(libm::log(d.median), d.sigma).unwrap_or_else(|_| LogNormal::new(0.0, 0.0).unwrap());
    (libm::round(ln.sample(r)) as usize).max(min)
}

fn sample(e: Emission, r: &mut Rng) -> f64 {
    let z: f64 = StandardNormal.sample(r);
    e.mean + e.std * z
}

fn round2(v: f64) -> f64 {
    libm::round(v * 100.0) / 100.0
}

struct MonthWriter<'a> {
    cfg: &'a GeneratorConfig,
    month: &'a MonthSpec,
    ts: i64,
    records: Vec<SensorRecord>,
    labels: Vec<OperationMode>,
    loads: Vec<f64>,
}

impl MonthWriter<'_> {
    fn push(&mut self, mode: OperationMode, minutes: usize) {
        self.push_loaded(mode, minutes, 1.0);
    }

    fn push_loaded(&mut self, mode: OperationMode, minutes: usize, load: f64) {
        self.labels.extend(core::iter::repeat_n(mode, minutes));
        self.loads.extend(core::iter::repeat_n(load, minutes));
    }

    /// Emits the labelled minutes as records.
    fn render(mut self, r: &mut Rng) -> Vec<SensorRecord> {
        let m = self.month;
        for i in 0..self.labels.len() {
            let mode = self.labels[i];
            let e = self.cfg.emissions.get(mode);
            let load = self.loads[i];
            let speed = sample(e.speed, r);
            let mut hp = sample(e.high_pressure, r) * load;
            let mut lp = sample(e.low_pressure, r) * load;
            if self.cfg.blend_transitions && i > 0 && self.labels[i - 1] != mode {
                let prev = self.cfg.emissions.get(self.labels[i - 1]);
                let prev_load = self.loads[i - 1];
                let a: f64 = r.random();
                hp = a * hp + (1.0 - a) * sample(prev.high_pressure, r) * prev_load;
                lp = a * lp + (1.0 - a) * sample(prev.low_pressure, r) * prev_load;
            }
            hp = hp * m.scale + m.high_offset;
            lp = lp * m.scale + m.low_offset;
            let rec = SensorRecord::new(
                self.ts,
                &m.tag,
                round2(speed.max(0.0)),
                round2(hp.max(0.0)),
                round2(lp.max(0.0)),
            )
            .with_mode(mode);
            self.records.push(rec);
            self.ts += 1;
        }
        self.records
    }
}

/// Deterministic dataset for `cfg`.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut structure = rng::stream(cfg.seed, 0);
    let mut noise = rng::stream(cfg.seed, 1);
    let n_months = cfg.months.len();
    let mut records = Vec::new();
    let mut events = Vec::new();
    let mut ts = cfg.start_timestamp;
    for (mi, month) in cfg.months.iter().enumerate() {
        let n = cfg.n_cycles / n_months + usize::from(mi < cfg.n_cycles % n_months);
        let mut w = MonthWriter {
            cfg,
            month,
            ts,
            records: Vec::new(),
            labels: Vec::new(),
            loads: Vec::new(),
        };
        w.push(Idle, cfg.lead_in_minutes);
        for c in 0..n {
            let abnormal = structure.random_bool(cfg.p_abnormal);
            let script = if abnormal {
                abnormal_script(&mut structure)
            } else {
                normal_script(cfg, &mut structure)
            };
            // gap before the cycle; it has to end in the script's left flank
            if c > 0 || script.before == Off {
                let idle = structure.random_range(cfg.idle_between.0..=cfg.idle_between.1);
                if script.before == Off {
                    w.push(Idle, 3);
                    w.push(Off, structure.random_range(cfg.off_between.0..=cfg.off_between.1));
                } else if structure.random_bool(cfg.p_off_between) {
                    let head = structure.random_range(cfg.min_dwell_minutes.max(3)..=idle / 2);
                    w.push(Idle, head);
                    w.push(Off, structure.random_range(cfg.off_between.0..=cfg.off_between.1));
                    w.push(Idle, idle - head);
                } else {
                    w.push(Idle, idle);
                }
            }
            let mut dwells: Vec<usize> = script
                .interior
                .iter()
                .map(|&m| {
                    let d = if m == Active { cfg.dwell_active } else { cfg.dwell_operational };
                    dwell(d, cfg.min_dwell_minutes, &mut structure)
                })
                .collect();
            if !abnormal {
                let total: usize = dwells.iter().sum();
                if total < cfg.min_normal_cycle_minutes {
                    dwells[1] += cfg.min_normal_cycle_minutes - total;
                }
            }
            let z: f64 = StandardNormal.sample(&mut structure);
            let load = (1.0 + cfg.cycle_load_sigma * z).max(0.1);
            let onset = ts + w.labels.len() as i64;
            for (&m, &d) in script.interior.iter().zip(&dwells) {
                w.push_loaded(m, d, load);
            }
            let offset = ts + w.labels.len() as i64;
            events.push(CycleEvent::new(
                onset,
                offset,
                if abnormal { CycleClass::Abnormal } else { CycleClass::Normal },
            ));
            if script.after == Off {
                w.push(Off, structure.random_range(cfg.off_between.0..=cfg.off_between.1));
            }
        }
        w.push(Idle, cfg.lead_in_minutes);
        let month_records = w.render(&mut noise);
        ts = month_records.last().map_or(ts, |r| r.timestamp + 1) + cfg.month_gap_minutes;
        records.extend(month_records);
    }
    Ok(Dataset {
        records,
        reference_cycles: events,
        provenance: Provenance::Synthetic { config: cfg.clone() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{classify_cycle_pattern, dedup_modes};

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_cycles: 80,
            ..GeneratorConfig::preset(Preset::Drift, seed)
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_dataset(&small(4)).unwrap(), generate_dataset(&small(4)).unwrap());
        assert_ne!(generate_dataset(&small(4)).unwrap(), generate_dataset(&small(5)).unwrap());
    }

    #[test]
    fn valid_and_ordered() {
        let cfg = small(1);
        let d = generate_dataset(&cfg).unwrap();
        d.validate().unwrap();
        assert_eq!(d.reference_cycles.len(), 80);
        assert_eq!(crate::datamodel::month_tags(&d.records).len(), cfg.months.len());
    }

    #[test]
    fn all_normal_when_p_zero() {
        let cfg = GeneratorConfig {
            p_abnormal: 0.0,
            ..small(2)
        };
        let d = generate_dataset(&cfg).unwrap();
        assert!(d.reference_cycles.iter().all(|e| e.class == CycleClass::Normal));
    }

    #[test]
    fn abnormal_fraction_near_target() {
        let cfg = GeneratorConfig {
            n_cycles: 600,
            ..GeneratorConfig::preset(Preset::Baseline, 9)
        };
        let d = generate_dataset(&cfg).unwrap();
        let ab = d.reference_cycles.iter().filter(|e| e.class == CycleClass::Abnormal).count();
        let frac = ab as f64 / 600.0;
        assert!((frac - 0.177).abs() <= 0.03, "{frac}");
    }

    #[test]
    fn reference_patterns_follow_grammar() {
        for seed in 0..5 {
            let d = generate_dataset(&small(seed)).unwrap();
            let idx = |ts: i64| d.records.binary_search_by_key(&ts, |r| r.timestamp).unwrap();
            for e in &d.reference_cycles {
                let (a, b) = (idx(e.onset), idx(e.offset - 1));
                let modes: Vec<OperationMode> = d.records[a - 1..=b + 1].iter().map(|r| r.mode.unwrap()).collect();
                assert!(d.records[a..=b].iter().all(|r| r.mode.unwrap().is_moving()));
                let pattern = dedup_modes(&modes);
                assert!(pattern.len() <= 15);
                assert_eq!(classify_cycle_pattern(&pattern).unwrap(), e.class, "{pattern:?}");
                if e.class == CycleClass::Normal {
                    assert!(e.duration() >= 14);
                }
            }
        }
    }

    #[test]
    fn noiseless_speed_exact() {
        let cfg = GeneratorConfig {
            emissions: Emissions::default().noiseless(),
            ..small(3)
        };
        let d = generate_dataset(&cfg).unwrap();
        for r in &d.records {
            let want = if r.mode.unwrap().is_moving() { 45.0 } else { 0.0 };
            assert_eq!(r.speed, want);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = small(0);
        let cases = [
            GeneratorConfig { p_abnormal: 1.5, ..base.clone() },
            GeneratorConfig { min_normal_cycle_minutes: 10, ..base.clone() },
            GeneratorConfig { months: Vec::new(), ..base.clone() },
            GeneratorConfig { idle_between: (50, 20), ..base.clone() },
        ];
        for c in cases {
            assert!(generate_dataset(&c).is_err());
        }
    }
}
