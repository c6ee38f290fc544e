//! Leave-one-month-out cross-validation with repeated seeds.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{f1, f1_per_class, match_events, micro_f1, EvalCounts, Tolerance};
use crate::classifiers::Family;
use crate::datamodel::{month_tags, CycleClass, CycleEvent, SensorRecord};
use crate::error::{Error, Result};
use crate::pipeline::{run_approach, Approach, PipelineConfig};
use crate::rng;
use crate::training::{duty_training_set, train_duty_model, train_mode_model, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub family: Family,
    pub spec: ModelSpec,
}

impl ModelChoice {
    pub fn fixed(family: Family) -> Self {
        ModelChoice {
            family,
            spec: ModelSpec::default_fixed(family),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvConfig {
    pub pipeline: PipelineConfig,
    pub mode_model: ModelChoice,
    /// Required for approach 3, ignored otherwise.
    pub duty_model: Option<ModelChoice>,
    pub seeds: Vec<u64>,
    pub tolerance: Tolerance,
}

impl LoocvConfig {
    pub fn model_label(&self) -> String {
        match (self.pipeline.approach, &self.duty_model) {
            (Approach::ThresholdLearned, Some(d)) => format!("{}+{}", self.mode_model.family, d.family),
            _ => format!("{}", self.mode_model.family),
        }
    }
}

/// Scores of one (test month, seed) unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: String,
    pub mode_seed: u64,
    pub duty_seed: Option<u64>,
    pub counts: EvalCounts,
    pub detection: EvalCounts,
}

impl FoldResult {
    pub fn seed_label(&self) -> String {
        match self.duty_seed {
            Some(d) => format!("{}/{}", self.mode_seed, d),
            None => format!("{}", self.mode_seed),
        }
    }
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub fold: String,
    pub seed: String,
    pub approach: u8,
    pub model: String,
    pub class: String,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Mean and population standard deviation over runs (seed combinations),
/// each run pooling its counts across all test months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub approach: Approach,
    pub model: String,
    pub results: Vec<FoldResult>,
    /// Months without reference cycles; not scored.
    pub excluded: Vec<String>,
}

impl LoocvReport {
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut out = Vec::new();
        for r in &self.results {
            let per = f1_per_class(&r.counts);
            let mut push = |class: &str, f: f64, (tp, fp, fn_): (usize, usize, usize)| {
                out.push(MetricRow {
                    fold: r.fold.clone(),
                    seed: r.seed_label(),
                    approach: self.approach.number(),
                    model: self.model.clone(),
                    class: class.into(),
                    f1: f,
                    tp,
                    fp,
                    fn_,
                })
            };
            for c in CycleClass::ALL {
                push(c.as_str(), per[c.index()], r.counts.class(c));
            }
            push("micro", micro_f1(&r.counts), r.counts.pooled());
            push("detection", micro_f1(&r.detection), r.detection.pooled());
        }
        out
    }

    /// Counts pooled over test months, one entry per seed combination in
    /// first-seen order.
    pub fn runs(&self) -> Vec<(EvalCounts, EvalCounts)> {
        let mut keys: Vec<(u64, Option<u64>)> = Vec::new();
        let mut pooled: Vec<(EvalCounts, EvalCounts)> = Vec::new();
        for r in &self.results {
            let key = (r.mode_seed, r.duty_seed);
            let i = match keys.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    keys.push(key);
                    pooled.push(Default::default());
                    keys.len() - 1
                }
            };
            pooled[i].0.add(&r.counts);
            pooled[i].1.add(&r.detection);
        }
        pooled
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let runs = self.runs();
        let metric = |name: &str, f: &dyn Fn(&(EvalCounts, EvalCounts)) -> f64| {
            let v: Vec<f64> = runs.iter().map(f).collect();
            let n = v.len().max(1) as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            SummaryRow {
                metric: name.into(),
                mean,
                std: libm::sqrt(var),
                runs: v.len(),
            }
        };
        let mut out = Vec::new();
        for c in CycleClass::ALL {
            out.push(metric(c.as_str(), &|r| {
                let (tp, fp, fn_) = r.0.class(c);
                f1(tp, fp, fn_)
            }));
        }
        out.push(metric("micro", &|r| micro_f1(&r.0)));
        out.push(metric("detection", &|r| micro_f1(&r.1)));
        out
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary().into_iter().find(|s| s.metric == metric).map(|s| s.mean)
    }
}

/// (rest, rest reference, selected, selected reference); a cycle belongs
/// to the month of its onset.
fn split_months(
    records: &[SensorRecord],
    reference: &[CycleEvent],
    months: &[String],
) -> (Vec<SensorRecord>, Vec<CycleEvent>, Vec<SensorRecord>, Vec<CycleEvent>) {
    let (sel, rest): (Vec<SensorRecord>, Vec<SensorRecord>) =
        records.iter().cloned().partition(|r| months.contains(&r.month));
    let in_sel = |e: &CycleEvent| sel.binary_search_by_key(&e.onset, |r| r.timestamp).is_ok();
    let (sel_ref, rest_ref): (Vec<CycleEvent>, Vec<CycleEvent>) = reference.iter().copied().partition(in_sel);
    (rest, rest_ref, sel, sel_ref)
}

fn check_config(config: &LoocvConfig, records: &[SensorRecord]) -> Result<Option<ModelChoice>> {
    config.pipeline.validate()?;
    if config.seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    if records.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::InvalidParameter("records must be time-ordered".into()));
    }
    match (config.pipeline.approach, config.duty_model) {
        (Approach::ThresholdLearned, None) => Err(Error::InvalidConfig("approach 3 needs a duty-cycle model".into())),
        (Approach::ThresholdLearned, d) => Ok(d),
        _ => Ok(None),
    }
}

struct Split<'a> {
    index: u64,
    label: &'a str,
    train: &'a [SensorRecord],
    train_ref: &'a [CycleEvent],
    test: &'a [SensorRecord],
    test_ref: &'a [CycleEvent],
}

/// Trains and scores one split for every seed. Approach 3 trains one duty
/// model per (mode seed, duty seed) pair on cycles detected in the training
/// data with the mode model's own predictions.
fn score_split(
    split: &Split<'_>,
    config: &LoocvConfig,
    duty_choice: Option<ModelChoice>,
    out: &mut Vec<FoldResult>,
) -> Result<()> {
    for &seed in &config.seeds {
        let mode = train_mode_model(
            split.train,
            config.mode_model.family,
            &config.mode_model.spec,
            rng::derive_seed(seed, 0x100 + split.index),
        )?;
        let mut score = |duty: Option<&crate::classifiers::Model>, duty_seed| -> Result<()> {
            let events = run_approach(
                &config.pipeline,
                &mode.model,
                duty.map(|d| d as &dyn crate::classifiers::Classifier),
                split.test,
            )?
            .events;
            out.push(FoldResult {
                fold: split.label.into(),
                mode_seed: seed,
                duty_seed,
                counts: match_events(split.test_ref, &events, config.tolerance, true)?,
                detection: match_events(split.test_ref, &events, config.tolerance, false)?,
            });
            Ok(())
        };
        match duty_choice {
            None => score(None, None)?,
            Some(choice) => {
                let (codes, y) =
                    duty_training_set(&config.pipeline, &mode.model, split.train, split.train_ref, config.tolerance)?;
                for &duty_seed in &config.seeds {
                    let duty = train_duty_model(
                        &codes,
                        &y,
                        choice.family,
                        &choice.spec,
                        rng::derive_seed(duty_seed, 0x200 + split.index),
                    )?;
                    score(Some(&duty.model), Some(duty_seed))?;
                }
            }
        }
    }
    Ok(())
}

/// Trains on all months but one and scores the held-out month, for every
/// month and seed.
pub fn loocv_run(records: &[SensorRecord], reference: &[CycleEvent], config: &LoocvConfig) -> Result<LoocvReport> {
    let duty_choice = check_config(config, records)?;
    let months = month_tags(records);
    if months.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "leave-one-month-out needs at least 2 months, found {}",
            months.len()
        )));
    }
    let mut report = LoocvReport {
        approach: config.pipeline.approach,
        model: config.model_label(),
        results: Vec::new(),
        excluded: Vec::new(),
    };
    for (fold, month) in months.iter().enumerate() {
        let (train, train_ref, test, test_ref) = split_months(records, reference, core::slice::from_ref(month));
        if test_ref.is_empty() {
            report.excluded.push(month.clone());
            continue;
        }
        let split = Split {
            index: fold as u64,
            label: month,
            train: &train,
            train_ref: &train_ref,
            test: &test,
            test_ref: &test_ref,
        };
        score_split(&split, config, duty_choice, &mut report.results)?;
    }
    Ok(report)
}

/// Trains on `train_months` and scores `test_months` as a single fold
/// labelled with the test months joined by `+`.
pub fn holdout_run(
    records: &[SensorRecord],
    reference: &[CycleEvent],
    train_months: &[String],
    test_months: &[String],
    config: &LoocvConfig,
) -> Result<LoocvReport> {
    let duty_choice = check_config(config, records)?;
    if train_months.is_empty() || test_months.is_empty() {
        return Err(Error::InvalidConfig("train and test months must both be given".into()));
    }
    if let Some(m) = train_months.iter().find(|m| test_months.contains(m)) {
        return Err(Error::InvalidConfig(format!("month {m} is in both the train and test sets")));
    }
    let known = month_tags(records);
    if let Some(m) = train_months.iter().chain(test_months).find(|m| !known.contains(m)) {
        return Err(Error::InvalidConfig(format!("month {m} not present in the data")));
    }
    let (_, _, train, train_ref) = split_months(records, reference, train_months);
    let (_, _, test, test_ref) = split_months(records, reference, test_months);
    let label = test_months.join("+");
    let mut report = LoocvReport {
        approach: config.pipeline.approach,
        model: config.model_label(),
        results: Vec::new(),
        excluded: Vec::new(),
    };
    if test_ref.is_empty() {
        report.excluded.push(label);
        return Ok(report);
    }
    let split = Split {
        index: 0,
        label: &label,
        train: &train,
        train_ref: &train_ref,
        test: &test,
        test_ref: &test_ref,
    };
    score_split(&split, config, duty_choice, &mut report.results)?;
    Ok(report)
}
