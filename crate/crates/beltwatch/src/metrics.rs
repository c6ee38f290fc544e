//! Metrics CSV and the summary tables built from it.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use beltwatch_core::evaluate::{f1, MetricRow, SummaryRow};

use crate::error::FormatError;

pub const METRICS_HEADER: [&str; 9] = ["fold", "seed", "approach", "model", "class", "f1", "tp", "fp", "fn"];

pub fn write_metrics_to<W: Write>(w: W, rows: &[MetricRow]) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_from<R: Read>(source: R, path: &Path) -> Result<Vec<MetricRow>, FormatError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header = rd.headers().map_err(|e| FormatError::csv(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(FormatError::parse(path, 1, format!("expected header {}", METRICS_HEADER.join(","))));
    }
    rd.deserialize()
        .map(|r| {
            r.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                FormatError::parse(path, line, e.to_string())
            })
        })
        .collect()
}

/// Rows pooled per (approach, model, seed) over folds, then averaged over
/// seeds. Matches the summary of the run that produced the rows.
pub fn summarize_rows(rows: &[MetricRow]) -> Vec<(u8, String, Vec<SummaryRow>)> {
    type Key = (u8, String);
    type BySeed<'a> = Vec<(String, Vec<&'a MetricRow>)>;
    let mut groups: Vec<(Key, BySeed)> = Vec::new();
    for r in rows {
        let key = (r.approach, r.model.clone());
        let gi = match groups.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new()));
                groups.len() - 1
            }
        };
        let runs = &mut groups[gi].1;
        match runs.iter_mut().find(|(s, _)| *s == r.seed) {
            Some((_, v)) => v.push(r),
            None => runs.push((r.seed.clone(), vec![r])),
        }
    }
    let mut out = Vec::new();
    for ((approach, model), runs) in groups {
        let mut metrics: Vec<String> = Vec::new();
        for (_, v) in &runs {
            for r in v {
                if !metrics.contains(&r.class) {
                    metrics.push(r.class.clone());
                }
            }
        }
        let summary = metrics
            .iter()
            .map(|m| {
                let scores: Vec<f64> = runs
                    .iter()
                    .map(|(_, v)| {
                        let (tp, fp, fn_) = v
                            .iter()
                            .filter(|r| r.class == *m)
                            .fold((0, 0, 0), |a, r| (a.0 + r.tp, a.1 + r.fp, a.2 + r.fn_));
                        f1(tp, fp, fn_)
                    })
                    .collect();
                let n = scores.len().max(1) as f64;
                let mean = scores.iter().sum::<f64>() / n;
                let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
                SummaryRow {
                    metric: m.clone(),
                    mean,
                    std: var.sqrt(),
                    runs: scores.len(),
                }
            })
            .collect();
        out.push((approach, model, summary));
    }
    out
}

pub fn summary_table(approach: u8, model: &str, rows: &[SummaryRow], excluded: &[String]) -> String {
    let mut s = String::new();
    let runs = rows.first().map_or(0, |r| r.runs);
    let _ = writeln!(s, "approach {approach}  model {model}  runs {runs}");
    if !excluded.is_empty() {
        let _ = writeln!(s, "excluded months without cycles: {}", excluded.join(", "));
    }
    let _ = writeln!(s, "{:<10} {:>8} {:>8}", "metric", "mean", "std");
    for r in rows {
        let _ = writeln!(s, "{:<10} {:>8.4} {:>8.4}", r.metric, r.mean, r.std);
    }
    s
}
