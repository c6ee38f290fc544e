//! Subcommands. Each one resolves its settings (defaults, then the config
//! file, then flags), does its work and writes a manifest into `--out`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use beltwatch_core::classifiers::{Classifier, Family};
use beltwatch_core::datamodel::month_tags;
use beltwatch_core::evaluate::{
    holdout_run, loocv_run, match_events, EvalCounts, FoldResult, LoocvConfig, LoocvReport, ModelChoice, Tolerance,
};
use beltwatch_core::features::extract_segmented;
use beltwatch_core::pipeline::{
    encode_transitions, run_approach, threshold_cycle_patterns, Approach, PipelineConfig, StreamEvent,
    StreamingPipeline,
};
use beltwatch_core::quantize::{agreement_report, compare_end_to_end, quantize_model, AgreementReport, EndToEnd};
use beltwatch_core::rng::derive_seed;
use beltwatch_core::synth::{generate_dataset, Dataset, GeneratorConfig, Preset};
use beltwatch_core::training::{duty_training_set, train_duty_model, train_mode_model, ModelSpec};
use beltwatch_core::{CycleClass, Matrix, SensorRecord};

use crate::artifact::{ModelArtifact, StoredClassifier, StoredModel, ARTIFACT_FORMAT};
use crate::config::RunConfig;
use crate::error::{CliError, FormatError};
use crate::io::{self, DatasetFiles, EventWriter, MinuteWriter, ModeColumn, SensorReader};
use crate::manifest::RunManifest;
use crate::metrics::{read_metrics_from, summarize_rows, summary_table, write_metrics_to};

pub const MODEL_FILE: &str = "model.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MINUTES_FILE: &str = "minutes.csv";
pub const QUANTIZATION_FILE: &str = "quantization.json";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Parser)]
#[command(name = "beltwatch", version, about = "Duty-cycle anomaly detection for hydraulic conveyor belts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset.
    Generate(GenerateArgs),
    /// Train the model stack of one approach.
    Train(TrainArgs),
    /// Score an approach with leave-one-month-out, a month split, or a trained artifact.
    Eval(EvalArgs),
    /// Run a trained artifact over a sensor file one record at a time.
    Infer(InferArgs),
    /// Convert a trained artifact to int8 and report agreement.
    Quantize(QuantizeArgs),
    /// Summarize one or more metrics files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    /// 1 mode rules, 2 threshold + rules, 3 threshold + learned duty model.
    #[arg(long)]
    pub approach: Option<String>,
    /// Mode classifier: dt, rf, et, xgb, gnb or mlp.
    #[arg(long)]
    pub model: Option<String>,
    /// Duty-cycle classifier for approach 3.
    #[arg(long)]
    pub duty_model: Option<String>,
    /// Grid-search folds; fixed defaults when omitted.
    #[arg(long)]
    pub grid_folds: Option<usize>,
    #[arg(long)]
    pub speed_threshold: Option<f64>,
    #[arg(long)]
    pub median_window: Option<usize>,
    #[arg(long)]
    pub encoder_slots: Option<usize>,
    /// Tolerance in seconds for onset and offset matching.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// baseline (four plain months) or drift (six drifting months).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub cycles: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub train_months: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub data: PathBuf,
    /// Seeds to repeat training with; overrides --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub train_months: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub test_months: Option<Vec<String>>,
    /// Score a trained artifact instead of retraining.
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    /// Report class-insensitive detection F1 only.
    #[arg(long)]
    pub detection_only: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub artifact: PathBuf,
    /// Sensor CSV, read in file order.
    #[arg(long)]
    pub sensors: PathBuf,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub artifact: PathBuf,
    /// Dataset for calibration (training months) and agreement (the rest).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, required = true, num_args = 1..)]
    pub metrics: Vec<PathBuf>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn parse_family(s: &str) -> Result<Family, CliError> {
    s.parse().map_err(|_| usage(format!("unknown model family {s:?}; expected dt, rf, et, xgb, gnb or mlp")))
}

fn parse_preset(s: &str) -> Result<Preset, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "baseline" => Ok(Preset::Baseline),
        "drift" => Ok(Preset::Drift),
        _ => Err(usage(format!("unknown preset {s:?}; expected baseline or drift"))),
    }
}

impl PipelineArgs {
    fn to_config(&self) -> Result<RunConfig, CliError> {
        Ok(RunConfig {
            approach: self.approach.as_deref().map(str::parse).transpose().map_err(|e| usage(format!("{e}")))?,
            model: self.model.as_deref().map(parse_family).transpose()?,
            duty_model: self.duty_model.as_deref().map(parse_family).transpose()?,
            grid_folds: self.grid_folds,
            speed_threshold: self.speed_threshold,
            median_window: self.median_window,
            encoder_slots: self.encoder_slots,
            tolerance: self.tolerance,
            ..RunConfig::default()
        })
    }
}

fn resolve(config: Option<&Path>, flags: RunConfig) -> Result<RunConfig, CliError> {
    let file = match config {
        Some(p) => RunConfig::read(p).map_err(|e| usage(format!("config: {e}")))?,
        None => RunConfig::default(),
    };
    Ok(file.overlay(flags))
}

/// Fills in every default so the manifest shows the effective settings.
fn complete_pipeline(c: &mut RunConfig) -> Result<PipelineConfig, CliError> {
    let approach = *c.approach.get_or_insert(Approach::ThresholdRules);
    let mut p = PipelineConfig::new(approach);
    p.speed_threshold = *c.speed_threshold.get_or_insert(p.speed_threshold);
    p.median_window = *c.median_window.get_or_insert(p.median_window);
    p.encoder_slots = *c.encoder_slots.get_or_insert(p.encoder_slots);
    c.model.get_or_insert(Family::Et);
    if approach.needs_duty_model() {
        c.duty_model.get_or_insert(Family::Et);
    } else if c.duty_model.is_some() {
        return Err(usage(format!("--duty-model only applies to approach 3, not {approach}")));
    }
    p.validate()?;
    if !p.speed_threshold.is_finite() || p.speed_threshold < 0.0 {
        return Err(usage("speed threshold must be a non-negative number"));
    }
    Ok(p)
}

fn complete_tolerance(c: &mut RunConfig) -> Result<Tolerance, CliError> {
    let t = *c.tolerance.get_or_insert(beltwatch_core::evaluate::DEFAULT_TOLERANCE_SECONDS);
    Tolerance::new(t).map_err(|e| usage(e.to_string()))
}

fn choice(family: Family, grid_folds: Option<usize>) -> Result<ModelChoice, CliError> {
    let spec = match grid_folds {
        None => ModelSpec::default_fixed(family),
        Some(f) if f >= 2 => ModelSpec::Grid { folds: f },
        Some(f) => return Err(usage(format!("grid search needs at least 2 folds, got {f}"))),
    };
    Ok(ModelChoice { family, spec })
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(FormatError::io(dir, e).to_string()))
}

fn read_dataset(dir: &Path, manifest: &mut RunManifest) -> Result<Dataset, CliError> {
    let d = io::read_dataset(dir)?;
    for p in DatasetFiles::in_dir(dir).all() {
        if p.exists() {
            manifest.input(p)?;
        }
    }
    Ok(d)
}

fn check_months(d: &Dataset, months: &[String]) -> Result<(), CliError> {
    let known = month_tags(&d.records);
    match months.iter().find(|m| !known.contains(m)) {
        Some(m) => Err(CliError::Data(format!("month {m} not present in the data (have {})", known.join(", ")))),
        None => Ok(()),
    }
}

fn csv_err(p: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| internal(FormatError::csv(p, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| internal(FormatError::io(path, e)))
}

fn write_csv<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(BufWriter<File>) -> Result<(), csv::Error>,
{
    let file = File::create(path).map_err(|e| internal(FormatError::io(path, e)))?;
    f(BufWriter::new(file)).map_err(|e| internal(FormatError::csv(path, e)))
}

/// Parses `args` (without the program name) and runs the command, writing
/// human-readable output to `out`.
pub fn run(args: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(std::iter::once("beltwatch".to_string()).chain(args.iter().cloned())) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{}", e.render()).map_err(internal)?;
            return Ok(());
        }
        Err(e) => {
            let msg = e.render().to_string();
            return Err(usage(msg.strip_prefix("error: ").unwrap_or(&msg).trim_end()));
        }
    };
    match cli.command {
        Command::Generate(a) => generate(a, args, out),
        Command::Train(a) => train(a, args, out),
        Command::Eval(a) => eval(a, args, out),
        Command::Infer(a) => infer(a, args, out),
        Command::Quantize(a) => quantize(a, args, out),
        Command::Report(a) => report(a, args, out),
    }
}

fn generate(a: GenerateArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let flags = RunConfig {
        seed: a.common.seed,
        preset: a.preset.as_deref().map(parse_preset).transpose()?,
        cycles: a.cycles,
        ..RunConfig::default()
    };
    let mut c = resolve(a.common.config.as_deref(), flags)?;
    let seed = *c.seed.get_or_insert(0);
    let mut g = match c.generator.clone() {
        Some(g) => g,
        None => GeneratorConfig::preset(*c.preset.get_or_insert(Preset::Baseline), seed),
    };
    g.seed = seed;
    if let Some(n) = c.cycles {
        g.n_cycles = n;
    }
    c.cycles = Some(g.n_cycles);
    g.validate().map_err(|e| usage(e.to_string()))?;
    let dataset = generate_dataset(&g)?;
    create_out(&a.common.out)?;
    let files = io::write_dataset(&dataset, &a.common.out)?;

    let mut m = RunManifest::new("generate", argv, a.common.config.as_deref(), c);
    m.seeds = vec![seed];
    for p in files.all() {
        m.output(p)?;
    }
    let mut counts: Vec<(String, usize, usize)> = Vec::new();
    for e in &dataset.reference_cycles {
        let i = dataset.records.partition_point(|r| r.timestamp < e.onset);
        let month = &dataset.records[i].month;
        if counts.last().is_none_or(|(m, _, _)| m != month) {
            counts.push((month.clone(), 0, 0));
        }
        let last = counts.last_mut().expect("pushed above");
        match e.class {
            CycleClass::Normal => last.1 += 1,
            CycleClass::Abnormal => last.2 += 1,
        }
    }
    let total = dataset.reference_cycles.len();
    let abnormal: usize = counts.iter().map(|c| c.2).sum();
    let mut text = format!(
        "{} minutes, {} cycles ({} normal, {} abnormal, {:.1}% abnormal)\n",
        dataset.records.len(),
        total,
        total - abnormal,
        abnormal,
        100.0 * abnormal as f64 / total.max(1) as f64
    );
    for (month, n, ab) in &counts {
        text.push_str(&format!("  {month}: {n} normal, {ab} abnormal\n"));
    }
    m.detail("cycles_per_month", &counts);
    m.write(&a.common.out)?;
    out.write_all(text.as_bytes()).map_err(internal)
}

fn mode_accuracy(model: &dyn Classifier, records: &[SensorRecord]) -> Result<f64, CliError> {
    let x = extract_segmented(records);
    let mut correct = 0usize;
    for (row, r) in x.rows().zip(records) {
        if r.mode.map(|m| usize::from(m.ordinal())) == Some(model.predict_class(row)?) {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len().max(1) as f64)
}

fn train(a: TrainArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let mut flags = a.pipeline.to_config()?;
    flags.seed = a.common.seed;
    flags.train_months = a.train_months.clone();
    let mut c = resolve(a.common.config.as_deref(), flags)?;
    let pipeline = complete_pipeline(&mut c)?;
    let tol = complete_tolerance(&mut c)?;
    let seed = *c.seed.get_or_insert(0);
    let mut m = RunManifest::new("train", argv, a.common.config.as_deref(), c.clone());
    let dataset = read_dataset(&a.data, &mut m)?;
    let months = match &c.train_months {
        Some(ms) => {
            check_months(&dataset, ms)?;
            ms.clone()
        }
        None => month_tags(&dataset.records),
    };
    c.train_months = Some(months.clone());
    let d = dataset.select_months(&months);
    if d.records.iter().any(|r| r.mode.is_none()) {
        return Err(CliError::Data("training needs a mode label on every sensor row".into()));
    }
    let mode_choice = choice(c.model.expect("completed"), c.grid_folds)?;
    let mode_seed = derive_seed(seed, 0x100);
    let mode = train_mode_model(&d.records, mode_choice.family, &mode_choice.spec, mode_seed)?;
    let accuracy = mode_accuracy(&mode.model, &d.records)?;
    let mut text = format!(
        "mode model {} ({}) trained on {}: accuracy {:.4}\n",
        mode.family,
        mode.hyper,
        months.join(", "),
        accuracy
    );
    m.detail("mode_hyperparameters", &mode.hyper);
    m.detail("mode_training_accuracy", &accuracy);
    let duty = match c.duty_model.filter(|_| pipeline.approach.needs_duty_model()) {
        None => None,
        Some(f) => {
            let dc = choice(f, c.grid_folds)?;
            let (codes, y) = duty_training_set(&pipeline, &mode.model, &d.records, &d.reference_cycles, tol)?;
            let duty_seed = derive_seed(seed, 0x200);
            let t = train_duty_model(&codes, &y, dc.family, &dc.spec, duty_seed)?;
            text.push_str(&format!("duty model {} ({}) trained on {} cycles\n", t.family, t.hyper, codes.len()));
            m.detail("duty_hyperparameters", &t.hyper);
            m.detail("duty_training_cycles", &codes.len());
            Some(StoredClassifier::from_trained(t, duty_seed))
        }
    };
    let artifact = ModelArtifact {
        format: ARTIFACT_FORMAT,
        pipeline,
        train_months: months,
        mode: StoredClassifier::from_trained(mode, mode_seed),
        duty,
    };
    create_out(&a.common.out)?;
    let path = a.common.out.join(MODEL_FILE);
    artifact.write(&path)?;
    m.resolved = c;
    m.seeds = vec![seed];
    m.output(&path)?;
    m.write(&a.common.out)?;
    out.write_all(text.as_bytes()).map_err(internal)
}

/// Scores a fixed artifact month by month; also returns the predictions.
fn score_artifact(
    artifact: &ModelArtifact,
    d: &Dataset,
    tol: Tolerance,
) -> Result<(LoocvReport, beltwatch_core::pipeline::PipelineOutput), CliError> {
    let output = run_approach(&artifact.pipeline, artifact.mode_classifier(), artifact.duty_classifier(), &d.records)?;
    let mut report = LoocvReport {
        approach: artifact.pipeline.approach,
        model: match &artifact.duty {
            Some(duty) => format!("{}+{}", artifact.mode.family, duty.family),
            None => artifact.mode.family.to_string(),
        },
        results: Vec::new(),
        excluded: Vec::new(),
    };
    for month in month_tags(&d.records) {
        let part = d.select_months(std::slice::from_ref(&month));
        if part.reference_cycles.is_empty() {
            report.excluded.push(month);
            continue;
        }
        let events: Vec<_> = output
            .events
            .iter()
            .filter(|e| part.records.binary_search_by_key(&e.onset, |r| r.timestamp).is_ok())
            .copied()
            .collect();
        report.results.push(FoldResult {
            fold: month,
            mode_seed: artifact.mode.seed,
            duty_seed: artifact.duty.as_ref().map(|d| d.seed),
            counts: match_events(&part.reference_cycles, &events, tol, true)?,
            detection: match_events(&part.reference_cycles, &events, tol, false)?,
        });
    }
    Ok((report, output))
}

fn eval(a: EvalArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let mut flags = a.pipeline.to_config()?;
    flags.seed = a.common.seed;
    flags.seeds = a.seeds.clone();
    flags.train_months = a.train_months.clone();
    flags.test_months = a.test_months.clone();
    flags.detection_only = a.detection_only.then_some(true);
    let mut c = resolve(a.common.config.as_deref(), flags)?;
    let tol = complete_tolerance(&mut c)?;
    let detection_only = *c.detection_only.get_or_insert(false);
    let mut m = RunManifest::new("eval", argv, a.common.config.as_deref(), c.clone());
    let dataset = read_dataset(&a.data, &mut m)?;
    create_out(&a.common.out)?;
    let mut outputs: Vec<PathBuf> = Vec::new();

    let report = if let Some(path) = &a.artifact {
        if a.pipeline.approach.is_some() || a.pipeline.model.is_some() || a.pipeline.duty_model.is_some() {
            return Err(usage("--artifact fixes the approach and models; drop --approach/--model/--duty-model"));
        }
        let artifact = ModelArtifact::read(path)?;
        m.input(path)?;
        let d = match &c.test_months {
            Some(ms) => {
                check_months(&dataset, ms)?;
                dataset.select_months(ms)
            }
            None => dataset,
        };
        let (report, output) = score_artifact(&artifact, &d, tol)?;
        let events = a.common.out.join(io::EVENTS_FILE);
        write_csv(&events, |w| io::write_events_to(w, &output.events))?;
        let minutes = a.common.out.join(MINUTES_FILE);
        write_csv(&minutes, |w| {
            let mut mw = MinuteWriter::new(w)?;
            for p in &output.minutes {
                mw.write(p)?;
            }
            mw.finish()
        })?;
        outputs.extend([events, minutes]);
        c.approach = Some(artifact.pipeline.approach);
        c.seeds = Some(vec![artifact.mode.seed]);
        report
    } else {
        let pipeline = complete_pipeline(&mut c)?;
        let seeds = match (&c.seeds, c.seed) {
            (Some(s), _) if !s.is_empty() => s.clone(),
            (Some(_), _) => return Err(usage("empty seed list")),
            (None, s) => vec![s.unwrap_or(0)],
        };
        c.seeds = Some(seeds.clone());
        let config = LoocvConfig {
            pipeline,
            mode_model: choice(c.model.expect("completed"), c.grid_folds)?,
            duty_model: c.duty_model.map(|f| choice(f, c.grid_folds)).transpose()?,
            seeds,
            tolerance: tol,
        };
        match (&c.train_months, &c.test_months) {
            (None, None) => loocv_run(&dataset.records, &dataset.reference_cycles, &config)?,
            (Some(train), Some(test)) => {
                check_months(&dataset, train)?;
                check_months(&dataset, test)?;
                holdout_run(&dataset.records, &dataset.reference_cycles, train, test, &config)?
            }
            _ => return Err(usage("--train-months and --test-months must be given together")),
        }
    };

    let mut rows = report.rows();
    let mut summary = report.summary();
    if detection_only {
        rows.retain(|r| r.class == "detection");
        summary.retain(|s| s.metric == "detection");
    }
    let metrics = a.common.out.join(METRICS_FILE);
    write_csv(&metrics, |w| write_metrics_to(w, &rows))?;
    let text = summary_table(report.approach.number(), &report.model, &summary, &report.excluded);
    let summary_path = a.common.out.join(SUMMARY_FILE);
    write_text(&summary_path, &text)?;
    outputs.extend([metrics, summary_path]);
    m.resolved = c;
    m.seeds = m.resolved.seeds.clone().unwrap_or_default();
    for p in &outputs {
        m.output(p)?;
    }
    m.detail("summary", &summary);
    m.write(&a.common.out)?;
    out.write_all(text.as_bytes()).map_err(internal)
}

fn infer(a: InferArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let c = resolve(a.common.config.as_deref(), RunConfig::default())?;
    let mut m = RunManifest::new("infer", argv, a.common.config.as_deref(), c);
    let artifact = ModelArtifact::read(&a.artifact)?;
    m.input(&a.artifact)?;
    m.input(&a.sensors)?;
    let reader = SensorReader::open(&a.sensors, ModeColumn::Optional)?;
    let mut stream = StreamingPipeline::new(artifact.pipeline, artifact.mode_classifier(), artifact.duty_classifier())?;
    create_out(&a.common.out)?;
    let events_path = a.common.out.join(io::EVENTS_FILE);
    let minutes_path = a.common.out.join(MINUTES_FILE);
    let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| internal(FormatError::io(p, e)));
    let mut events = EventWriter::new(open(&events_path)?).map_err(csv_err(&events_path))?;
    let mut minutes = MinuteWriter::new(open(&minutes_path)?).map_err(csv_err(&minutes_path))?;
    let (mut n_minutes, mut n_cycles) = (0usize, 0usize);
    let mut emit = |batch: Vec<StreamEvent>| -> Result<(), CliError> {
        for e in batch {
            match e {
                StreamEvent::Minute(p) => {
                    n_minutes += 1;
                    minutes.write(&p).map_err(csv_err(&minutes_path))?
                }
                StreamEvent::Cycle(c) => {
                    n_cycles += 1;
                    events.write(&c).map_err(csv_err(&events_path))?
                }
            }
        }
        Ok(())
    };
    for record in reader {
        let batch = stream.push(&record?)?;
        emit(batch)?;
    }
    let (tail, pending) = stream.finish()?;
    emit(tail)?;
    events.finish().map_err(csv_err(&events_path))?;
    minutes.finish().map_err(csv_err(&minutes_path))?;

    let mut text = format!("{n_minutes} minutes, {n_cycles} cycles\n");
    let mut notes = Vec::new();
    for p in stream.interrupted() {
        notes.push(format!("cycle from {} cut at {} by a gap or month change, not emitted", p.onset, p.last_seen));
    }
    if let Some(p) = pending {
        notes.push(format!("pending cycle open since {} (last seen {}), not emitted", p.onset, p.last_seen));
    }
    for n in &notes {
        text.push_str(n);
        text.push('\n');
    }
    m.detail("notes", &notes);
    m.output(&events_path)?;
    m.output(&minutes_path)?;
    m.write(&a.common.out)?;
    out.write_all(text.as_bytes()).map_err(internal)
}

#[derive(Debug, Serialize)]
struct QuantizationSummary {
    calibration_months: Vec<String>,
    evaluation_months: Vec<String>,
    mode_report: beltwatch_core::quantize::QuantizationReport,
    mode_agreement: AgreementReport,
    duty_report: Option<beltwatch_core::quantize::QuantizationReport>,
    duty_agreement: Option<AgreementReport>,
    end_to_end: EndToEnd,
    float_f1: f64,
    quantized_f1: f64,
    float_detection_f1: f64,
    quantized_detection_f1: f64,
}

fn codes_matrix(codes: &[Vec<u8>], slots: usize) -> Matrix {
    let mut x = Matrix::with_capacity(slots, codes.len());
    for c in codes {
        x.push_row(&c.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
    }
    x
}

fn float_model(s: &StoredClassifier) -> Result<&beltwatch_core::classifiers::Model, CliError> {
    match &s.model {
        StoredModel::Float(m) => Ok(m),
        StoredModel::Int8(_) => Err(usage("artifact is already quantized")),
    }
}

fn quantize(a: QuantizeArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let flags = RunConfig {
        tolerance: a.tolerance,
        ..RunConfig::default()
    };
    let mut c = resolve(a.common.config.as_deref(), flags)?;
    let tol = complete_tolerance(&mut c)?;
    let mut m = RunManifest::new("quantize", argv, a.common.config.as_deref(), c);
    let artifact = ModelArtifact::read(&a.artifact)?;
    m.input(&a.artifact)?;
    let dataset = read_dataset(&a.data, &mut m)?;
    let all = month_tags(&dataset.records);
    let cal_months: Vec<String> = all.iter().filter(|x| artifact.train_months.contains(x)).cloned().collect();
    let cal_months = if cal_months.is_empty() { all.clone() } else { cal_months };
    let eval_months: Vec<String> = all.iter().filter(|x| !cal_months.contains(x)).cloned().collect();
    let eval_months = if eval_months.is_empty() { all.clone() } else { eval_months };
    let cal = dataset.select_months(&cal_months);
    let test = dataset.select_months(&eval_months);

    let mode_float = float_model(&artifact.mode)?;
    let mode_q = quantize_model(mode_float, &extract_segmented(&cal.records))?;
    let mode_agreement = agreement_report(mode_float, &mode_q, &extract_segmented(&test.records))?;
    let slots = artifact.pipeline.encoder_slots;
    let duty = match &artifact.duty {
        None => None,
        Some(d) => {
            let duty_float = float_model(d)?;
            let (codes, _) = duty_training_set(&artifact.pipeline, mode_float, &cal.records, &cal.reference_cycles, tol)?;
            let q = quantize_model(duty_float, &codes_matrix(&codes, slots))?;
            let test_codes: Vec<Vec<u8>> = threshold_cycle_patterns(&artifact.pipeline, mode_float, &test.records)?
                .iter()
                .filter_map(|(_, _, p)| encode_transitions(p, slots).ok())
                .collect();
            let agreement = agreement_report(duty_float, &q, &codes_matrix(&test_codes, slots))?;
            Some((d, q, agreement))
        }
    };
    let e2e = compare_end_to_end(
        &artifact.pipeline,
        mode_float,
        duty.as_ref().map(|(d, _, _)| d.model.classifier()),
        &mode_q,
        duty.as_ref().map(|(_, q, _)| q as &dyn Classifier),
        &test.records,
        &test.reference_cycles,
        tol,
    )?;
    let micro = |c: &EvalCounts| beltwatch_core::evaluate::micro_f1(c);
    let summary = QuantizationSummary {
        calibration_months: cal_months,
        evaluation_months: eval_months,
        mode_report: mode_q.report(),
        mode_agreement,
        duty_report: duty.as_ref().map(|(_, q, _)| q.report()),
        duty_agreement: duty.as_ref().map(|(_, _, r)| r.clone()),
        end_to_end: e2e,
        float_f1: micro(&e2e.float),
        quantized_f1: micro(&e2e.quantized),
        float_detection_f1: micro(&e2e.float_detection),
        quantized_detection_f1: micro(&e2e.quantized_detection),
    };
    let quantized = ModelArtifact {
        mode: StoredClassifier {
            model: StoredModel::Int8(mode_q),
            ..artifact.mode.clone()
        },
        duty: duty.map(|(d, q, _)| StoredClassifier {
            model: StoredModel::Int8(q),
            ..d.clone()
        }),
        ..artifact
    };
    create_out(&a.common.out)?;
    let model_path = a.common.out.join(MODEL_FILE);
    quantized.write(&model_path)?;
    let summary_path = a.common.out.join(QUANTIZATION_FILE);
    io::write_json(&summary_path, &summary)?;
    m.output(&model_path)?;
    m.output(&summary_path)?;
    m.write(&a.common.out)?;
    let mut text = format!(
        "mode agreement {:.4} on {} minutes\n",
        summary.mode_agreement.rate, summary.mode_agreement.n
    );
    if let Some(r) = &summary.duty_agreement {
        text.push_str(&format!("duty agreement {:.4} on {} cycles\n", r.rate, r.n));
    }
    text.push_str(&format!(
        "event F1 float {:.4} int8 {:.4}; detection F1 float {:.4} int8 {:.4}\n",
        summary.float_f1, summary.quantized_f1, summary.float_detection_f1, summary.quantized_detection_f1
    ));
    out.write_all(text.as_bytes()).map_err(internal)
}

fn report(a: ReportArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let c = resolve(a.common.config.as_deref(), RunConfig::default())?;
    let mut m = RunManifest::new("report", argv, a.common.config.as_deref(), c);
    let mut rows = Vec::new();
    for p in &a.metrics {
        let f = File::open(p).map_err(|e| CliError::Data(FormatError::io(p, e).to_string()))?;
        rows.extend(read_metrics_from(std::io::BufReader::new(f), p)?);
        m.input(p)?;
    }
    let groups = summarize_rows(&rows);
    let mut text = String::new();
    for (approach, model, summary) in &groups {
        text.push_str(&summary_table(*approach, model, summary, &[]));
        text.push('\n');
    }
    create_out(&a.common.out)?;
    let table = a.common.out.join(REPORT_FILE);
    write_csv(&table, |w| {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["approach", "model", "metric", "mean", "std", "runs"])?;
        for (approach, model, summary) in &groups {
            for s in summary {
                wr.write_record([
                    approach.to_string(),
                    model.clone(),
                    s.metric.clone(),
                    s.mean.to_string(),
                    s.std.to_string(),
                    s.runs.to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    })?;
    let summary_path = a.common.out.join(SUMMARY_FILE);
    write_text(&summary_path, &text)?;
    m.output(&table)?;
    m.output(&summary_path)?;
    m.write(&a.common.out)?;
    out.write_all(text.as_bytes()).map_err(internal)
}
