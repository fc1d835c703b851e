//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for validation/domain errors, 2 for I/O or
//! format errors. Machine output is deterministic unless `--stamp` is given.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::embedding::{ClassEmbeddingTable, ClipSet, EmbeddingVector};
use crate::error::{Error, Result};
use crate::evaluation::{
    compare_runs, summarize_run, Averaging, ComparisonReport, ConfidenceStats, MetricsReport,
    RunArtifacts, Truths,
};
use crate::registry::{LabelRegistry, Provenance, RegistryDocument};
use crate::schedule::{format_timestamp, parse_timestamp, FallbackPolicy, Schedule};
use crate::scoring::{
    info_nce, predict_batch, Prediction, RestrictionMode, ScoringConfig, DEFAULT_TAU,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "taskscope",
    version,
    about = "Schedule-constrained zero-shot activity classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Off,
    Hard,
    Soft,
}

impl From<ModeArg> for RestrictionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Off => RestrictionMode::Off,
            ModeArg::Hard => RestrictionMode::Hard,
            ModeArg::Soft => RestrictionMode::Soft,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FallbackArg {
    Full,
    Error,
    Empty,
}

impl From<FallbackArg> for FallbackPolicy {
    fn from(f: FallbackArg) -> Self {
        match f {
            FallbackArg::Full => FallbackPolicy::FullSpace,
            FallbackArg::Error => FallbackPolicy::Error,
            FallbackArg::Empty => FallbackPolicy::Empty,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AveragingArg {
    Weighted,
    Macro,
    Micro,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Weighted => Averaging::Weighted,
            AveragingArg::Macro => Averaging::Macro,
            AveragingArg::Micro => Averaging::Micro,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check registry, schedule and (optionally) embedding files.
    Validate {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long)]
        clips: Option<PathBuf>,
    },
    /// Print the label space the schedule allows at a given instant.
    Resolve {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        at: String,
        #[arg(long, value_enum, default_value = "full")]
        fallback: FallbackArg,
    },
    /// Score every clip; one JSON record per line, ordered by clip id.
    Predict {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        clips: PathBuf,
        #[arg(long, value_enum, default_value = "off")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, value_enum, default_value = "full")]
        fallback: FallbackArg,
        /// Abort on the first clip that cannot be scored.
        #[arg(long)]
        strict: bool,
        /// Add generation metadata to each record (breaks byte-for-byte reproducibility).
        #[arg(long)]
        stamp: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy, P/R/F1 and confidence statistics for a prediction file.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Clip file whose ground-truth column overrides the records' own.
        #[arg(long)]
        truths: Option<PathBuf>,
        /// Fixes the label universe; otherwise it is inferred from the records.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "weighted")]
        averaging: AveragingArg,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Baseline (unrestricted) vs restricted run over the same clips.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        restricted: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "weighted")]
        averaging: AveragingArg,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean InfoNCE loss of a batch of (x, y) embedding pairs.
    Infonce {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        tau: f64,
    },
}

fn exit_code(e: &Error) -> i32 {
    if e.is_format() {
        EXIT_FORMAT
    } else {
        EXIT_DOMAIN
    }
}

/// Runs one command, writing machine output to `out` and diagnostics to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Validate {
            registry,
            schedule,
            classes,
            clips,
        } => {
            return validate(
                &registry,
                schedule.as_deref(),
                classes.as_deref(),
                clips.as_deref(),
                out,
                err,
            )
        }
        Command::Resolve {
            registry,
            schedule,
            at,
            fallback,
        } => resolve(&registry, &schedule, &at, fallback.into(), out),
        Command::Predict {
            registry,
            schedule,
            classes,
            clips,
            mode,
            lambda,
            tau,
            fallback,
            strict,
            stamp,
            out: dest,
        } => ScoringConfig::new(mode.into(), tau, lambda).and_then(|config| {
            let job = PredictJob {
                registry: &registry,
                schedule: &schedule,
                classes: &classes,
                clips: &clips,
                config,
                fallback: fallback.into(),
                strict,
                stamp,
            };
            with_destination(dest.as_deref(), out, |w| job.run(w, err))
        }),
        Command::Evaluate {
            predictions,
            truths,
            registry,
            averaging,
            format,
            out: dest,
        } => with_destination(dest.as_deref(), out, |w| {
            evaluate(
                &predictions,
                truths.as_deref(),
                registry.as_deref(),
                averaging.into(),
                format,
                w,
            )
        }),
        Command::Compare {
            baseline,
            restricted,
            registry,
            averaging,
            format,
            out: dest,
        } => with_destination(dest.as_deref(), out, |w| {
            compare(
                &baseline,
                &restricted,
                registry.as_deref(),
                averaging.into(),
                format,
                w,
            )
        }),
        Command::Infonce { pairs, tau } => infonce(&pairs, tau, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn with_destination(
    dest: Option<&Path>,
    stdout: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match dest {
        None => body(stdout),
        Some(path) => {
            let mut buf = Vec::new();
            body(&mut buf)?;
            std::fs::write(path, buf).map_err(|e| Error::io(path, e))
        }
    }
}

fn emit(w: &mut dyn Write, text: &str) -> Result<()> {
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io("<output>", e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn validate(
    registry: &Path,
    schedule: Option<&Path>,
    classes: Option<&Path>,
    clips: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let mut problems: Vec<Error> = Vec::new();
    let mut notes: Vec<String> = Vec::new();

    let reg = match read_text(registry)
        .and_then(|t| RegistryDocument::from_json(&t))
        .map(|mut doc| (doc.normalize_and_check(), doc))
    {
        Ok((issues, doc)) if issues.is_empty() => {
            let reg = LabelRegistry::from_document(doc).expect("checked");
            notes.push(format!(
                "registry: {} labels, {} tasks",
                reg.len(),
                reg.tasks().len()
            ));
            Some(reg)
        }
        Ok((issues, _)) => {
            problems.extend(issues);
            None
        }
        Err(e) => {
            problems.push(e);
            None
        }
    };

    if let Some(path) = schedule {
        match Schedule::load(path) {
            Ok(s) => {
                notes.push(format!("schedule: {} entries", s.entries().len()));
                if let Some(reg) = &reg {
                    problems.extend(s.dangling_tasks(reg));
                }
            }
            Err(e) => problems.push(e),
        }
    }

    let mut class_dim = None;
    if let Some(path) = classes {
        match ClassEmbeddingTable::load(path) {
            Ok(t) => {
                notes.push(format!("classes: {} vectors, dim {}", t.len(), t.dim()));
                class_dim = Some(t.dim());
                if let Some(reg) = &reg {
                    for label in reg.label_ids() {
                        if t.get(label).is_none() {
                            problems.push(Error::MissingEmbedding(label.to_string()));
                        }
                    }
                    for entry in t.entries() {
                        if reg.index_of(&entry.label_id).is_none() {
                            problems.push(Error::UnknownLabel(entry.label_id.clone()));
                        }
                    }
                }
            }
            Err(e) => problems.push(e),
        }
    }

    if let Some(path) = clips {
        match ClipSet::load(path) {
            Ok(set) => {
                notes.push(format!("clips: {} records", set.len()));
                if let (Some(c), Some(d)) = (class_dim, set.dim) {
                    if c != d {
                        problems.push(Error::DimensionMismatch {
                            expected: c,
                            found: d,
                        });
                    }
                }
                if let Some(reg) = &reg {
                    for clip in &set.clips {
                        if let Some(gt) = &clip.ground_truth {
                            if reg.index_of(gt).is_none() {
                                problems
                                    .push(Error::UnknownLabel(gt.clone()).for_clip(&clip.clip_id));
                            }
                        }
                    }
                }
            }
            Err(e) => problems.push(e),
        }
    }

    for note in &notes {
        let _ = writeln!(out, "ok: {note}");
    }
    for p in &problems {
        let _ = writeln!(err, "error: {p}");
    }
    if problems.is_empty() {
        EXIT_OK
    } else if problems.iter().any(Error::is_format) {
        EXIT_FORMAT
    } else {
        EXIT_DOMAIN
    }
}

#[derive(Serialize)]
struct Resolution<'a> {
    at: String,
    active_tasks: Vec<String>,
    labels: &'a [String],
    provenance: &'a Provenance,
}

fn resolve(
    registry: &Path,
    schedule: &Path,
    at: &str,
    fallback: FallbackPolicy,
    out: &mut dyn Write,
) -> Result<()> {
    let reg = LabelRegistry::load(registry)?;
    let sched = Schedule::load(schedule)?;
    let t = parse_timestamp(at)?;
    let space = sched.resolve_label_space(&reg, &t, fallback)?;
    let report = Resolution {
        at: format_timestamp(&t),
        active_tasks: sched.active_tasks_at(&t),
        labels: space.label_ids(),
        provenance: space.provenance(),
    };
    emit(
        out,
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )
}

struct PredictJob<'a> {
    registry: &'a Path,
    schedule: &'a Path,
    classes: &'a Path,
    clips: &'a Path,
    config: ScoringConfig,
    fallback: FallbackPolicy,
    strict: bool,
    stamp: bool,
}

impl PredictJob<'_> {
    fn run(&self, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
        let reg = LabelRegistry::load(self.registry)?;
        let sched = Schedule::load(self.schedule)?;
        let table = ClassEmbeddingTable::load(self.classes)?;
        let clips = ClipSet::load(self.clips)?;
        if clips.is_empty() {
            let _ = writeln!(err, "warning: {} contains no clips", self.clips.display());
            return Ok(());
        }
        if self.config.mode != RestrictionMode::Soft && self.config.penalty_lambda != 0.0 {
            let _ = writeln!(err, "warning: --lambda only applies in soft mode");
        }
        let stamp = self.stamp.then(|| {
            format!(
                "taskscope {} at {}",
                env!("CARGO_PKG_VERSION"),
                format_timestamp(&chrono::Utc::now())
            )
        });

        let mut text = String::new();
        for (clip_id, result) in predict_batch(
            &clips.clips,
            &table,
            &sched,
            &reg,
            &self.config,
            self.fallback,
        ) {
            match result {
                Ok(mut p) => {
                    p.stamp = stamp.clone();
                    text.push_str(&serde_json::to_string(&p)?);
                    text.push('\n');
                }
                Err(e) if self.strict => return Err(e),
                Err(e) => {
                    debug_assert!(e.to_string().contains(&clip_id));
                    let _ = writeln!(err, "warning: skipped {e}");
                }
            }
        }
        emit(out, &text)
    }
}

/// Reads a line-delimited prediction file.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::at(i + 1, e.to_string())))
        .collect()
}

fn load_run(path: &Path, registry: Option<&LabelRegistry>) -> Result<RunArtifacts> {
    Ok(RunArtifacts::from_predictions(
        read_predictions(path)?,
        registry,
    ))
}

#[derive(Serialize, Deserialize)]
pub struct EvaluationReport {
    pub averaging: Averaging,
    pub metrics: MetricsReport,
    pub confidence: ConfidenceStats,
    pub warnings: Vec<String>,
    /// Distinct scoring configurations found in the input.
    pub config: Vec<ScoringConfig>,
}

fn render_metrics_table(rows: &[(&str, &MetricsReport)]) -> String {
    let mut s = String::from("Run\tAccuracy\tPrecision\tRecall\tF1 Score\n");
    for (name, m) in rows {
        s.push_str(&format!("{name}\t{}\n", m.render_row()));
    }
    s
}

fn evaluate(
    predictions: &Path,
    truths: Option<&Path>,
    registry: Option<&Path>,
    averaging: Averaging,
    format: ReportFormat,
    out: &mut dyn Write,
) -> Result<()> {
    let reg = registry.map(LabelRegistry::load).transpose()?;
    let mut run = load_run(predictions, reg.as_ref())?;
    if let Some(path) = truths {
        let set = ClipSet::load(path)?;
        let overrides: Truths = set
            .clips
            .into_iter()
            .filter_map(|c| Some((c.clip_id, c.ground_truth?)))
            .collect();
        run.truths = overrides;
    }
    let summary = summarize_run(&run, averaging)?;
    let mut configs: Vec<ScoringConfig> = Vec::new();
    for p in &run.predictions {
        if !configs.contains(&p.config) {
            configs.push(p.config);
        }
    }
    match format {
        ReportFormat::Json => {
            let report = EvaluationReport {
                averaging,
                warnings: summary.metrics.warnings.clone(),
                metrics: summary.metrics,
                confidence: summary.confidence,
                config: configs,
            };
            emit(
                out,
                &format!("{}\n", serde_json::to_string_pretty(&report)?),
            )
        }
        ReportFormat::Table => {
            let mut text = render_metrics_table(&[("run", &summary.metrics)]);
            text.push_str(&confidence_lines("run", &summary.confidence));
            emit(out, &text)
        }
    }
}

fn confidence_lines(name: &str, c: &ConfidenceStats) -> String {
    let correct = c
        .correct
        .as_ref()
        .map_or("n/a".to_string(), |s| format!("{:.4}", s.mean));
    format!(
        "{name}\tmean confidence (all) {:.4}\tmean confidence (correct) {correct}\n",
        c.all.mean
    )
}

fn compare(
    baseline: &Path,
    restricted: &Path,
    registry: Option<&Path>,
    averaging: Averaging,
    format: ReportFormat,
    out: &mut dyn Write,
) -> Result<()> {
    let reg = registry.map(LabelRegistry::load).transpose()?;
    let base = load_run(baseline, reg.as_ref())?;
    let restr = load_run(restricted, reg.as_ref())?;
    let report: ComparisonReport = compare_runs(&base, &restr, averaging)?;
    match format {
        ReportFormat::Json => emit(
            out,
            &format!("{}\n", serde_json::to_string_pretty(&report)?),
        ),
        ReportFormat::Table => {
            let mut text = render_metrics_table(&[
                ("baseline", &report.baseline.metrics),
                ("restricted", &report.restricted.metrics),
            ]);
            text.push_str(&confidence_lines("baseline", &report.baseline.confidence));
            text.push_str(&confidence_lines(
                "restricted",
                &report.restricted.confidence,
            ));
            text.push_str(&format!(
                "accuracy delta\t{:+.2}%\n",
                report.deltas.accuracy * 100.0
            ));
            emit(out, &text)
        }
    }
}

#[derive(Deserialize)]
struct PairDocument {
    pairs: Vec<PairEntry>,
}

#[derive(Deserialize)]
struct PairEntry {
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Serialize)]
struct InfoNceReport {
    n: usize,
    tau: f64,
    loss: f64,
}

fn infonce(pairs: &Path, tau: f64, out: &mut dyn Write) -> Result<()> {
    let doc: PairDocument = serde_json::from_str(&read_text(pairs)?)?;
    let batch = doc
        .pairs
        .into_iter()
        .map(|p| Ok((EmbeddingVector::new(p.x)?, EmbeddingVector::new(p.y)?)))
        .collect::<Result<Vec<_>>>()?;
    let loss = info_nce(&batch, tau)?;
    let report = InfoNceReport {
        n: batch.len(),
        tau,
        loss,
    };
    emit(
        out,
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )
}

/// Labels that appear in any prediction record, sorted; handy for diagnostics.
pub fn labels_in(predictions: &[Prediction]) -> BTreeSet<String> {
    predictions
        .iter()
        .flat_map(|p| p.labels.iter().cloned())
        .collect()
}
