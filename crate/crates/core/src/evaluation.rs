//! Confusion matrices, averaged P/R/F1, confidence statistics and
//! baseline-vs-restricted comparisons.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::LabelRegistry;
use crate::scoring::Prediction;

/// clip id → ground-truth label id
pub type Truths = BTreeMap<String, String>;

/// Collects the ground-truth labels carried by the predictions themselves.
pub fn truths_from_predictions(predictions: &[Prediction]) -> Truths {
    predictions
        .iter()
        .filter_map(|p| Some((p.clip_id.clone(), p.ground_truth.clone()?)))
        .collect()
}

/// Square count matrix, `counts[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = labels.len();
        if counts.len() != n || counts.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: counts.len(),
            });
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Adds another partial matrix over the same labels.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::MixedRegistry);
        }
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
        Ok(())
    }
}

/// Tallies `predictions` against `truths` over the label universe `labels`.
pub fn build_confusion(
    predictions: &[Prediction],
    truths: &Truths,
    labels: &[String],
) -> Result<ConfusionMatrix> {
    let index: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut cm = ConfusionMatrix::new(labels.to_vec());
    for p in predictions {
        let truth = truths
            .get(&p.clip_id)
            .ok_or_else(|| Error::MissingTruth(p.clip_id.clone()))?;
        let t = *index
            .get(truth.as_str())
            .ok_or_else(|| Error::UnknownLabel(truth.clone()))?;
        let q = *index
            .get(p.predicted_label.as_str())
            .ok_or_else(|| Error::UnknownLabel(p.predicted_label.clone()))?;
        cm.record(t, q);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Weighted,
    Macro,
    Micro,
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Averaging::Weighted),
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            other => Err(Error::InvalidConfig(format!("unknown averaging `{other}`"))),
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::Weighted => "weighted",
            Averaging::Macro => "macro",
            Averaging::Micro => "micro",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub averaging: Averaging,
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
    /// Classes that occur as truth or prediction, in label order.
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: AveragedMetrics,
    #[serde(rename = "micro")]
    pub micro_avg: AveragedMetrics,
    #[serde(rename = "weighted")]
    pub weighted_avg: AveragedMetrics,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    /// The averaged triple selected by `averaging`.
    pub fn selected(&self) -> AveragedMetrics {
        match self.averaging {
            Averaging::Weighted => self.weighted_avg,
            Averaging::Macro => self.macro_avg,
            Averaging::Micro => self.micro_avg,
        }
    }

    /// `Accuracy Precision Recall F1` with a percentage accuracy, two decimals each.
    pub fn render_row(&self) -> String {
        let avg = self.selected();
        format!(
            "{:.2}%\t{:.2}\t{:.2}\t{:.2}",
            self.accuracy * 100.0,
            avg.precision,
            avg.recall,
            avg.f1
        )
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Accuracy plus per-class and averaged precision/recall/F1.
///
/// Undefined ratios (a class never predicted, or never true) are reported
/// as 0 and listed in `warnings`. Macro averages run over the classes that
/// occur as truth or prediction; weighted averages use true-class support.
pub fn compute_metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix"));
    }
    let n = total as f64;
    let correct = cm.trace();
    let mut warnings = Vec::new();
    let mut per_class = Vec::new();
    let (mut weighted_p, mut weighted_r, mut weighted_f) = (0.0, 0.0, 0.0);
    let (mut fp_total, mut fn_total) = (0u64, 0u64);

    for (c, label) in cm.labels().iter().enumerate() {
        let support = cm.support(c);
        let predicted = cm.predicted(c);
        if support == 0 && predicted == 0 {
            continue;
        }
        let tp = cm.counts()[c][c];
        fp_total += predicted - tp;
        fn_total += support - tp;
        let precision = if predicted == 0 {
            warnings.push(format!(
                "precision of `{label}` is undefined (never predicted); using 0"
            ));
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = if support == 0 {
            warnings.push(format!(
                "recall of `{label}` is undefined (no true samples); using 0"
            ));
            0.0
        } else {
            tp as f64 / support as f64
        };
        let f = f1(precision, recall);
        let w = support as f64;
        weighted_p += w * precision;
        weighted_r += w * recall;
        weighted_f += w * f;
        per_class.push(ClassMetrics {
            label: label.clone(),
            precision,
            recall,
            f1: f,
            support,
            predicted,
        });
    }

    let k = per_class.len() as f64;
    let macro_avg = AveragedMetrics {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    let tp = correct as f64;
    // single-label: every error is one FP and one FN, so these all equal accuracy
    let micro_p = tp / (tp + fp_total as f64);
    let micro_r = tp / (tp + fn_total as f64);
    let micro_avg = AveragedMetrics {
        precision: micro_p,
        recall: micro_r,
        f1: if correct == 0 {
            0.0
        } else {
            f1(micro_p, micro_r)
        },
    };

    Ok(MetricsReport {
        averaging,
        total,
        correct,
        accuracy: tp / n,
        per_class,
        macro_avg,
        micro_avg,
        weighted_avg: AveragedMetrics {
            precision: weighted_p / n,
            recall: weighted_r / n,
            f1: weighted_f / n,
        },
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Summary {
    /// `None` for an empty sample. Quartiles interpolate linearly between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantile = |q: f64| {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Some(Summary {
            count: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median: quantile(0.5),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            q1: quantile(0.25),
            q3: quantile(0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceStats {
    pub all: Summary,
    /// Absent when no prediction is correct.
    pub correct: Option<Summary>,
}

/// Confidence (max probability) statistics over all and over correct predictions.
pub fn confidence_stats(predictions: &[Prediction], truths: &Truths) -> Result<ConfidenceStats> {
    let all: Vec<f64> = predictions.iter().map(|p| p.confidence).collect();
    let correct: Vec<f64> = predictions
        .iter()
        .filter(|p| truths.get(&p.clip_id).is_some_and(|t| p.is_correct(t)))
        .map(|p| p.confidence)
        .collect();
    Ok(ConfidenceStats {
        all: Summary::of(&all).ok_or(Error::EmptyInput("confidence statistics"))?,
        correct: Summary::of(&correct),
    })
}

/// One evaluated run: predictions, truths and the label universe they index.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub predictions: Vec<Prediction>,
    pub truths: Truths,
    pub labels: Vec<String>,
}

impl RunArtifacts {
    /// Truths come from the records. The label universe is the registry's when
    /// given; otherwise every label mentioned by the run, in first-seen order.
    pub fn from_predictions(
        predictions: Vec<Prediction>,
        registry: Option<&LabelRegistry>,
    ) -> Self {
        let truths = truths_from_predictions(&predictions);
        let labels = match registry {
            Some(r) => r.label_ids().map(str::to_string).collect(),
            None => labels_mentioned(&predictions, &truths),
        };
        RunArtifacts {
            predictions,
            truths,
            labels,
        }
    }
}

fn labels_mentioned(predictions: &[Prediction], truths: &Truths) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    let candidates = predictions
        .iter()
        .flat_map(|p| p.labels.iter().chain(std::iter::once(&p.predicted_label)))
        .chain(truths.values());
    for label in candidates {
        if seen.insert(label.as_str()) {
            order.push(label.clone());
        }
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub metrics: MetricsReport,
    pub confidence: ConfidenceStats,
}

/// Confusion, metrics and confidence for one run.
pub fn summarize_run(run: &RunArtifacts, averaging: Averaging) -> Result<RunSummary> {
    if run.predictions.is_empty() {
        return Err(Error::EmptyInput("prediction set"));
    }
    let cm = build_confusion(&run.predictions, &run.truths, &run.labels)?;
    Ok(RunSummary {
        metrics: compute_metrics(&cm, averaging)?,
        confidence: confidence_stats(&run.predictions, &run.truths)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDelta {
    pub clip_id: String,
    pub truth: String,
    pub baseline_label: String,
    pub restricted_label: String,
    pub baseline_confidence: f64,
    pub restricted_confidence: f64,
    pub confidence_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_confidence_all: f64,
    /// Absent unless both runs have at least one correct prediction.
    pub mean_confidence_correct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub averaging: Averaging,
    pub baseline: RunSummary,
    pub restricted: RunSummary,
    /// restricted − baseline
    pub deltas: Deltas,
    pub per_clip: Vec<ClipDelta>,
}

/// Pairs two runs over the same clips and reports restricted − baseline deltas.
pub fn compare_runs(
    baseline: &RunArtifacts,
    restricted: &RunArtifacts,
    averaging: Averaging,
) -> Result<ComparisonReport> {
    let base_ids: BTreeSet<&str> = baseline
        .predictions
        .iter()
        .map(|p| p.clip_id.as_str())
        .collect();
    let restr_ids: BTreeSet<&str> = restricted
        .predictions
        .iter()
        .map(|p| p.clip_id.as_str())
        .collect();
    if base_ids != restr_ids {
        return Err(Error::ClipSetMismatch {
            only_baseline: base_ids
                .difference(&restr_ids)
                .map(|s| s.to_string())
                .collect(),
            only_restricted: restr_ids
                .difference(&base_ids)
                .map(|s| s.to_string())
                .collect(),
        });
    }
    for id in &base_ids {
        if baseline.truths.get(*id) != restricted.truths.get(*id) {
            return Err(Error::TruthMismatch(id.to_string()));
        }
    }

    // both runs are scored over the union of their label universes
    let mut labels = baseline.labels.clone();
    for label in &restricted.labels {
        if !labels.contains(label) {
            labels.push(label.clone());
        }
    }
    let with_labels = |run: &RunArtifacts| RunArtifacts {
        labels: labels.clone(),
        ..run.clone()
    };
    let base = summarize_run(&with_labels(baseline), averaging)?;
    let restr = summarize_run(&with_labels(restricted), averaging)?;

    let restricted_by_id: HashMap<&str, &Prediction> = restricted
        .predictions
        .iter()
        .map(|p| (p.clip_id.as_str(), p))
        .collect();
    let mut per_clip: Vec<ClipDelta> = baseline
        .predictions
        .iter()
        .map(|b| {
            let r = restricted_by_id[b.clip_id.as_str()];
            ClipDelta {
                clip_id: b.clip_id.clone(),
                truth: baseline.truths[&b.clip_id].clone(),
                baseline_label: b.predicted_label.clone(),
                restricted_label: r.predicted_label.clone(),
                baseline_confidence: b.confidence,
                restricted_confidence: r.confidence,
                confidence_delta: r.confidence - b.confidence,
            }
        })
        .collect();
    per_clip.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));

    let (bs, rs) = (base.metrics.selected(), restr.metrics.selected());
    let deltas = Deltas {
        accuracy: restr.metrics.accuracy - base.metrics.accuracy,
        precision: rs.precision - bs.precision,
        recall: rs.recall - bs.recall,
        f1: rs.f1 - bs.f1,
        mean_confidence_all: restr.confidence.all.mean - base.confidence.all.mean,
        mean_confidence_correct: match (&restr.confidence.correct, &base.confidence.correct) {
            (Some(r), Some(b)) => Some(r.mean - b.mean),
            _ => None,
        },
    };
    Ok(ComparisonReport {
        averaging,
        baseline: base,
        restricted: restr,
        deltas,
        per_clip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Provenance;
    use crate::schedule::FallbackPolicy;
    use crate::scoring::ScoringConfig;
    use proptest::prelude::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("l{i}")).collect()
    }

    fn pred(clip: &str, label: &str, confidence: f64) -> Prediction {
        Prediction {
            clip_id: clip.into(),
            timestamp: "2023-05-01T00:00:00Z".into(),
            ground_truth: None,
            predicted_label: label.into(),
            confidence,
            labels: vec![label.into()],
            distribution: vec![confidence],
            resolved_labels: vec![],
            provenance: Provenance::Full,
            config: ScoringConfig::default(),
            fallback: FallbackPolicy::FullSpace,
            stamp: None,
        }
    }

    #[test]
    fn single_correct_clip() {
        let truths: Truths = [("c".to_string(), "l1".to_string())].into();
        let cm = build_confusion(&[pred("c", "l1", 0.9)], &truths, &labels(3)).unwrap();
        assert_eq!(cm.total(), 1);
        assert_eq!(cm.counts()[1][1], 1);
    }

    #[test]
    fn missing_and_unknown_truths() {
        let empty = Truths::new();
        let err = build_confusion(&[pred("c9", "l0", 0.9)], &empty, &labels(2)).unwrap_err();
        assert!(matches!(err, Error::MissingTruth(ref c) if c == "c9"));
        let alien: Truths = [("c".to_string(), "welding".to_string())].into();
        assert!(matches!(
            build_confusion(&[pred("c", "l0", 0.9)], &alien, &labels(2)),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn perfect_predictions_score_one() {
        let cm = ConfusionMatrix::from_counts(
            labels(3),
            vec![vec![2, 0, 0], vec![0, 3, 0], vec![0, 0, 1]],
        )
        .unwrap();
        let m = compute_metrics(&cm, Averaging::Weighted).unwrap();
        assert_eq!(m.accuracy, 1.0);
        for avg in [m.macro_avg, m.micro_avg, m.weighted_avg] {
            assert_eq!((avg.precision, avg.recall, avg.f1), (1.0, 1.0, 1.0));
        }
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn three_class_fixture_against_hand_arithmetic() {
        // rows = truth, cols = prediction
        let cm = ConfusionMatrix::from_counts(
            labels(3),
            vec![vec![2, 1, 0], vec![0, 1, 1], vec![0, 0, 2]],
        )
        .unwrap();
        let m = compute_metrics(&cm, Averaging::Weighted).unwrap();
        // class 0: P 2/2, R 2/3, F 4/5;  class 1: P 1/2, R 1/2, F 1/2;  class 2: P 2/3, R 1, F 4/5
        // supports 3, 2, 2 over 7
        let wp = (3.0 * 1.0 + 2.0 * 0.5 + 2.0 * (2.0 / 3.0)) / 7.0;
        let wr = (3.0 * (2.0 / 3.0) + 2.0 * 0.5 + 2.0 * 1.0) / 7.0;
        let wf = (3.0 * 0.8 + 2.0 * 0.5 + 2.0 * 0.8) / 7.0;
        assert!((m.weighted_avg.precision - wp).abs() < 1e-15);
        assert!((m.weighted_avg.recall - wr).abs() < 1e-15);
        assert!((m.weighted_avg.f1 - wf).abs() < 1e-15);
        assert!((m.accuracy - 5.0 / 7.0).abs() < 1e-15);
        let mp = (1.0 + 0.5 + 2.0 / 3.0) / 3.0;
        assert!((m.macro_avg.precision - mp).abs() < 1e-15);
    }

    #[test]
    fn zero_division_yields_zero_with_warning() {
        // l2 is true once but never predicted; l1 is predicted but never true
        let cm = ConfusionMatrix::from_counts(
            labels(3),
            vec![vec![1, 0, 0], vec![0, 0, 0], vec![0, 1, 0]],
        )
        .unwrap();
        let m = compute_metrics(&cm, Averaging::Macro).unwrap();
        assert_eq!(m.warnings.len(), 2);
        let l2 = m.per_class.iter().find(|c| c.label == "l2").unwrap();
        assert_eq!((l2.precision, l2.recall, l2.f1), (0.0, 0.0, 0.0));
        assert!(m.per_class.iter().all(|c| c.f1.is_finite()));
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let cm = ConfusionMatrix::new(labels(2));
        assert!(compute_metrics(&cm, Averaging::Weighted).is_err());
    }

    #[test]
    fn confidence_examples() {
        let truths: Truths = [
            ("a".to_string(), "x".to_string()),
            ("b".to_string(), "x".to_string()),
        ]
        .into();
        let one = confidence_stats(&[pred("a", "x", 0.5)], &truths).unwrap();
        assert_eq!(one.all.mean, 0.5);
        assert_eq!(one.correct.unwrap().mean, 0.5);

        let two = confidence_stats(&[pred("a", "x", 0.8), pred("b", "y", 0.6)], &truths).unwrap();
        assert!((two.all.mean - 0.7).abs() < 1e-15);
        assert_eq!(two.correct.as_ref().unwrap().mean, 0.8);
        assert_eq!(two.correct.unwrap().count, 1);

        let none_right = confidence_stats(&[pred("b", "y", 0.6)], &truths).unwrap();
        assert!(none_right.correct.is_none());
        assert!(confidence_stats(&[], &truths).is_err());
    }

    #[test]
    fn summary_quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(
            (s.min, s.q1, s.median, s.q3, s.max),
            (1.0, 2.0, 3.0, 4.0, 5.0)
        );
        let even = Summary::of(&[1.0, 2.0]).unwrap();
        assert_eq!(even.median, 1.5);
        assert_eq!(even.q1, 1.25);
    }

    fn run(preds: Vec<(&str, &str, &str, f64)>) -> RunArtifacts {
        let predictions: Vec<Prediction> = preds
            .into_iter()
            .map(|(clip, truth, label, conf)| Prediction {
                ground_truth: Some(truth.into()),
                ..pred(clip, label, conf)
            })
            .collect();
        RunArtifacts::from_predictions(predictions, None)
    }

    #[test]
    fn identical_runs_have_zero_deltas() {
        let a = run(vec![("c1", "x", "x", 0.9), ("c2", "y", "x", 0.6)]);
        let r = compare_runs(&a, &a, Averaging::Weighted).unwrap();
        assert_eq!(r.deltas.accuracy, 0.0);
        assert_eq!(r.deltas.f1, 0.0);
        assert_eq!(r.deltas.mean_confidence_all, 0.0);
        assert!(r.per_clip.iter().all(|c| c.confidence_delta == 0.0));
    }

    #[test]
    fn clip_set_mismatch_lists_difference() {
        let a = run(vec![("c1", "x", "x", 0.9), ("c2", "x", "x", 0.9)]);
        let b = run(vec![("c1", "x", "x", 0.9), ("c3", "x", "x", 0.9)]);
        match compare_runs(&a, &b, Averaging::Weighted).unwrap_err() {
            Error::ClipSetMismatch {
                only_baseline,
                only_restricted,
            } => {
                assert_eq!(only_baseline, ["c2"]);
                assert_eq!(only_restricted, ["c3"]);
            }
            other => panic!("unexpected {other}"),
        }
        let c = run(vec![("c1", "y", "x", 0.9), ("c2", "x", "x", 0.9)]);
        assert!(matches!(
            compare_runs(&a, &c, Averaging::Weighted),
            Err(Error::TruthMismatch(_))
        ));
    }

    #[test]
    fn merge_is_additive() {
        let mut a = ConfusionMatrix::from_counts(labels(2), vec![vec![1, 0], vec![2, 3]]).unwrap();
        let b = ConfusionMatrix::from_counts(labels(2), vec![vec![0, 4], vec![1, 0]]).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.counts(), [vec![1, 4], vec![3, 3]]);
        assert!(a.merge(&ConfusionMatrix::new(labels(3))).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..7)
            .prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(0u64..6, n), n))
    }

    proptest! {
        #[test]
        fn micro_and_weighted_identities(counts in matrix_strategy()) {
            let n = counts.len();
            let cm = ConfusionMatrix::from_counts(labels(n), counts).unwrap();
            prop_assume!(cm.total() > 0);
            let m = compute_metrics(&cm, Averaging::Weighted).unwrap();
            prop_assert_eq!(m.micro_avg.precision, m.accuracy);
            prop_assert_eq!(m.micro_avg.recall, m.accuracy);
            prop_assert!((m.micro_avg.f1 - m.accuracy).abs() < 1e-15);
            prop_assert!((m.weighted_avg.recall - m.accuracy).abs() < 1e-12);
            for c in &m.per_class {
                prop_assert!(c.f1.is_finite() && (0.0..=1.0).contains(&c.f1));
            }
        }

        #[test]
        fn metrics_invariant_under_relabeling(counts in matrix_strategy(), rot in 0usize..7) {
            let n = counts.len();
            let cm = ConfusionMatrix::from_counts(labels(n), counts.clone()).unwrap();
            prop_assume!(cm.total() > 0);
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let mut permuted = vec![vec![0; n]; n];
            let mut permuted_labels = vec![String::new(); n];
            for i in 0..n {
                permuted_labels[perm[i]] = format!("l{i}");
                for j in 0..n {
                    permuted[perm[i]][perm[j]] = counts[i][j];
                }
            }
            let pm = ConfusionMatrix::from_counts(permuted_labels, permuted).unwrap();
            let a = compute_metrics(&cm, Averaging::Weighted).unwrap();
            let b = compute_metrics(&pm, Averaging::Weighted).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            for (x, y) in [(a.weighted_avg, b.weighted_avg), (a.macro_avg, b.macro_avg)] {
                prop_assert!((x.precision - y.precision).abs() < 1e-12);
                prop_assert!((x.recall - y.recall).abs() < 1e-12);
                prop_assert!((x.f1 - y.f1).abs() < 1e-12);
            }
            for c in &a.per_class {
                let d = b.per_class.iter().find(|d| d.label == c.label).unwrap();
                prop_assert_eq!(c, d);
            }
        }
    }
}
