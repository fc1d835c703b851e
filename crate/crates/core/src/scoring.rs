//! Similarity logits, softmax, hard/soft label-space restriction and predictions.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{ClassEmbeddingTable, ClipRecord, EmbeddingVector};
use crate::error::{Error, Result};
use crate::registry::{LabelRegistry, LabelSpace, Provenance};
use crate::schedule::{format_timestamp, FallbackPolicy, Schedule};

pub const DEFAULT_TAU: f64 = 0.01;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionMode {
    /// Always score against the full label universe.
    #[default]
    Off,
    /// Drop out-of-schedule classes before the softmax.
    Hard,
    /// Subtract a penalty from out-of-schedule logits.
    Soft,
}

impl FromStr for RestrictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(RestrictionMode::Off),
            "hard" => Ok(RestrictionMode::Hard),
            "soft" => Ok(RestrictionMode::Soft),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for RestrictionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RestrictionMode::Off => "off",
            RestrictionMode::Hard => "hard",
            RestrictionMode::Soft => "soft",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestRegistryIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub tau: f64,
    pub mode: RestrictionMode,
    pub penalty_lambda: f64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            tau: DEFAULT_TAU,
            mode: RestrictionMode::Off,
            penalty_lambda: 0.0,
            tie_break: TieBreak::LowestRegistryIndex,
        }
    }
}

impl ScoringConfig {
    pub fn new(mode: RestrictionMode, tau: f64, penalty_lambda: f64) -> Result<Self> {
        let config = ScoringConfig {
            tau,
            mode,
            penalty_lambda,
            tie_break: TieBreak::LowestRegistryIndex,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        check_lambda(self.penalty_lambda)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "tau must be positive and finite, got {tau}"
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "penalty lambda must be nonnegative and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// Per-label scores aligned to a label space.
#[derive(Debug, Clone)]
pub struct LogitVector {
    pub values: Vec<f64>,
    pub space: LabelSpace,
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let dot = a.normalize()?.dot(&b.normalize()?)?;
    Ok(dot.clamp(-1.0, 1.0))
}

/// `sim(clip, class) / tau` for every class in `space`, in space order.
pub fn compute_logits(
    clip: &EmbeddingVector,
    table: &ClassEmbeddingTable,
    space: &LabelSpace,
    tau: f64,
) -> Result<LogitVector> {
    check_tau(tau)?;
    if clip.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            found: clip.dim(),
        });
    }
    let clip = clip.normalize()?;
    let values = space
        .label_ids()
        .iter()
        .map(|id| {
            let class = table
                .get(id)
                .ok_or_else(|| Error::MissingEmbedding(id.clone()))?;
            Ok(cosine_similarity(&clip, class)? / tau)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LogitVector {
        values,
        space: space.clone(),
    })
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("softmax"));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if *v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Logits over `restricted` only; the removed classes never enter the softmax.
pub fn restrict_hard(
    table: &ClassEmbeddingTable,
    clip: &EmbeddingVector,
    full_space: &LabelSpace,
    restricted: &LabelSpace,
    tau: f64,
) -> Result<LogitVector> {
    if restricted.is_empty() {
        return Err(Error::EmptyLabelSpace);
    }
    restricted.check_subset_of(full_space)?;
    compute_logits(clip, table, restricted, tau)
}

/// Subtracts `lambda` from every logit whose label is outside `restricted`.
pub fn restrict_soft(
    logits: &LogitVector,
    restricted: &LabelSpace,
    lambda: f64,
) -> Result<LogitVector> {
    check_lambda(lambda)?;
    restricted.check_subset_of(&logits.space)?;
    let values = logits
        .space
        .indices()
        .iter()
        .zip(&logits.values)
        .map(|(&i, &l)| {
            if restricted.contains_index(i) {
                l
            } else {
                l - lambda
            }
        })
        .collect();
    Ok(LogitVector {
        values,
        space: logits.space.clone(),
    })
}

/// One scored clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub clip_id: String,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    pub predicted_label: String,
    pub confidence: f64,
    /// Labels of `distribution`, in registry order.
    pub labels: Vec<String>,
    pub distribution: Vec<f64>,
    /// Schedule-resolved label space (in soft mode, the unpenalized classes).
    pub resolved_labels: Vec<String>,
    pub provenance: Provenance,
    pub config: ScoringConfig,
    pub fallback: FallbackPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamp: Option<String>,
}

impl Prediction {
    pub fn is_correct(&self, truth: &str) -> bool {
        self.predicted_label == truth
    }
}

/// Scores one clip against the label space the schedule allows at its timestamp.
pub fn predict(
    clip: &ClipRecord,
    table: &ClassEmbeddingTable,
    schedule: &Schedule,
    registry: &LabelRegistry,
    config: &ScoringConfig,
    fallback: FallbackPolicy,
) -> Result<Prediction> {
    config.validate()?;
    let full = registry.full_space();
    let (resolved, logits) = match config.mode {
        RestrictionMode::Off => {
            let logits = compute_logits(&clip.embedding, table, &full, config.tau)?;
            (full, logits)
        }
        RestrictionMode::Hard => {
            let resolved = schedule.resolve_label_space(registry, &clip.timestamp, fallback)?;
            if resolved.is_empty() {
                return Err(Error::EmptyLabelSpace);
            }
            let logits = restrict_hard(table, &clip.embedding, &full, &resolved, config.tau)?;
            (resolved, logits)
        }
        RestrictionMode::Soft => {
            let resolved = schedule.resolve_label_space(registry, &clip.timestamp, fallback)?;
            if resolved.is_empty() {
                return Err(Error::EmptyLabelSpace);
            }
            let logits = compute_logits(&clip.embedding, table, &full, config.tau)?;
            let logits = restrict_soft(&logits, &resolved, config.penalty_lambda)?;
            (resolved, logits)
        }
    };
    let distribution = softmax(&logits.values)?;
    let best = argmax(&distribution).expect("label space is nonempty");
    Ok(Prediction {
        clip_id: clip.clip_id.clone(),
        timestamp: format_timestamp(&clip.timestamp),
        ground_truth: clip.ground_truth.clone(),
        predicted_label: logits.space.label_ids()[best].clone(),
        confidence: distribution[best],
        labels: logits.space.label_ids().to_vec(),
        distribution,
        resolved_labels: resolved.label_ids().to_vec(),
        provenance: resolved.provenance().clone(),
        config: *config,
        fallback,
        stamp: None,
    })
}

/// Scores every clip in parallel; results come back sorted by clip id.
pub fn predict_batch(
    clips: &[ClipRecord],
    table: &ClassEmbeddingTable,
    schedule: &Schedule,
    registry: &LabelRegistry,
    config: &ScoringConfig,
    fallback: FallbackPolicy,
) -> Vec<(String, Result<Prediction>)> {
    let mut results: Vec<_> = clips
        .par_iter()
        .map(|clip| {
            let scored = predict(clip, table, schedule, registry, config, fallback)
                .map_err(|e| e.for_clip(&clip.clip_id));
            (clip.clip_id.clone(), scored)
        })
        .collect();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    results
}

/// Mean InfoNCE loss over the batch: row `i` is a softmax over `sim(x_i, y_j) / tau`
/// with the matching pair `j = i` as the target.
pub fn info_nce(pairs: &[(EmbeddingVector, EmbeddingVector)], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("InfoNCE batch"));
    }
    let dim = pairs[0].0.dim();
    let mut xs = Vec::with_capacity(pairs.len());
    let mut ys = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        for v in [x, y] {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
        }
        xs.push(x.normalize()?);
        ys.push(y.normalize()?);
    }

    let mut total = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let row = ys
            .iter()
            .map(|y| Ok(cosine_similarity(x, y)? / tau))
            .collect::<Result<Vec<f64>>>()?;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total += log_sum - row[i];
    }
    Ok(total / pairs.len() as f64)
}
