//! Schedule-constrained zero-shot activity classification.
//!
//! A construction schedule says which high-level tasks are under way at a
//! given moment; each task maps to a small set of low-level activity
//! labels. Clip embeddings are scored against class-prompt embeddings over
//! that reduced label space (hard truncation) or with out-of-schedule
//! classes penalized (soft restriction), and runs with and without the
//! restriction can be evaluated side by side.
//!
//! Module map:
//! - [`registry`]: label universe and task → activity sets
//! - [`schedule`]: time windows and timestamp → label-space resolution
//! - [`embedding`]: vectors, pooling and the embedding file format
//! - [`scoring`]: cosine logits, softmax, restriction, predictions, InfoNCE
//! - [`evaluation`]: confusion, P/R/F1, confidence statistics, comparisons
//! - [`cli`]: the `taskscope` command

pub mod cli;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod registry;
pub mod schedule;
pub mod scoring;

pub use embedding::{mean_pool, ClassEmbeddingTable, ClipRecord, ClipSet, EmbeddingVector};
pub use error::{Error, Result};
pub use evaluation::{
    build_confusion, compare_runs, compute_metrics, confidence_stats, Averaging, ComparisonReport,
    ConfidenceStats, ConfusionMatrix, MetricsReport, RunArtifacts, Truths,
};
pub use registry::{
    union_label_spaces, ActivityLabel, LabelRegistry, LabelSpace, Provenance, TaskDefinition,
};
pub use schedule::{parse_timestamp, FallbackPolicy, Schedule, ScheduleEntry, Timestamp};
pub use scoring::{
    argmax, compute_logits, cosine_similarity, info_nce, predict, predict_batch, restrict_hard,
    restrict_soft, softmax, LogitVector, Prediction, RestrictionMode, ScoringConfig,
};
