//! Time-windowed task schedule and timestamp → label-space resolution.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{union_label_spaces, LabelRegistry, LabelSpace};

pub type Timestamp = DateTime<Utc>;

/// Parses an ISO-8601 / RFC 3339 timestamp. An explicit offset is required.
pub fn parse_timestamp(text: &str) -> Result<Timestamp> {
    DateTime::parse_from_rfc3339(text.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::Format(format!("invalid timestamp `{text}`: {e}")))
}

/// Canonical rendering used in every file this crate writes.
pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub task_id: String,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl ScheduleEntry {
    /// Half-open: `start <= t < end`.
    pub fn is_active_at(&self, t: &Timestamp) -> bool {
        self.start <= *t && *t < self.end
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDocument {
    task: String,
    start: String,
    end: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleDocument {
    entries: Vec<EntryDocument>,
}

/// What to do when no scheduled task covers a timestamp.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    #[default]
    FullSpace,
    Error,
    Empty,
}

impl FromStr for FallbackPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_space" => Ok(FallbackPolicy::FullSpace),
            "error" => Ok(FallbackPolicy::Error),
            "empty" => Ok(FallbackPolicy::Empty),
            other => Err(Error::InvalidConfig(format!(
                "unknown fallback policy `{other}`"
            ))),
        }
    }
}

impl fmt::Display for FallbackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FallbackPolicy::FullSpace => "full",
            FallbackPolicy::Error => "error",
            FallbackPolicy::Empty => "empty",
        })
    }
}

/// Validated schedule; entries sorted by `(start, task_id)`. Overlaps allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    entries: Vec<ScheduleEntry>,
}

impl Schedule {
    pub fn new(mut entries: Vec<ScheduleEntry>) -> Result<Self> {
        for (index, e) in entries.iter().enumerate() {
            if e.start >= e.end {
                return Err(Error::InvalidWindow {
                    index,
                    task: e.task_id.clone(),
                    start: format_timestamp(&e.start),
                    end: format_timestamp(&e.end),
                });
            }
        }
        entries.sort_by(|a, b| (a.start, &a.task_id).cmp(&(b.start, &b.task_id)));
        Ok(Schedule { entries })
    }

    /// Parses a schedule document (`{"entries": [{task, start, end}, ...]}`).
    pub fn from_json(document: &str) -> Result<Self> {
        let doc: ScheduleDocument = serde_json::from_str(document)?;
        let entries = doc
            .entries
            .into_iter()
            .map(|e| {
                Ok(ScheduleEntry {
                    task_id: e.task,
                    start: parse_timestamp(&e.start)?,
                    end: parse_timestamp(&e.end)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    /// Every entry whose task is unknown to `registry`.
    pub fn dangling_tasks(&self, registry: &LabelRegistry) -> Vec<Error> {
        let missing: BTreeSet<&str> = self
            .entries
            .iter()
            .filter(|e| registry.task(&e.task_id).is_none())
            .map(|e| e.task_id.as_str())
            .collect();
        missing
            .into_iter()
            .map(|t| Error::UnknownTask(t.to_string()))
            .collect()
    }

    /// Task ids active at `t`, sorted and deduplicated.
    pub fn active_tasks_at(&self, t: &Timestamp) -> Vec<String> {
        let active: BTreeSet<&str> = self
            .entries
            .iter()
            .take_while(|e| e.start <= *t)
            .filter(|e| e.is_active_at(t))
            .map(|e| e.task_id.as_str())
            .collect();
        active.into_iter().map(str::to_string).collect()
    }

    /// Union of the active tasks' label spaces, or the fallback when none is active.
    pub fn resolve_label_space(
        &self,
        registry: &LabelRegistry,
        t: &Timestamp,
        fallback: FallbackPolicy,
    ) -> Result<LabelSpace> {
        if let Some(err) = self.dangling_tasks(registry).into_iter().next() {
            return Err(err);
        }
        let active = self.active_tasks_at(t);
        if active.is_empty() {
            return match fallback {
                FallbackPolicy::FullSpace => {
                    let full = registry.full_space();
                    registry.label_space_from_ids(
                        full.label_ids(),
                        crate::registry::Provenance::Fallback,
                    )
                }
                FallbackPolicy::Error => Err(Error::NoActiveTask(format_timestamp(t))),
                FallbackPolicy::Empty => Ok(registry.empty_space()),
            };
        }
        let spaces = active
            .iter()
            .map(|task| registry.label_space_for_task(task))
            .collect::<Result<Vec<_>>>()?;
        union_label_spaces(&spaces)
    }
}
