//! Activity-label universe and the task → activity-set mapping.
//!
//! The registry fixes label order for the whole pipeline: every label space,
//! logit vector and probability vector is aligned to it.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityLabel {
    pub id: String,
    pub display_name: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub id: String,
    pub name: String,
    #[serde(rename = "activities")]
    pub activity_ids: Vec<String>,
}

/// On-disk shape of a registry file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryDocument {
    pub labels: Vec<ActivityLabel>,
    #[serde(default)]
    pub tasks: Vec<TaskDefinition>,
}

impl RegistryDocument {
    pub fn from_json(document: &str) -> Result<Self> {
        Ok(serde_json::from_str(document)?)
    }

    /// Normalizes ids in place and returns every invariant violation found.
    pub fn normalize_and_check(&mut self) -> Vec<Error> {
        let mut problems = Vec::new();
        if self.labels.is_empty() {
            problems.push(Error::EmptyInput("registry labels"));
        }

        let mut seen = HashSet::new();
        for label in &mut self.labels {
            match normalize_id(&label.id) {
                Ok(id) => label.id = id,
                Err(reason) => {
                    problems.push(Error::InvalidId {
                        kind: "label",
                        id: label.id.clone(),
                        reason,
                    });
                    continue;
                }
            }
            if !seen.insert(label.id.clone()) {
                problems.push(Error::DuplicateId {
                    kind: "label",
                    id: label.id.clone(),
                });
            }
            if label.prompt.trim().is_empty() {
                problems.push(Error::EmptyPrompt(label.id.clone()));
            }
        }

        let mut task_ids = HashSet::new();
        for task in &mut self.tasks {
            if task.id.trim().is_empty() {
                problems.push(Error::InvalidId {
                    kind: "task",
                    id: task.id.clone(),
                    reason: "empty",
                });
            }
            if !task_ids.insert(task.id.clone()) {
                problems.push(Error::DuplicateId {
                    kind: "task",
                    id: task.id.clone(),
                });
            }
            if task.activity_ids.is_empty() {
                problems.push(Error::EmptyTask(task.id.clone()));
            }
            let mut in_task = HashSet::new();
            for activity in &mut task.activity_ids {
                if let Ok(id) = normalize_id(activity) {
                    *activity = id;
                }
                if !seen.contains(activity.as_str()) {
                    problems.push(Error::DanglingActivity {
                        task: task.id.clone(),
                        label: activity.clone(),
                    });
                }
                if !in_task.insert(activity.clone()) {
                    problems.push(Error::DuplicateId {
                        kind: "task activity",
                        id: format!("{}/{}", task.id, activity),
                    });
                }
            }
        }
        problems
    }
}

/// Lowercases an id; rejects empty ids and ids containing whitespace.
pub fn normalize_id(raw: &str) -> std::result::Result<String, &'static str> {
    if raw.is_empty() {
        return Err("empty");
    }
    if raw.chars().any(char::is_whitespace) {
        return Err("contains whitespace");
    }
    Ok(raw.to_lowercase())
}

#[derive(Debug, Clone)]
pub struct LabelRegistry {
    labels: Vec<ActivityLabel>,
    tasks: Vec<TaskDefinition>,
    label_index: HashMap<String, usize>,
    task_index: HashMap<String, usize>,
    fingerprint: u64,
}

impl LabelRegistry {
    /// Parses and validates a registry document.
    pub fn from_json(document: &str) -> Result<Self> {
        Self::from_document(RegistryDocument::from_json(document)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_document(mut doc: RegistryDocument) -> Result<Self> {
        if let Some(first) = doc.normalize_and_check().into_iter().next() {
            return Err(first);
        }
        let label_index = doc
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.clone(), i))
            .collect();
        let task_index = doc
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        let mut hasher = DefaultHasher::new();
        for label in &doc.labels {
            label.id.hash(&mut hasher);
        }
        Ok(LabelRegistry {
            labels: doc.labels,
            tasks: doc.tasks,
            label_index,
            task_index,
            fingerprint: hasher.finish(),
        })
    }

    pub fn labels(&self) -> &[ActivityLabel] {
        &self.labels
    }

    pub fn tasks(&self) -> &[TaskDefinition] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label_id: &str) -> Option<usize> {
        self.label_index.get(label_id).copied()
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskDefinition> {
        self.task_index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn label_ids(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| l.id.as_str())
    }

    /// The entire label universe.
    pub fn full_space(&self) -> LabelSpace {
        self.space_from_indices((0..self.labels.len()).collect(), Provenance::Full)
    }

    /// Labels belonging to one scheduled task.
    pub fn label_space_for_task(&self, task_id: &str) -> Result<LabelSpace> {
        let task = self
            .task(task_id)
            .ok_or_else(|| Error::UnknownTask(task_id.to_string()))?;
        let members = task
            .activity_ids
            .iter()
            .map(|id| self.index_of(id).expect("validated at load"))
            .collect();
        Ok(self.space_from_indices(
            members,
            Provenance::Task {
                task: task_id.to_string(),
            },
        ))
    }

    /// Builds a space from arbitrary label ids; order of `ids` is irrelevant.
    pub fn label_space_from_ids<S: AsRef<str>>(
        &self,
        ids: &[S],
        provenance: Provenance,
    ) -> Result<LabelSpace> {
        let members = ids
            .iter()
            .map(|id| {
                let id = id.as_ref();
                self.index_of(id)
                    .ok_or_else(|| Error::UnknownLabel(id.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.space_from_indices(members, provenance))
    }

    /// Empty space, used only by the `empty` fallback policy.
    pub fn empty_space(&self) -> LabelSpace {
        self.space_from_indices(Vec::new(), Provenance::Fallback)
    }

    fn space_from_indices(&self, indices: Vec<usize>, provenance: Provenance) -> LabelSpace {
        let members: BTreeSet<usize> = indices.into_iter().collect();
        let members: Vec<usize> = members.into_iter().collect();
        let label_ids = members.iter().map(|&i| self.labels[i].id.clone()).collect();
        LabelSpace {
            registry: self.fingerprint,
            members,
            label_ids,
            provenance,
        }
    }
}

/// How a label space came to be.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Full,
    Task { task: String },
    Union { tasks: Vec<String> },
    Fallback,
}

impl Provenance {
    fn task_ids(&self) -> Vec<String> {
        match self {
            Provenance::Task { task } => vec![task.clone()],
            Provenance::Union { tasks } => tasks.clone(),
            Provenance::Full | Provenance::Fallback => Vec::new(),
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Full => f.write_str("full"),
            Provenance::Task { task } => write!(f, "task({task})"),
            Provenance::Union { tasks } => write!(f, "union({})", tasks.join(",")),
            Provenance::Fallback => f.write_str("fallback"),
        }
    }
}

/// An ordered subset of a registry's labels, always kept in registry order.
#[derive(Debug, Clone)]
pub struct LabelSpace {
    registry: u64,
    members: Vec<usize>,
    label_ids: Vec<String>,
    provenance: Provenance,
}

impl LabelSpace {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn label_ids(&self) -> &[String] {
        &self.label_ids
    }

    /// Registry indices of the members, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.members
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn contains_index(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }

    pub fn contains(&self, label_id: &str) -> bool {
        self.label_ids.iter().any(|l| l == label_id)
    }

    pub fn same_registry(&self, other: &LabelSpace) -> bool {
        self.registry == other.registry
    }

    /// Position of `label_id` inside this space.
    pub fn position(&self, label_id: &str) -> Option<usize> {
        self.label_ids.iter().position(|l| l == label_id)
    }

    /// Errors with the first member of `self` missing from `outer`.
    pub fn check_subset_of(&self, outer: &LabelSpace) -> Result<()> {
        if !self.same_registry(outer) {
            return Err(Error::MixedRegistry);
        }
        match self
            .members
            .iter()
            .zip(&self.label_ids)
            .find(|(i, _)| !outer.contains_index(**i))
        {
            Some((_, id)) => Err(Error::NotSubset(id.clone())),
            None => Ok(()),
        }
    }
}

impl PartialEq for LabelSpace {
    fn eq(&self, other: &Self) -> bool {
        self.registry == other.registry
            && self.members == other.members
            && self.provenance == other.provenance
    }
}

/// Set union in registry order; provenance lists the contributing tasks.
///
/// A single-element input is returned unchanged.
pub fn union_label_spaces(spaces: &[LabelSpace]) -> Result<LabelSpace> {
    let (first, rest) = spaces
        .split_first()
        .ok_or(Error::EmptyInput("label space union"))?;
    if rest.iter().any(|s| !s.same_registry(first)) {
        return Err(Error::MixedRegistry);
    }
    if rest.is_empty() {
        return Ok(first.clone());
    }

    let mut members: BTreeSet<(usize, &str)> = BTreeSet::new();
    let mut tasks: BTreeSet<String> = BTreeSet::new();
    for space in spaces {
        members.extend(
            space
                .members
                .iter()
                .copied()
                .zip(space.label_ids.iter().map(String::as_str)),
        );
        tasks.extend(space.provenance.task_ids());
    }
    let (members, label_ids) = members
        .into_iter()
        .map(|(i, id)| (i, id.to_string()))
        .unzip();
    Ok(LabelSpace {
        registry: first.registry,
        members,
        label_ids,
        provenance: Provenance::Union {
            tasks: tasks.into_iter().collect(),
        },
    })
}
