//! Python bindings for `taskscope`.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use taskscope::evaluation::summarize_run;
use taskscope::schedule::format_timestamp;
use taskscope::{
    ClassEmbeddingTable, ClipSet, ConfusionMatrix, EmbeddingVector, FallbackPolicy, LogitVector,
    Provenance, RestrictionMode, RunArtifacts, ScoringConfig,
};

create_exception!(taskscope, TaskscopeError, PyException);

fn py_err(e: taskscope::Error) -> PyErr {
    TaskscopeError::new_err(e.to_string())
}

fn vector(values: Vec<f64>) -> PyResult<EmbeddingVector> {
    EmbeddingVector::new(values).map_err(py_err)
}

#[pyclass(name = "LabelRegistry", frozen, skip_from_py_object)]
struct PyLabelRegistry {
    inner: taskscope::LabelRegistry,
}

#[pymethods]
impl PyLabelRegistry {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = taskscope::LabelRegistry::load(path).map_err(py_err)?;
        Ok(PyLabelRegistry { inner })
    }

    #[staticmethod]
    fn from_json(document: &str) -> PyResult<Self> {
        let inner = taskscope::LabelRegistry::from_json(document).map_err(py_err)?;
        Ok(PyLabelRegistry { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn label_ids(&self) -> Vec<String> {
        self.inner.label_ids().map(str::to_string).collect()
    }

    fn task_ids(&self) -> Vec<String> {
        self.inner.tasks().iter().map(|t| t.id.clone()).collect()
    }

    /// Labels of one task, in registry order.
    fn task_labels(&self, task_id: &str) -> PyResult<Vec<String>> {
        let space = self.inner.label_space_for_task(task_id).map_err(py_err)?;
        Ok(space.label_ids().to_vec())
    }

    /// Labels of the union of several tasks, in registry order.
    fn union_labels(&self, task_ids: Vec<String>) -> PyResult<Vec<String>> {
        let spaces = task_ids
            .iter()
            .map(|t| self.inner.label_space_for_task(t))
            .collect::<taskscope::Result<Vec<_>>>()
            .map_err(py_err)?;
        let union = taskscope::union_label_spaces(&spaces).map_err(py_err)?;
        Ok(union.label_ids().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "LabelRegistry({} labels, {} tasks)",
            self.inner.len(),
            self.inner.tasks().len()
        )
    }
}

#[pyclass(name = "Schedule", frozen, skip_from_py_object)]
struct PySchedule {
    inner: taskscope::Schedule,
}

#[pymethods]
impl PySchedule {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = taskscope::Schedule::load(path).map_err(py_err)?;
        Ok(PySchedule { inner })
    }

    #[staticmethod]
    fn from_json(document: &str) -> PyResult<Self> {
        let inner = taskscope::Schedule::from_json(document).map_err(py_err)?;
        Ok(PySchedule { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.entries().len()
    }

    fn active_tasks(&self, at: &str) -> PyResult<Vec<String>> {
        let t = taskscope::parse_timestamp(at).map_err(py_err)?;
        Ok(self.inner.active_tasks_at(&t))
    }

    /// Returns `(labels, provenance)` for the instant `at`.
    #[pyo3(signature = (registry, at, fallback = "full"))]
    fn resolve(
        &self,
        registry: &PyLabelRegistry,
        at: &str,
        fallback: &str,
    ) -> PyResult<(Vec<String>, String)> {
        let t = taskscope::parse_timestamp(at).map_err(py_err)?;
        let fallback: FallbackPolicy = fallback.parse().map_err(py_err)?;
        let space = self
            .inner
            .resolve_label_space(&registry.inner, &t, fallback)
            .map_err(py_err)?;
        Ok((space.label_ids().to_vec(), space.provenance().to_string()))
    }
}

#[pyclass(name = "Prediction", frozen, get_all, skip_from_py_object)]
struct PyPrediction {
    clip_id: String,
    timestamp: String,
    ground_truth: Option<String>,
    predicted_label: String,
    confidence: f64,
    labels: Vec<String>,
    distribution: Vec<f64>,
    provenance: String,
    json: String,
}

#[pymethods]
impl PyPrediction {
    fn to_json(&self) -> String {
        self.json.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Prediction({}, {}, {:.4})",
            self.clip_id, self.predicted_label, self.confidence
        )
    }
}

impl PyPrediction {
    fn wrap(p: &taskscope::Prediction) -> PyResult<Self> {
        let json = serde_json::to_string(p).map_err(|e| py_err(taskscope::Error::from(e)))?;
        Ok(PyPrediction {
            clip_id: p.clip_id.clone(),
            timestamp: p.timestamp.clone(),
            ground_truth: p.ground_truth.clone(),
            predicted_label: p.predicted_label.clone(),
            confidence: p.confidence,
            labels: p.labels.clone(),
            distribution: p.distribution.clone(),
            provenance: p.provenance.to_string(),
            json,
        })
    }
}

/// Unit-length copy of `values`.
#[pyfunction]
fn normalize(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(vector(values)?
        .normalize()
        .map_err(py_err)?
        .values()
        .to_vec())
}

/// Normalized componentwise mean of several frame embeddings.
#[pyfunction]
fn mean_pool(frames: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let frames = frames
        .into_iter()
        .map(vector)
        .collect::<PyResult<Vec<_>>>()?;
    Ok(taskscope::mean_pool(&frames)
        .map_err(py_err)?
        .values()
        .to_vec())
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    taskscope::cosine_similarity(&vector(a)?, &vector(b)?).map_err(py_err)
}

#[pyfunction]
fn softmax(logits: Vec<f64>) -> PyResult<Vec<f64>> {
    taskscope::softmax(&logits).map_err(py_err)
}

/// Penalizes logits (aligned to the registry's labels) outside `keep` by `penalty`.
#[pyfunction]
fn restrict_soft(
    registry: &PyLabelRegistry,
    logits: Vec<f64>,
    keep: Vec<String>,
    penalty: f64,
) -> PyResult<Vec<f64>> {
    let full = registry.inner.full_space();
    if logits.len() != full.len() {
        return Err(py_err(taskscope::Error::DimensionMismatch {
            expected: full.len(),
            found: logits.len(),
        }));
    }
    let kept = registry
        .inner
        .label_space_from_ids(&keep, Provenance::Fallback)
        .map_err(py_err)?;
    let logits = LogitVector {
        values: logits,
        space: full,
    };
    Ok(taskscope::restrict_soft(&logits, &kept, penalty)
        .map_err(py_err)?
        .values)
}

/// Mean InfoNCE loss; `xs[i]` is paired with `ys[i]`.
#[pyfunction]
fn info_nce(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, tau: f64) -> PyResult<f64> {
    if xs.len() != ys.len() {
        return Err(py_err(taskscope::Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        }));
    }
    let pairs = xs
        .into_iter()
        .zip(ys)
        .map(|(x, y)| Ok((vector(x)?, vector(y)?)))
        .collect::<PyResult<Vec<_>>>()?;
    taskscope::info_nce(&pairs, tau).map_err(py_err)
}

/// Scores every clip in `clips` (an embedding file), ordered by clip id.
/// Clips that cannot be scored raise.
#[pyfunction]
#[pyo3(signature = (registry, schedule, classes, clips, mode = "off", tau = taskscope::scoring::DEFAULT_TAU, penalty = 0.0, fallback = "full"))]
#[allow(clippy::too_many_arguments)]
fn predict(
    py: Python<'_>,
    registry: &PyLabelRegistry,
    schedule: &PySchedule,
    classes: &str,
    clips: &str,
    mode: &str,
    tau: f64,
    penalty: f64,
    fallback: &str,
) -> PyResult<Vec<PyPrediction>> {
    let mode: RestrictionMode = mode.parse().map_err(py_err)?;
    let fallback: FallbackPolicy = fallback.parse().map_err(py_err)?;
    let config = ScoringConfig::new(mode, tau, penalty).map_err(py_err)?;
    let table = ClassEmbeddingTable::load(classes).map_err(py_err)?;
    let clips = ClipSet::load(clips).map_err(py_err)?;
    let results = py.detach(|| {
        taskscope::predict_batch(
            &clips.clips,
            &table,
            &schedule.inner,
            &registry.inner,
            &config,
            fallback,
        )
    });
    results
        .into_iter()
        .map(|(_, r)| PyPrediction::wrap(&r.map_err(py_err)?))
        .collect()
}

fn metrics_dict<'py>(
    py: Python<'py>,
    m: &taskscope::MetricsReport,
) -> PyResult<Bound<'py, PyDict>> {
    let avg = m.selected();
    let d = PyDict::new(py);
    d.set_item("averaging", m.averaging.to_string())?;
    d.set_item("total", m.total)?;
    d.set_item("correct", m.correct)?;
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("precision", avg.precision)?;
    d.set_item("recall", avg.recall)?;
    d.set_item("f1", avg.f1)?;
    d.set_item("row", m.render_row())?;
    d.set_item("warnings", m.warnings.clone())?;
    Ok(d)
}

/// Accuracy and averaged P/R/F1 of `predicted` against `truths`.
#[pyfunction]
#[pyo3(signature = (truths, predicted, averaging = "weighted"))]
fn metrics<'py>(
    py: Python<'py>,
    truths: Vec<String>,
    predicted: Vec<String>,
    averaging: &str,
) -> PyResult<Bound<'py, PyDict>> {
    if truths.len() != predicted.len() {
        return Err(py_err(taskscope::Error::DimensionMismatch {
            expected: truths.len(),
            found: predicted.len(),
        }));
    }
    let mut labels: Vec<String> = Vec::new();
    for l in truths.iter().chain(&predicted) {
        if !labels.contains(l) {
            labels.push(l.clone());
        }
    }
    let mut cm = ConfusionMatrix::new(labels.clone());
    let index = |l: &String| labels.iter().position(|x| x == l).expect("collected above");
    for (t, p) in truths.iter().zip(&predicted) {
        cm.record(index(t), index(p));
    }
    let averaging = averaging.parse().map_err(py_err)?;
    let report = taskscope::compute_metrics(&cm, averaging).map_err(py_err)?;
    metrics_dict(py, &report)
}

/// Metrics and mean confidence of a prediction file written by `taskscope predict`.
#[pyfunction]
#[pyo3(signature = (path, averaging = "weighted"))]
fn evaluate<'py>(py: Python<'py>, path: &str, averaging: &str) -> PyResult<Bound<'py, PyDict>> {
    let predictions = taskscope::cli::read_predictions(path.as_ref()).map_err(py_err)?;
    let run = RunArtifacts::from_predictions(predictions, None);
    let averaging = averaging.parse().map_err(py_err)?;
    let summary = summarize_run(&run, averaging).map_err(py_err)?;
    let d = metrics_dict(py, &summary.metrics)?;
    d.set_item("mean_confidence", summary.confidence.all.mean)?;
    Ok(d)
}

/// Canonical UTC rendering of an RFC 3339 timestamp.
#[pyfunction]
fn canonical_timestamp(text: &str) -> PyResult<String> {
    Ok(format_timestamp(
        &taskscope::parse_timestamp(text).map_err(py_err)?,
    ))
}

#[pymodule]
#[pyo3(name = "taskscope")]
fn taskscope_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TaskscopeError", m.py().get_type::<TaskscopeError>())?;
    m.add("DEFAULT_TAU", taskscope::scoring::DEFAULT_TAU)?;
    m.add_class::<PyLabelRegistry>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyPrediction>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(mean_pool, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(restrict_soft, m)?)?;
    m.add_function(wrap_pyfunction!(info_nce, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_timestamp, m)?)?;
    Ok(())
}
