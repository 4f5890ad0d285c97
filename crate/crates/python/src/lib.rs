//! Python bindings. Traces cross the boundary as lists of call names and
//! labels as the strings `"normal"` / `"malicious"`.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use boscids::{Granularity, InjectionMode, InjectionSpec, Label, LabeledCorpus, LineKind, RawTrace};

fn err(e: boscids::Error) -> PyErr {
    match e {
        boscids::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn trace_of(names: Vec<String>) -> PyResult<RawTrace> {
    RawTrace::from_names(names).map_err(err)
}

#[pyclass(module = "boscids", frozen, from_py_object)]
#[derive(Clone)]
struct Config {
    inner: boscids::Config,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (window=10, epoch_size=5000, train_threshold=0.99, detect_fraction=0.1))]
    fn new(window: usize, epoch_size: usize, train_threshold: f64, detect_fraction: f64) -> PyResult<Self> {
        let inner = boscids::Config::new(window, epoch_size, train_threshold, detect_fraction).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    #[getter]
    fn epoch_size(&self) -> usize {
        self.inner.epoch_size
    }

    #[getter]
    fn train_threshold(&self) -> f64 {
        self.inner.train_threshold
    }

    #[getter]
    fn detect_fraction(&self) -> f64 {
        self.inner.detect_fraction
    }

    fn __repr__(&self) -> String {
        format!("Config({})", self.inner)
    }
}

/// Per-epoch verdicts for one trace.
#[pyclass(module = "boscids", frozen, from_py_object)]
#[derive(Clone)]
struct DetectionReport {
    inner: boscids::DetectionReport,
}

#[pymethods]
impl DetectionReport {
    #[getter]
    fn trace_anomalous(&self) -> bool {
        self.inner.trace_anomalous
    }

    #[getter]
    fn anomalous_epochs(&self) -> Vec<usize> {
        self.inner.anomalous_epochs().collect()
    }

    /// `(epoch_index, windows, mismatches, threshold, anomalous)` per epoch.
    #[getter]
    fn verdicts(&self) -> Vec<(usize, usize, usize, f64, bool)> {
        self.inner
            .verdicts
            .iter()
            .map(|v| (v.epoch_index, v.windows_scanned, v.mismatches, v.threshold_used, v.anomalous))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.verdicts.len()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

#[pyclass(module = "boscids", frozen)]
struct TrainedModel {
    inner: boscids::TrainedModel,
}

#[pymethods]
impl TrainedModel {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged()
    }

    #[getter]
    fn epochs_trained(&self) -> usize {
        self.inner.epochs_trained()
    }

    #[getter]
    fn db_size(&self) -> usize {
        self.inner.db().len()
    }

    #[getter]
    fn n_s(&self) -> usize {
        self.inner.index().n_s()
    }

    #[getter]
    fn slots(&self) -> Vec<String> {
        self.inner.index().slots().to_vec()
    }

    #[getter]
    fn config(&self) -> Config {
        Config { inner: *self.inner.config() }
    }

    /// `(k, cos_theta)` for every epoch after the first.
    #[getter]
    fn history(&self) -> Vec<(usize, f64)> {
        self.inner.history().iter().map(|r| (r.k, r.cos_theta)).collect()
    }

    /// Database entries as `(bag, frequency)` in insertion order.
    fn entries(&self) -> Vec<(Vec<u16>, u64)> {
        self.inner.db().entries().map(|(b, f)| (b.to_vec(), f)).collect()
    }

    #[pyo3(signature = (names, detect_fraction=None))]
    fn detect(&self, py: Python<'_>, names: Vec<String>, detect_fraction: Option<f64>) -> PyResult<DetectionReport> {
        let trace = trace_of(names)?;
        let model = match detect_fraction {
            Some(f) => Some(self.inner.clone().with_detect_fraction(f).map_err(err)?),
            None => None,
        };
        let model = model.as_ref().unwrap_or(&self.inner);
        let inner = py.detach(|| boscids::detect(model, &trace));
        Ok(DetectionReport { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        boscids::TrainedModel::load(path).map(|inner| Self { inner }).map_err(err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.inner.to_bytes()
    }

    #[staticmethod]
    fn from_bytes(data: Vec<u8>) -> PyResult<Self> {
        boscids::TrainedModel::from_bytes(&data).map(|inner| Self { inner }).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainedModel(converged={}, epochs={}, entries={}, ns={})",
            self.inner.converged(),
            self.inner.epochs_trained(),
            self.inner.db().len(),
            self.inner.index().n_s()
        )
    }
}

/// Learns a model from a list of call names.
#[pyfunction]
#[pyo3(signature = (names, config=None))]
fn train(py: Python<'_>, names: Vec<String>, config: Option<Config>) -> PyResult<TrainedModel> {
    let trace = trace_of(names)?;
    let config = config.map(|c| c.inner).unwrap_or_default();
    let inner = py
        .detach(|| boscids::train(&trace, &boscids::count_table(&trace), config))
        .map_err(err)?;
    Ok(TrainedModel { inner })
}

/// Classifies one line of tracer output: `(kind, pid, name)`.
#[pyfunction]
fn parse_line(line: &str) -> (&'static str, Option<u32>, Option<String>) {
    let parsed = boscids::parse_line(line);
    let kind = match parsed.kind {
        LineKind::Call => "call",
        LineKind::Unfinished => "unfinished",
        LineKind::Resumed => "resumed",
        LineKind::Signal => "signal",
        LineKind::Exit => "exit",
        LineKind::Garbage => "garbage",
    };
    (kind, parsed.pid, parsed.name)
}

/// Call names extracted from tracer output lines.
#[pyfunction]
fn ingest(lines: Vec<String>) -> Vec<String> {
    boscids::ingest(lines).to_names()
}

/// `(name, count)` sorted by count descending, then name.
#[pyfunction]
fn count_table(names: Vec<String>) -> PyResult<Vec<(String, u64)>> {
    Ok(boscids::count_table(&trace_of(names)?).entries().to_vec())
}

#[pyfunction]
fn bag_of(window: Vec<usize>, n_s: usize) -> PyResult<Vec<u16>> {
    Ok(boscids::bag_of(&window, n_s).map_err(err)?.counts().to_vec())
}

#[pyfunction]
fn cosine_similarity(a: Vec<i64>, b: Vec<i64>) -> f64 {
    boscids::cosine_similarity(&boscids::ChangeVector::new(a), &boscids::ChangeVector::new(b))
}

fn source(alphabet: usize, zipf: f64, seed: u64, source_seed: Option<u64>) -> PyResult<boscids::SourceSpec> {
    let spec = boscids::SourceSpec::synthetic(alphabet, zipf, source_seed.unwrap_or(seed)).map_err(err)?;
    Ok(spec.reseeded(seed))
}

/// Clean synthetic trace.
#[pyfunction]
#[pyo3(signature = (calls, seed=42, alphabet=64, zipf=1.0, source_seed=None))]
fn gen_normal(calls: usize, seed: u64, alphabet: usize, zipf: f64, source_seed: Option<u64>) -> PyResult<Vec<String>> {
    let spec = source(alphabet, zipf, seed, source_seed)?;
    Ok(boscids::gen_normal(&spec, calls).map_err(err)?.to_names())
}

/// Synthetic trace with injected epochs; returns `(names, labels)`.
#[pyfunction]
#[pyo3(signature = (calls, inject, mode="burst_repeat", intensity=0.5, epoch_size=5000, seed=42, alphabet=64, zipf=1.0, source_seed=None))]
#[allow(clippy::too_many_arguments)]
fn gen_anomalous(
    calls: usize,
    inject: Vec<usize>,
    mode: &str,
    intensity: f64,
    epoch_size: usize,
    seed: u64,
    alphabet: usize,
    zipf: f64,
    source_seed: Option<u64>,
) -> PyResult<(Vec<String>, Vec<&'static str>)> {
    let spec = source(alphabet, zipf, seed, source_seed)?;
    let inj = InjectionSpec {
        target_epochs: inject.into_iter().collect::<BTreeSet<_>>(),
        mode: mode.parse::<InjectionMode>().map_err(err)?,
        intensity,
        epoch_size,
    };
    let (trace, labels) = boscids::gen_anomalous(&spec, calls, &inj).map_err(err)?;
    Ok((trace.to_names(), labels.into_iter().map(Label::as_str).collect()))
}

/// `(tp, fp, malicious, normal, tpr, fpr)`; rates are `None` when undefined.
type MetricsRow = (u64, u64, u64, u64, Option<f64>, Option<f64>);

/// TPR/FPR over `[(id, report)]` aligned with `[(id, labels)]`.
#[pyfunction]
#[pyo3(signature = (reports, labels, granularity="epoch"))]
fn compute_metrics(
    reports: Vec<(String, DetectionReport)>,
    labels: Vec<(String, Vec<String>)>,
    granularity: &str,
) -> PyResult<MetricsRow> {
    let granularity: Granularity = granularity.parse().map_err(err)?;
    let mut corpus = LabeledCorpus::default();
    for (id, ls) in labels {
        let ls = ls.iter().map(|l| l.parse::<Label>()).collect::<Result<Vec<_>, _>>().map_err(err)?;
        corpus.push(id, ls);
    }
    let reports: Vec<_> = reports.into_iter().map(|(id, r)| (id, r.inner)).collect();
    let m = boscids::compute_metrics(&reports, &corpus, granularity).map_err(err)?;
    Ok((m.n_tp, m.n_fp, m.n_malicious, m.n_normal, m.tpr, m.fpr))
}

#[pymodule]
#[pyo3(name = "boscids")]
fn boscids_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<TrainedModel>()?;
    m.add_class::<DetectionReport>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(parse_line, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(count_table, m)?)?;
    m.add_function(wrap_pyfunction!(bag_of, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(gen_normal, m)?)?;
    m.add_function(wrap_pyfunction!(gen_anomalous, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    Ok(())
}
