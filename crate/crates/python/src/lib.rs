//! Python bindings: series decomposition, planted corpora, the end-to-end
//! pipeline, and persisted models.

use std::path::PathBuf;

use gatecast::data::{self, CandidateSource, Labels, Relevance};
use gatecast::eval;
use gatecast::pipeline::{self, OutputPaths};
use gatecast::{Component, Corpus, Decomposition, FittedModel, PipelineConfig, PipelineRun, PlantedCorpus, PlantedSpec, RateSeries};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(gatecast_py, GatecastError, PyException);

fn err(e: gatecast::Error) -> PyErr {
    GatecastError::new_err(format!("{}: {}", e.kind(), e))
}

fn component(name: &str) -> PyResult<Component> {
    name.parse().map_err(|_| PyValueError::new_err(format!("unknown component `{name}`")))
}

fn labels_from(map: Option<std::collections::BTreeMap<String, String>>) -> PyResult<Option<Labels>> {
    map.map(|m| {
        m.into_iter()
            .map(|(id, l)| match l.as_str() {
                "related" => Ok((id, Relevance::Related)),
                "unrelated" => Ok((id, Relevance::Unrelated)),
                _ => Err(PyValueError::new_err(format!("label `{l}` for `{id}`"))),
            })
            .collect()
    })
    .transpose()
}

/// A weekly rate series with values in [0, 1].
#[pyclass(name = "RateSeries", frozen)]
#[derive(Clone)]
struct PyRateSeries(RateSeries);

#[pymethods]
impl PyRateSeries {
    #[new]
    #[pyo3(signature = (id, start_week, values))]
    fn new(id: String, start_week: i64, values: Vec<f64>) -> PyResult<Self> {
        RateSeries::new(id, start_week, values).map(Self).map_err(err)
    }

    #[getter]
    fn id(&self) -> &str {
        self.0.id()
    }

    #[getter]
    fn start_week(&self) -> i64 {
        self.0.start_week()
    }

    #[getter]
    fn end_week(&self) -> i64 {
        self.0.end_week()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "RateSeries(id={:?}, weeks={}..{})",
            self.0.id(),
            self.0.start_week(),
            self.0.end_week()
        )
    }
}

#[pyclass(name = "Decomposition", frozen)]
struct PyDecomposition(Decomposition);

#[pymethods]
impl PyDecomposition {
    #[getter]
    fn first_week(&self) -> i64 {
        self.0.first_week()
    }

    #[getter]
    fn end_week(&self) -> i64 {
        self.0.end_week()
    }

    #[getter]
    fn trend(&self) -> Vec<f64> {
        self.0.trend.values.clone()
    }

    #[getter]
    fn seasonal(&self) -> Vec<f64> {
        self.0.seasonal.values().to_vec()
    }

    #[getter]
    fn irregular(&self) -> Vec<f64> {
        self.0.irregular.values.clone()
    }

    /// Trend, seasonal and irregular multiplied back together at `week`.
    fn reconstruct(&self, week: i64) -> Option<f64> {
        self.0.reconstruct(week)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

#[pyfunction]
#[pyo3(signature = (series, cycle = 52))]
fn decompose(series: &PyRateSeries, cycle: usize) -> PyResult<PyDecomposition> {
    gatecast::decompose(&series.0, cycle).map(PyDecomposition).map_err(err)
}

/// Target and candidate series loaded from CSV files.
#[pyclass(name = "Corpus", frozen)]
struct PyCorpus(Corpus);

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn load(target_path: PathBuf, candidates_path: PathBuf) -> PyResult<Self> {
        data::load_corpus(&target_path, &candidates_path).map(Self).map_err(err)
    }

    #[getter]
    fn target(&self) -> PyRateSeries {
        PyRateSeries(self.0.target.clone())
    }

    fn candidate_ids(&self) -> Vec<String> {
        self.0.candidates().iter().map(|c| c.id().to_string()).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Synthetic corpus with known related, decoy and noise candidates.
#[pyclass(name = "PlantedCorpus", frozen)]
struct PyPlanted(PlantedCorpus);

#[pymethods]
impl PyPlanted {
    #[new]
    #[pyo3(signature = (seed = 42, n_weeks = 416, n_related = 5, n_decoy = 20, n_gate_decoy = 0, n_noise = 200, lead_weeks = 0))]
    fn new(
        seed: u64,
        n_weeks: usize,
        n_related: usize,
        n_decoy: usize,
        n_gate_decoy: usize,
        n_noise: usize,
        lead_weeks: usize,
    ) -> PyResult<Self> {
        let spec = PlantedSpec {
            seed,
            n_weeks,
            n_related,
            n_decoy,
            n_gate_decoy,
            n_noise,
            lead_weeks,
            ..Default::default()
        };
        PlantedCorpus::new(spec).map(Self).map_err(err)
    }

    #[getter]
    fn target(&self) -> PyRateSeries {
        PyRateSeries(self.0.target().clone())
    }

    fn candidate_ids(&self) -> Vec<String> {
        (0..self.0.len()).map(|i| self.0.id(i).into_owned()).collect()
    }

    fn candidate(&self, id: &str) -> PyResult<PyRateSeries> {
        let index = self
            .0
            .index_of(id)
            .ok_or_else(|| err(gatecast::Error::MissingCandidate(id.to_string())))?;
        let c = self.0.candidate(index).map_err(err)?;
        Ok(PyRateSeries(c.into_owned()))
    }

    /// Role of each candidate: related, decoy, gatedecoy or noise.
    fn roles(&self) -> std::collections::BTreeMap<String, &'static str> {
        self.0
            .ground_truth()
            .roles
            .into_iter()
            .map(|(id, r)| (id, r.as_str()))
            .collect()
    }

    fn labels(&self) -> std::collections::BTreeMap<String, &'static str> {
        self.0
            .ground_truth()
            .labels()
            .into_iter()
            .map(|(id, r)| (id, r.as_str()))
            .collect()
    }

    fn write(&self, target_path: PathBuf, candidates_path: PathBuf, labels_path: PathBuf) -> PyResult<()> {
        let corpus = self.0.materialize().map_err(err)?;
        data::write_corpus(&corpus, &target_path, &candidates_path).map_err(err)?;
        let f = std::fs::File::create(&labels_path).map_err(|e| err(e.into()))?;
        data::write_labels(f, &self.0.ground_truth().labels()).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[derive(FromPyObject)]
enum Source<'py> {
    Corpus(PyRef<'py, PyCorpus>),
    Planted(PyRef<'py, PyPlanted>),
}

impl Source<'_> {
    fn with<T>(&self, f: impl FnOnce(&dyn CandidateSource) -> T) -> T {
        match self {
            Source::Corpus(c) => f(&c.0),
            Source::Planted(p) => f(&p.0),
        }
    }

    fn target(&self) -> RateSeries {
        match self {
            Source::Corpus(c) => c.0.target.clone(),
            Source::Planted(p) => p.0.target().clone(),
        }
    }
}

type PredictionRows = Vec<(i64, f64)>;

fn rows(preds: &[gatecast::Prediction]) -> PredictionRows {
    preds.iter().map(|p| (p.week, p.rate)).collect()
}

/// A fitted, persistable nowcast or forecast model.
#[pyclass(name = "Model", frozen)]
struct PyModel(FittedModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        FittedModel::load(&path).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(err)
    }

    #[getter]
    fn phi(&self) -> usize {
        self.0.phi
    }

    #[getter]
    fn train_end(&self) -> i64 {
        self.0.train_end
    }

    fn selected_ids(&self, component_name: &str) -> PyResult<Vec<String>> {
        Ok(self.0.selected_ids(component(component_name)?).to_vec())
    }

    /// `(week, rate)` predictions for weeks `first..end`.
    fn predict(&self, py: Python<'_>, source: Source<'_>, first: i64, end: i64) -> PyResult<PredictionRows> {
        let m = &self.0;
        source
            .with(|s| py.detach(|| m.predict(s, first..end)))
            .map(|p| rows(&p))
            .map_err(err)
    }

    fn __eq__(&self, other: &PyModel) -> bool {
        self.0 == other.0
    }
}

/// Result of a full rank, select, fit, predict and evaluate run.
#[pyclass(name = "PipelineRun", frozen)]
struct PyRun {
    run: PipelineRun,
    target: RateSeries,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn pearson(&self) -> f64 {
        self.run.report.pearson
    }

    #[getter]
    fn smape(&self) -> f64 {
        self.run.report.smape
    }

    /// Share of selected ids labelled related, or `None` without labels.
    #[getter]
    fn relevance(&self) -> Option<f64> {
        self.run.report.relevance_all.map(|r| r.ratio)
    }

    #[getter]
    fn boundary(&self) -> i64 {
        self.run.ranges.boundary
    }

    #[getter]
    fn predictions(&self) -> PredictionRows {
        rows(&self.run.predictions)
    }

    #[getter]
    fn model(&self) -> PyModel {
        PyModel(self.run.model.clone())
    }

    fn selected_ids(&self, component_name: &str) -> PyResult<Vec<String>> {
        Ok(match component(component_name)? {
            Component::Trend => self.run.selection_t.selected_ids.clone(),
            Component::Irregular => self.run.selection_i.selected_ids.clone(),
        })
    }

    /// Ranked `(id, score)` pairs for one component.
    fn ranked(&self, component_name: &str) -> PyResult<Vec<(String, f64)>> {
        let c = component(component_name)?;
        let list = match c {
            Component::Trend => &self.run.ranked_t,
            Component::Irregular => &self.run.ranked_i,
        };
        Ok(list.entries.iter().map(|e| (e.id.clone(), e.score(c))).collect())
    }

    #[pyo3(signature = (directory, svg = false))]
    fn write_outputs(&self, directory: PathBuf, svg: bool) -> PyResult<()> {
        std::fs::create_dir_all(&directory).map_err(|e| err(e.into()))?;
        pipeline::write_outputs(&self.run, &self.target, &OutputPaths::in_dir(&directory), None, svg).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (source, phi = 0, lambda_ = 0.1, lambda_grid = false, max_candidates = 1000, patience = 5, train_fraction = 0.8, labels = None))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    py: Python<'_>,
    source: Source<'_>,
    phi: usize,
    lambda_: f64,
    lambda_grid: bool,
    max_candidates: usize,
    patience: usize,
    train_fraction: f64,
    labels: Option<std::collections::BTreeMap<String, String>>,
) -> PyResult<PyRun> {
    let cfg = PipelineConfig {
        phi,
        lambda: lambda_,
        lambda_grid,
        max_candidates,
        patience,
        train_fraction,
        ..Default::default()
    };
    let labels = labels_from(labels)?;
    let target = source.target();
    let run = source
        .with(|s| py.detach(|| pipeline::run(&target, s, &cfg, labels.as_ref())))
        .map_err(err)?;
    Ok(PyRun { run, target })
}

#[pyfunction]
fn smape(forecast: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    eval::smape(&forecast, &actual).map_err(err)
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    gatecast::series::pearson(&a, &b).map_err(err)
}

#[pymodule]
fn gatecast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GatecastError", m.py().get_type::<GatecastError>())?;
    m.add_class::<PyRateSeries>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyPlanted>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(smape, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    Ok(())
}
