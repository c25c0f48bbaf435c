//! Python bindings: scenario generation, the reconstruction pipeline and
//! evaluation, with JSON in and out. Nested results are handed to Python as
//! plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use mvhuman::config::PipelineConfig as CoreConfig;
use mvhuman::error::Error;
use mvhuman::io::{Document, ResultDocument};
use mvhuman::pipeline::{self, Evaluation as CoreEvaluation, PipelineInput, PipelineOutput};
use mvhuman::synth::{self, Scenario as CoreScenario, SynthConfig};

create_exception!(mvhuman_py, ConfigError, PyValueError, "Invalid configuration.");
create_exception!(mvhuman_py, PipelineError, PyRuntimeError, "A pipeline stage or input failed.");
create_exception!(mvhuman_py, EvaluationError, PyRuntimeError, "Results could not be scored.");

fn to_py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => ConfigError::new_err(e.to_string()),
        4 => EvaluationError::new_err(e.to_string()),
        _ => PipelineError::new_err(e.to_string()),
    }
}

/// Round-trips a serde value through `json.loads`.
fn to_python<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PipelineError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Pipeline thresholds, weights and strategy switches.
#[pyclass(module = "mvhuman_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PipelineConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PipelineConfig {
    /// `toml` is a config document; `overrides` are `section.key=value` strings.
    #[new]
    #[pyo3(signature = (toml = "", overrides = Vec::new()))]
    fn new(toml: &str, overrides: Vec<String>) -> PyResult<Self> {
        CoreConfig::from_toml_with(toml, &overrides)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn describe() -> String {
        CoreConfig::describe()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "PipelineConfig(fusion={}, costMode={:?}, scale={})",
            c.fusion.strategy, c.association.cost_mode, c.scale.enabled
        )
    }
}

/// A synthetic scene with its ground truth.
#[pyclass(module = "mvhuman_py", frozen)]
struct Scenario {
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        match Document::from_json(text).map_err(to_py_err)? {
            Document::Scenario(inner) => Ok(Self { inner }),
            other => Err(PipelineError::new_err(format!("expected a scenario, got `{}`", other.kind()))),
        }
    }

    fn to_json(&self) -> String {
        Document::Scenario(self.inner.clone()).to_json()
    }

    /// Observations without ground truth, as the pipeline sees them.
    fn observations_json(&self) -> String {
        Document::Observations(PipelineInput::from(&self.inner)).to_json()
    }

    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner.config)
    }

    #[getter]
    fn num_observations(&self) -> usize {
        self.inner.observations.len()
    }

    #[getter]
    fn num_persons(&self) -> usize {
        self.inner.true_humans.len()
    }

    /// Observation id to true person index.
    #[getter]
    fn true_identity(&self) -> std::collections::BTreeMap<u64, usize> {
        self.inner.identity_of()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner.config;
        format!(
            "Scenario(seed={}, timesteps={}, views={}, persons={}, observations={})",
            c.seed,
            c.timesteps,
            c.views,
            c.persons,
            self.inner.observations.len()
        )
    }
}

/// Cameras and detections without ground truth.
#[pyclass(module = "mvhuman_py", frozen)]
struct Observations {
    inner: PipelineInput,
}

#[pymethods]
impl Observations {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = Document::from_json(text)
            .and_then(Document::into_pipeline_input)
            .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        Document::Observations(self.inner.clone()).to_json()
    }

    fn __len__(&self) -> usize {
        self.inner.observations.len()
    }
}

/// Pipeline output: fused humans, identities and the scale report.
#[pyclass(module = "mvhuman_py", frozen)]
struct Result {
    config: CoreConfig,
    inner: PipelineOutput,
}

#[pymethods]
impl Result {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        match Document::from_json(text).map_err(to_py_err)? {
            Document::Result(r) => Ok(Self { config: r.config, inner: r.result }),
            other => Err(PipelineError::new_err(format!("expected a result, got `{}`", other.kind()))),
        }
    }

    fn to_json(&self) -> String {
        Document::Result(ResultDocument { config: self.config, result: self.inner.clone() }).to_json()
    }

    #[getter]
    fn humans(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner.humans)
    }

    #[getter]
    fn scale(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner.scale)
    }

    /// Observation id to global identity.
    #[getter]
    fn labels(&self) -> std::collections::BTreeMap<u64, usize> {
        self.inner.label_map()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.humans.len()
    }

    fn __repr__(&self) -> String {
        format!("Result(humans={}, scaleRatio={})", self.inner.humans.len(), self.inner.scale.global_ratio)
    }
}

/// Joint-error metrics and pairwise association scores.
#[pyclass(module = "mvhuman_py", frozen)]
struct Evaluation {
    inner: CoreEvaluation,
}

#[pymethods]
impl Evaluation {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        match Document::from_json(text).map_err(to_py_err)? {
            Document::Metrics(inner) => Ok(Self { inner }),
            other => Err(PipelineError::new_err(format!("expected metrics, got `{}`", other.kind()))),
        }
    }

    fn to_json(&self) -> String {
        Document::Metrics(self.inner.clone()).to_json()
    }

    #[getter]
    fn metrics(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner.metrics)
    }

    #[getter]
    fn association(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner.association)
    }

    fn __repr__(&self) -> String {
        let m = &self.inner.metrics;
        format!(
            "Evaluation(waMpjpe={}, gaMpjpe={}, accuracy={})",
            show(m.wa_mpjpe),
            show(m.ga_mpjpe),
            show(self.inner.association.accuracy)
        )
    }
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "None".into(), |x| format!("{x:.4}"))
}

#[derive(FromPyObject)]
enum Input<'py> {
    Scenario(PyRef<'py, Scenario>),
    Observations(PyRef<'py, Observations>),
}

impl Input<'_> {
    fn pipeline_input(&self) -> PipelineInput {
        match self {
            Input::Scenario(s) => PipelineInput::from(&s.inner),
            Input::Observations(o) => o.inner.clone(),
        }
    }
}

fn config_or_default(config: Option<PyRef<'_, PipelineConfig>>) -> CoreConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

/// Generates a scenario from a TOML document plus `key=value` overrides.
#[pyfunction]
#[pyo3(signature = (toml = "", overrides = Vec::new()))]
fn simulate(py: Python<'_>, toml: &str, overrides: Vec<String>) -> PyResult<Scenario> {
    let cfg = SynthConfig::from_toml_with(toml, &overrides).map_err(to_py_err)?;
    let inner = py.detach(|| synth::generate(&cfg)).map_err(to_py_err)?;
    Ok(Scenario { inner })
}

/// Runs tracking, association, scale adjustment and fusion.
#[pyfunction]
#[pyo3(signature = (input, config = None))]
fn run(py: Python<'_>, input: Input<'_>, config: Option<PyRef<'_, PipelineConfig>>) -> PyResult<Result> {
    let cfg = config_or_default(config);
    let data = input.pipeline_input();
    let inner = py.detach(|| pipeline::run(&data, &cfg)).map_err(to_py_err)?;
    Ok(Result { config: cfg, inner })
}

#[pyfunction]
fn evaluate(py: Python<'_>, result: Bound<'_, Result>, scenario: Bound<'_, Scenario>) -> PyResult<Evaluation> {
    let (result, scenario) = (result.get(), scenario.get());
    let inner = py
        .detach(|| pipeline::evaluate(&result.inner, &scenario.inner))
        .map_err(|e| EvaluationError::new_err(e.to_string()))?;
    Ok(Evaluation { inner })
}

/// Every ablation variant on one scenario, as CSV text.
#[pyfunction]
#[pyo3(signature = (scenario, config = None))]
fn ablate(py: Python<'_>, scenario: Bound<'_, Scenario>, config: Option<PyRef<'_, PipelineConfig>>) -> PyResult<String> {
    let cfg = config_or_default(config);
    let scenario = scenario.get();
    let rows = py
        .detach(|| pipeline::run_ablation(&scenario.inner, &cfg))
        .map_err(to_py_err)?;
    Ok(pipeline::ablation_csv(&rows))
}

/// Parses any document and returns the matching class.
#[pyfunction]
fn load(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let obj = match Document::from_json(text).map_err(to_py_err)? {
        Document::Scenario(inner) => Py::new(py, Scenario { inner })?.into_any(),
        Document::Observations(inner) => Py::new(py, Observations { inner })?.into_any(),
        Document::Result(r) => Py::new(py, Result { config: r.config, inner: r.result })?.into_any(),
        Document::Metrics(inner) => Py::new(py, Evaluation { inner })?.into_any(),
    };
    Ok(obj)
}

#[pymodule]
fn mvhuman_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PipelineConfig>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<Observations>()?;
    m.add_class::<Result>()?;
    m.add_class::<Evaluation>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("PipelineError", py.get_type::<PipelineError>())?;
    m.add("EvaluationError", py.get_type::<EvaluationError>())?;
    m.add("SCHEMA", mvhuman::io::SCHEMA)?;
    Ok(())
}
