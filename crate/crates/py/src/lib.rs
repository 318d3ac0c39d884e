//! Python bindings. Findings and results cross the boundary as plain Python
//! lists and dicts (through JSON), so the shapes match the model and evidence
//! files and the HTTP API.

use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use ebn::bn::Evidence;
use ebn::error::Error;
use ebn::model::{self, CompiledModel, Finding};
use ebn::session::{extend_evidence, Session as CoreSession, SessionSource};

pyo3::create_exception!(ebn_py, InconsistentEvidence, PyValueError);
pyo3::create_exception!(ebn_py, RevisionConflict, PyRuntimeError);

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::InconsistentEvidence(_) => InconsistentEvidence::new_err(msg),
        Error::Conflict(_) => RevisionConflict::new_err(msg),
        Error::UnknownNode(_) => PyKeyError::new_err(msg),
        Error::Io(_) => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn findings(obj: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<Finding>> {
    obj.map(from_py).transpose().map(Option::unwrap_or_default)
}

/// Names of the bundled scenarios.
#[pyfunction]
fn scenarios() -> Vec<&'static str> {
    model::SCENARIOS.iter().map(|s| s.name).collect()
}

/// A bundled evidence script as a dict.
#[pyfunction]
fn scenario_evidence<'py>(py: Python<'py>, scenario: &str, script: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = model::scenario(scenario).and_then(|s| s.evidence(script)).map_err(err)?;
    to_py(py, &s)
}

/// Compile a bundled scenario or a model definition (JSON text or dict).
#[pyfunction]
#[pyo3(signature = (scenario=None, model=None, workers=None))]
fn compile(
    py: Python<'_>,
    scenario: Option<&str>,
    model: Option<&Bound<'_, PyAny>>,
    workers: Option<usize>,
) -> PyResult<Network> {
    let (m, name) = match (scenario, model) {
        (Some(s), None) => (model::scenario(s).and_then(|s| s.load()).map_err(err)?, Some(s.to_string())),
        (None, Some(obj)) => {
            let file: model::ModelFile = from_py(obj)?;
            (model::Model::new(file).map_err(err)?, None)
        }
        _ => return Err(PyValueError::new_err("give exactly one of `scenario` and `model`")),
    };
    let compiled = py.detach(|| m.compile(workers)).map_err(err)?;
    Ok(Network {
        inner: Arc::new(compiled),
        scenario: name,
    })
}

/// A compiled network.
#[pyclass(frozen)]
struct Network {
    inner: Arc<CompiledModel>,
    scenario: Option<String>,
}

impl Network {
    fn evidence(&self, f: Option<&Bound<'_, PyAny>>) -> PyResult<Evidence> {
        let f = findings(f)?;
        Ok(extend_evidence(&self.inner.network, &Evidence::new(), &f).map_err(err)?.0)
    }
}

#[pymethods]
impl Network {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = CompiledModel::from_json(text).map_err(err)?;
        let scenario = model::scenario(&inner.model).ok().map(|s| s.name.to_string());
        Ok(Self {
            inner: Arc::new(inner),
            scenario,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.model
    }

    #[getter]
    fn model_hash(&self) -> &str {
        &self.inner.model_hash
    }

    /// Node names with their state counts.
    fn nodes(&self) -> Vec<(String, usize)> {
        self.inner.network.nodes().iter().map(|n| (n.name.clone(), n.card())).collect()
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.report)
    }

    #[pyo3(signature = (node, findings=None))]
    fn posterior<'py>(&self, py: Python<'py>, node: &str, findings: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
        let e = self.evidence(findings)?;
        let p = py.detach(|| self.inner.network.posterior(node, &e)).map_err(err)?;
        to_py(py, &p)
    }

    #[pyo3(signature = (findings=None, name=None, horizon=None))]
    fn timeline<'py>(
        &self,
        py: Python<'py>,
        findings: Option<&Bound<'py, PyAny>>,
        name: Option<&str>,
        horizon: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let e = self.evidence(findings)?;
        let tl = py.detach(|| model::timeline(&self.inner, name, &e, horizon)).map_err(err)?;
        to_py(py, &tl)
    }

    #[pyo3(signature = (findings=None))]
    fn decide<'py>(&self, py: Python<'py>, findings: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
        let e = self.evidence(findings)?;
        let r = py
            .detach(|| self.inner.influence_diagram().and_then(|d| d.optimal_decision(&e)))
            .map_err(err)?;
        to_py(py, &r)
    }

    /// VOI of each measurement set; the declared sets by default.
    #[pyo3(signature = (sets=None, findings=None))]
    fn voi<'py>(
        &self,
        py: Python<'py>,
        sets: Option<Vec<Vec<String>>>,
        findings: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let e = self.evidence(findings)?;
        let declared = self.inner.decision.as_ref().map(|d| d.measurement_sets.clone()).unwrap_or_default();
        let sets = sets.unwrap_or(declared);
        let r = py
            .detach(|| {
                let d = self.inner.influence_diagram()?;
                sets.iter()
                    .map(|s| d.voi(&s.iter().map(String::as_str).collect::<Vec<_>>(), &e))
                    .collect::<ebn::error::Result<Vec<_>>>()
            })
            .map_err(err)?;
        to_py(py, &r)
    }

    fn session(&self, id: &str) -> PyResult<Session> {
        let source = match &self.scenario {
            Some(name) => SessionSource::Scenario { name: name.clone() },
            None => SessionSource::Upload,
        };
        Ok(Session {
            inner: CoreSession::new(id, source, self.inner.clone()).map_err(err)?,
        })
    }
}

/// Evidence accumulated under a revision counter, with its audit log.
#[pyclass]
struct Session {
    inner: CoreSession,
}

#[pymethods]
impl Session {
    #[getter]
    fn revision(&self) -> u64 {
        self.inner.revision()
    }

    #[getter]
    fn evidence_probability(&self) -> f64 {
        self.inner.evidence_probability()
    }

    #[pyo3(signature = (findings, expected_revision=None))]
    fn add_evidence(&mut self, findings: &Bound<'_, PyAny>, expected_revision: Option<u64>) -> PyResult<u64> {
        let f: Vec<Finding> = from_py(findings)?;
        self.inner.add_evidence(&f, expected_revision).map_err(err)
    }

    #[pyo3(signature = (name=None, horizon=None))]
    fn timeline<'py>(&self, py: Python<'py>, name: Option<&str>, horizon: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.timeline(name, horizon).map_err(err)?)
    }

    fn posterior<'py>(&self, py: Python<'py>, node: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.posterior(node).map_err(err)?)
    }

    fn decision<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.decision().map_err(err)?)
    }

    /// Audit log as JSON lines.
    fn log(&self) -> String {
        self.inner.log().iter().map(|e| e.to_line() + "\n").collect()
    }
}

#[pymodule]
fn ebn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_evidence, m)?)?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    m.add_class::<Network>()?;
    m.add_class::<Session>()?;
    m.add("InconsistentEvidence", m.py().get_type::<InconsistentEvidence>())?;
    m.add("RevisionConflict", m.py().get_type::<RevisionConflict>())?;
    Ok(())
}
