//! Python bindings: search spaces, task tables, the GCN predictor and
//! meta-training.

use std::sync::Arc;

use mpnas_core::evaluation;
use mpnas_core::meta_learner::{self, EncodedTask, MetaConfig};
use mpnas_core::nas_data::{self, TaskCollection};
use mpnas_core::predictor::{self, Gcn, GcnParams, Parameters, Regressor};
use mpnas_core::search_space::{self, SearchSpaceDef, Template};
use mpnas_core::seed;
use num_bigint::BigUint;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: mpnas_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn template(name: &str) -> PyResult<Template> {
    match name {
        "nb201" => Ok(Template::nb201()),
        "four_slot" => Ok(Template::four_slot()),
        other => other
            .strip_prefix("chain:")
            .and_then(|n| n.parse().ok())
            .map(Template::chain)
            .ok_or_else(|| {
                PyValueError::new_err(format!(
                    "unknown template `{other}` (expected nb201, four_slot or chain:N)"
                ))
            }),
    }
}

/// A cell-based search space.
#[pyclass(name = "Space", module = "mpnas", frozen)]
struct PySpace(Arc<SearchSpaceDef>);

#[pymethods]
impl PySpace {
    /// A template with every searchable operation of the unified vocabulary.
    #[staticmethod]
    fn mixed_ops(name: &str, template_name: &str) -> PyResult<Self> {
        Ok(PySpace(Arc::new(SearchSpaceDef::mixed_ops(
            name,
            template(template_name)?,
        ))))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        SearchSpaceDef::load(path).map(|s| PySpace(Arc::new(s))).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> &str {
        self.0.name()
    }

    #[getter]
    fn num_slots(&self) -> Option<usize> {
        self.0.num_slots()
    }

    /// Exact number of architectures.
    fn count(&self) -> PyResult<BigUint> {
        search_space::count_space(&self.0).map_err(py_err)
    }

    /// Canonical digest of the cell with the given slot operation ids.
    fn digest(&self, ops: Vec<usize>) -> PyResult<String> {
        let cell = self.0.cell_from_slots(&ops).map_err(py_err)?;
        Ok(search_space::canonical_digest(&cell))
    }

    fn __repr__(&self) -> String {
        format!("Space({:?})", self.0.name())
    }
}

/// Architecture-score pairs of one task.
#[pyclass(name = "TaskTable", module = "mpnas", frozen)]
struct PyTaskTable(nas_data::TaskTable);

#[pymethods]
impl PyTaskTable {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        nas_data::load_task_table(path).map(PyTaskTable).map_err(py_err)
    }

    /// Scores from a random synthetic objective; `records=None` takes the
    /// whole space.
    #[staticmethod]
    #[pyo3(signature = (space, records=None, seed=0, interaction=0.5))]
    fn synthetic(space: &PySpace, records: Option<usize>, seed: u64, interaction: f64) -> PyResult<Self> {
        let mut rng = seed::rng(seed);
        let objective = nas_data::SyntheticObjective::random(space.0.clone(), interaction, &mut rng);
        nas_data::synthetic_table(&objective, "synthetic", records, &mut rng)
            .map(PyTaskTable)
            .map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        nas_data::save_task_table(&self.0, path).map_err(py_err)
    }

    #[getter]
    fn task_id(&self) -> &str {
        self.0.task_id()
    }

    #[getter]
    fn is_normalized(&self) -> bool {
        self.0.is_normalized()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn scores(&self) -> Vec<f64> {
        self.0.scores()
    }

    fn digests(&self) -> Vec<String> {
        self.0.digests().to_vec()
    }

    fn normalize(&self) -> PyResult<Self> {
        nas_data::normalize_scores(&self.0).map(PyTaskTable).map_err(py_err)
    }

    /// A copy with i.i.d. Gaussian noise of scale `sigma` added to the scores.
    fn noise(&self, sigma: f64, seed: u64) -> PyResult<Self> {
        nas_data::make_noise_task(&self.0, sigma, seed).map(PyTaskTable).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("TaskTable({:?}, {} records)", self.0.task_id(), self.0.len())
    }
}

/// Parameters of a GCN performance predictor.
#[pyclass(name = "Predictor", module = "mpnas", frozen)]
struct PyPredictor(GcnParams);

#[pymethods]
impl PyPredictor {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        predictor::load_checkpoint(path).map(PyPredictor).map_err(py_err)
    }

    /// Meta-trains an initialization on `tables`. `config` is a JSON object
    /// of meta-learning settings; omitted keys take their defaults.
    #[staticmethod]
    #[pyo3(signature = (tables, config=None, seed=0))]
    fn meta_train(
        py: Python<'_>,
        tables: Vec<PyRef<'_, PyTaskTable>>,
        config: Option<&str>,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg: MetaConfig = match config {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => MetaConfig::default(),
        };
        let tables: Vec<_> = tables.iter().map(|t| t.0.clone()).collect();
        py.detach(move || {
            let collection = TaskCollection::new(tables)?;
            let mut rng = seed::rng(seed::derive_named(seed, "meta-train"));
            meta_learner::meta_train(&collection, &cfg, &mut rng)
        })
        .map(|state| PyPredictor(state.params))
        .map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        predictor::save_checkpoint(&self.0, path).map_err(py_err)
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.0.values().len()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.0.vocab_size()
    }

    /// Predicted (normalized) scores for every architecture of `table`.
    fn predict(&self, py: Python<'_>, table: &PyTaskTable) -> PyResult<Vec<f64>> {
        let (params, table) = (self.0.clone(), table.0.clone());
        py.detach(move || {
            let task = EncodedTask::from_table(&table)?;
            let inputs: Vec<_> = task.inputs.iter().collect();
            Gcn.predict(&params, &inputs)
        })
        .map_err(py_err)
    }
}

/// Spearman rank correlation with average ranks for ties.
#[pyfunction]
fn spearman(predictions: Vec<f64>, truths: Vec<f64>) -> PyResult<f64> {
    evaluation::spearman(&predictions, &truths).map_err(py_err)
}

#[pymodule]
fn mpnas(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_class::<PyTaskTable>()?;
    m.add_class::<PyPredictor>()?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
