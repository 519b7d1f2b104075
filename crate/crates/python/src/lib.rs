//! Python bindings: dataset generation, PDE solves, model construction,
//! training and prediction.

use operon_core::dataset::{Dataset, GenerationParams, Problem};
use operon_core::model::{self as models, ModelKind, ModelSpec, OperatorModel};
use operon_core::pde::SolverGrid;
use operon_core::sampler::{self, FourierSpec, GrfSpec, SensorGrid};
use operon_core::tensor::Tensor2;
use operon_core::train::{self, TrainConfig};
use operon_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Numeric(_) | Error::Diverged { .. } | Error::State(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor2> {
    Tensor2::from_rows(&rows).map_err(to_py)
}

#[pyclass(name = "Dataset", module = "operon")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Dataset::load(path.as_ref()).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn problem(&self) -> &'static str {
        self.inner.problem().name()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn n_functions(&self) -> usize {
        self.inner.n_functions()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    /// `(u, v, (x, t), s)` of record `index`.
    #[allow(clippy::type_complexity)]
    fn record(&self, index: usize) -> PyResult<(Vec<f64>, Vec<f64>, (f64, f64), f64)> {
        if index >= self.inner.len() {
            return Err(PyValueError::new_err(format!("record {index} out of range")));
        }
        let r = self.inner.record(index);
        Ok((r.u_sensors.to_vec(), r.v_sensors.to_vec(), r.query, r.target))
    }

    /// Train and test function indices of a function-level split.
    fn split(&self, train_fraction: f64, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>)> {
        let s = self.inner.split(train_fraction, seed).map_err(to_py)?;
        Ok((s.train_functions, s.test_functions))
    }
}

#[pyclass(name = "Model", module = "operon")]
struct PyModel {
    inner: OperatorModel,
}

#[pymethods]
impl PyModel {
    /// Default architecture of `kind` ("fnn", "deeponet", "edeeponet"),
    /// parameter-matched to the default enhanced DeepONet.
    #[new]
    #[pyo3(signature = (kind, m = 101, branches = 2, seed = 0))]
    fn new(kind: &str, m: usize, branches: usize, seed: u64) -> PyResult<Self> {
        let kind = ModelKind::parse(kind).map_err(to_py)?;
        let reference = ModelSpec::default_for(ModelKind::EDeepOnet, m, branches, seed).map_err(to_py)?;
        let spec = models::match_parameter_counts(&reference, kind).map_err(to_py)?;
        Ok(Self {
            inner: OperatorModel::build(spec).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: OperatorModel::load(path.as_ref()).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// JSON encoding of the architecture.
    fn spec_json(&self) -> String {
        serde_json::to_string(self.inner.spec()).unwrap_or_default()
    }

    /// Batched prediction: `functions[i]` is a list of rows (one per query)
    /// of the sensor values of input function `i`; `queries` holds `(x, t)`
    /// rows.
    fn predict(&self, functions: Vec<Vec<Vec<f64>>>, queries: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let inputs = functions.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
        let refs: Vec<&Tensor2> = inputs.iter().collect();
        self.inner.predict(&refs, &matrix(queries)?).map_err(to_py)
    }

    /// Trains in place (keeping the best-test parameters) and returns the
    /// per-epoch `(epoch, train_mse, test_mse)` curve.
    #[pyo3(signature = (dataset, epochs, lr = 1e-4, batch_size = None, seed = 0, train_fraction = 0.9, split_seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &mut self,
        py: Python<'_>,
        dataset: PyRef<'_, PyDataset>,
        epochs: usize,
        lr: f64,
        batch_size: Option<usize>,
        seed: u64,
        train_fraction: f64,
        split_seed: u64,
    ) -> PyResult<Vec<(usize, f64, Option<f64>)>> {
        let config = TrainConfig {
            lr,
            batch_size,
            epochs,
            seed,
            ..TrainConfig::default()
        };
        let data = &dataset.inner;
        let model = &mut self.inner;
        let outcome = py
            .detach(|| {
                let split = data.split(train_fraction, split_seed)?;
                train::train(model, data, &split, &config)
            })
            .map_err(to_py)?;
        self.inner = outcome.checkpoint;
        Ok(outcome
            .metrics
            .epochs
            .iter()
            .map(|e| (e.epoch, e.train_mse, e.test_mse))
            .collect())
    }
}

#[pyfunction]
#[pyo3(signature = (problem, functions, queries, seed, sensor_count = 101, nx = 201, nt = 201))]
#[allow(clippy::too_many_arguments)]
fn generate_dataset(
    py: Python<'_>,
    problem: &str,
    functions: usize,
    queries: usize,
    seed: u64,
    sensor_count: usize,
    nx: usize,
    nt: usize,
) -> PyResult<PyDataset> {
    let problem = Problem::parse(problem).map_err(to_py)?;
    let params = GenerationParams {
        sensor_count,
        solver: SolverGrid { nx, nt },
        ..GenerationParams::default()
    };
    let inner = py
        .detach(|| Dataset::generate(problem, functions, queries, seed, params))
        .map_err(to_py)?;
    Ok(PyDataset { inner })
}

/// Solves the problem on an `nx × nt` grid; returns `nt` rows of `nx` values.
#[pyfunction]
fn solve(problem: &str, a: Vec<f64>, v: Vec<f64>, nt: usize) -> PyResult<Vec<Vec<f64>>> {
    let problem = Problem::parse(problem).map_err(to_py)?;
    let grid = SolverGrid::new(v.len(), nt).map_err(to_py)?;
    let field = problem.solve(&a, &v, grid).map_err(to_py)?;
    Ok((0..grid.nt).map(|k| field.level(k).to_vec()).collect())
}

#[pyfunction]
#[pyo3(signature = (m, seed, length_scale = 0.2, variance = 1.0))]
fn sample_grf(m: usize, seed: u64, length_scale: f64, variance: f64) -> PyResult<Vec<f64>> {
    let spec = GrfSpec {
        length_scale,
        variance,
        ..GrfSpec::default()
    };
    let grid = SensorGrid::new(m).map_err(to_py)?;
    Ok(sampler::sample_grf(&spec, &grid, seed).map_err(to_py)?.values)
}

#[pyfunction]
#[pyo3(signature = (m, seed, n_modes = 5, decay = 2.0))]
fn sample_periodic_fourier(m: usize, seed: u64, n_modes: usize, decay: f64) -> PyResult<Vec<f64>> {
    let spec = FourierSpec { n_modes, decay };
    spec.validate().map_err(to_py)?;
    let grid = SensorGrid::new(m).map_err(to_py)?;
    Ok(sampler::sample_periodic_fourier(n_modes, decay, &grid, seed)
        .map_err(to_py)?
        .values)
}

#[pymodule]
fn operon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sample_grf, m)?)?;
    m.add_function(wrap_pyfunction!(sample_periodic_fourier, m)?)?;
    Ok(())
}
