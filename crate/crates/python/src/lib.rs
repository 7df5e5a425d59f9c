//! Python bindings: scenario pools, the hierarchical controller and the
//! periodic oracle.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hmpc::battery::{BatteryModel, BatteryParams, PeakSlack};
use hmpc::controller::{ControllerConfig, HierarchyState};
use hmpc::oracle;
use hmpc::scenario::{synthetic_pool, PeriodRealization, ScenarioPool, SyntheticSpec};
use hmpc::stage::{StageTemplate, TargetBox, Targets};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn solver_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Data of one period: four series of `steps + 1` samples.
#[pyclass(name = "Realization", module = "hmpc_py", from_py_object)]
#[derive(Clone)]
struct PyRealization {
    inner: PeriodRealization,
}

#[pymethods]
impl PyRealization {
    #[new]
    fn new(
        energy_price: Vec<f64>,
        fr_price: Vec<f64>,
        load: Vec<f64>,
        fr_request: Vec<f64>,
    ) -> PyResult<Self> {
        let inner = PeriodRealization {
            energy_price,
            fr_price,
            load,
            fr_request,
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn energy_price(&self) -> Vec<f64> {
        self.inner.energy_price.clone()
    }

    #[getter]
    fn fr_price(&self) -> Vec<f64> {
        self.inner.fr_price.clone()
    }

    #[getter]
    fn load(&self) -> Vec<f64> {
        self.inner.load.clone()
    }

    #[getter]
    fn fr_request(&self) -> Vec<f64> {
        self.inner.fr_request.clone()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }
}

/// Finite-support distribution of period templates.
#[pyclass(name = "Pool", module = "hmpc_py", from_py_object)]
#[derive(Clone)]
struct PyPool {
    inner: ScenarioPool,
}

#[pymethods]
impl PyPool {
    #[staticmethod]
    #[pyo3(signature = (templates = 5, steps = 24, seed = 7, peak_load_kw = 3000.0))]
    fn synthetic(templates: usize, steps: usize, seed: u64, peak_load_kw: f64) -> PyResult<Self> {
        let inner = synthetic_pool(&SyntheticSpec {
            templates,
            steps,
            seed,
            peak_load_kw,
            ..SyntheticSpec::default()
        })
        .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: ScenarioPool = serde_json::from_str(text).map_err(value_err)?;
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    fn template(&self, k: usize) -> PyResult<PyRealization> {
        self.inner
            .templates
            .get(k)
            .map(|d| PyRealization { inner: d.clone() })
            .ok_or_else(|| value_err(format!("template {k} of {}", self.inner.len())))
    }

    /// `count` i.i.d. draws on RNG stream `stream` of the pool seed.
    #[pyo3(signature = (count, stream = 2))]
    fn sample(&self, count: usize, stream: u64) -> Vec<PyRealization> {
        let mut s = self.inner.sampler(stream);
        (0..count)
            .map(|_| PyRealization {
                inner: s.sample_period(),
            })
            .collect()
    }
}

fn battery_setup(
    pool: &ScenarioPool,
    peak_penalty: Option<f64>,
) -> PyResult<(BatteryModel, StageTemplate, TargetBox)> {
    let params = BatteryParams {
        period_steps: pool.steps(),
        ..BatteryParams::default()
    };
    let m = peak_penalty.unwrap_or_else(|| params.default_peak_penalty());
    let model = BatteryModel::new(params.clone(), PeakSlack::Penalty(m)).map_err(value_err)?;
    let template =
        StageTemplate::new(Arc::new(model.clone()), &pool.templates[0]).map_err(value_err)?;
    let max_load = pool
        .templates
        .iter()
        .map(|d| d.peak_load())
        .fold(0.0, f64::max);
    Ok((model, template, params.default_box(max_load)))
}

/// The two-level controller on the bundled battery model.
#[pyclass(name = "Hierarchy", module = "hmpc_py")]
struct PyHierarchy {
    state: HierarchyState,
    model: BatteryModel,
}

#[pymethods]
impl PyHierarchy {
    #[new]
    #[pyo3(signature = (pool, peak_penalty = None, exact_floor = true))]
    fn new(pool: &PyPool, peak_penalty: Option<f64>, exact_floor: bool) -> PyResult<Self> {
        let (model, template, target_box) = battery_setup(&pool.inner, peak_penalty)?;
        let mut cfg = ControllerConfig::new(target_box);
        cfg.exact_floor = exact_floor;
        let state = HierarchyState::new(template, cfg).map_err(value_err)?;
        Ok(Self { state, model })
    }

    /// Current `(x0, eta)`.
    fn targets(&self) -> (Vec<f64>, f64) {
        let t = self.state.targets();
        (t.x0.clone(), t.eta)
    }

    #[getter]
    fn period(&self) -> usize {
        self.state.period()
    }

    #[getter]
    fn realized_cost(&self) -> f64 {
        self.state.realized_cost()
    }

    /// Plan the upcoming period on a forecast.
    fn plan<'py>(&self, py: Python<'py>, forecast: &PyRealization) -> PyResult<Bound<'py, PyDict>> {
        let res = self.state.mpc(&forecast.inner).map_err(solver_err)?;
        let tr = self.model.decode_trajectory(&res).map_err(solver_err)?;
        let out = PyDict::new(py);
        out.set_item("cost", res.cost_h)?;
        out.set_item("P", tr.power)?;
        out.set_item("F", tr.fr_capacity)?;
        out.set_item("E", tr.energy)?;
        out.set_item("d_util", tr.utility_draw)?;
        out.set_item("peak_slack", tr.peak_slack)?;
        Ok(out)
    }

    /// Observe the realized period and move to the next targets.
    fn step<'py>(&mut self, py: Python<'py>, realized: &PyRealization) -> PyResult<Bound<'py, PyDict>> {
        let g = self.state.step_period(&realized.inner).map_err(solver_err)?;
        let out = PyDict::new(py);
        out.set_item("period", g.period)?;
        out.set_item("x0", g.targets.x0)?;
        out.set_item("eta", g.targets.eta)?;
        out.set_item("running_cost", g.running_cost)?;
        out.set_item("lower_bound", g.lower_bound)?;
        out.set_item("eps", g.current_gap)?;
        out.set_item("stage_cost", g.stage_cost)?;
        out.set_item("peak_slack", g.slack_activation)?;
        out.set_item("next_x0", g.next_targets.x0)?;
        out.set_item("next_eta", g.next_targets.eta)?;
        Ok(out)
    }
}

/// Periodic optimum over an observed history: `(x0, eta, cost)`.
#[pyfunction]
#[pyo3(signature = (pool, history, peak_penalty = None, cap = oracle::DEFAULT_CAP))]
fn solve_saa(
    pool: &PyPool,
    history: Vec<PyRealization>,
    peak_penalty: Option<f64>,
    cap: usize,
) -> PyResult<(Vec<f64>, f64, f64)> {
    let (_, template, target_box) = battery_setup(&pool.inner, peak_penalty)?;
    let history: Vec<PeriodRealization> = history.into_iter().map(|d| d.inner).collect();
    let sol = oracle::solve_saa(&template, &history, &target_box, cap).map_err(solver_err)?;
    Ok((sol.targets.x0, sol.targets.eta, sol.cost))
}

/// Exact expected cost of fixed targets under the pool.
#[pyfunction]
#[pyo3(signature = (pool, x0, eta, peak_penalty = None))]
fn reference_cost(pool: &PyPool, x0: Vec<f64>, eta: f64, peak_penalty: Option<f64>) -> PyResult<f64> {
    let (_, template, _) = battery_setup(&pool.inner, peak_penalty)?;
    oracle::reference_cost(&template, &pool.inner, &Targets::new(x0, eta)).map_err(solver_err)
}

/// Runs the command-line driver with `args` (without the program name).
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    hmpc::cli::main_with_args(std::iter::once("hmpc".to_string()).chain(args))
}

#[pymodule]
fn hmpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRealization>()?;
    m.add_class::<PyPool>()?;
    m.add_class::<PyHierarchy>()?;
    m.add_function(wrap_pyfunction!(solve_saa, m)?)?;
    m.add_function(wrap_pyfunction!(reference_cost, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
