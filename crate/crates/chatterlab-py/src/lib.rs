//! Python bindings for the chatterlab overload-control toolkit.
//!
//! Exposes the model types (`Params`, `State`) and the main operations:
//! closed-form trajectory simulation, periodic-orbit detection for both the
//! switching model and the one-dimensional jump system, the collapse
//! throughput report, the worst-case oscillation certificate, and the
//! discrete stochastic counterpart. Structured results cross the boundary
//! as plain dicts/lists mirroring the JSON artifacts the CLI emits, so the
//! Python side needs no wrapper classes to consume them.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;

use chatterlab::fluid::FluidError;
use chatterlab::model::{state_from_triple, ModelParams, StateVector};
use chatterlab::{approx, ctmc, equilibrium, fluid};

fn err(e: FluidError) -> PyErr {
    match &e {
        FluidError::Model(_) | FluidError::Csv(_) => PyValueError::new_err(e.to_string()),
        FluidError::Numerics(_) => PyRuntimeError::new_err(e.to_string()),
        FluidError::Io(_) => PyIOError::new_err(e.to_string()),
    }
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    match v {
        Value::Null => Ok(py.None()),
        Value::Bool(b) => Ok(b.into_pyobject(py)?.to_owned().into_any().unbind()),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(i.into_pyobject(py)?.into_any().unbind())
            } else if let Some(u) = n.as_u64() {
                Ok(u.into_pyobject(py)?.into_any().unbind())
            } else {
                let f = n.as_f64().expect("JSON numbers are i64, u64, or f64");
                Ok(f.into_pyobject(py)?.into_any().unbind())
            }
        }
        Value::String(s) => Ok(s.into_pyobject(py)?.into_any().unbind()),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            Ok(list.into_any().unbind())
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)?)?;
            }
            Ok(dict.into_any().unbind())
        }
    }
}

/// Convert any serializable result into nested Python dicts/lists.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

/// Model parameters of the symmetric two-class, two-pool system: arrival
/// rate `lambda_` per pool, cross-pool service rate `mu` (own-pool rate is
/// 1), abandonment rate `theta`, activation threshold `kappa`, and release
/// threshold `tau`.
#[pyclass(module = "chatterlab")]
struct Params {
    inner: ModelParams,
}

#[pymethods]
impl Params {
    #[new]
    fn new(lambda_: f64, mu: f64, theta: f64, kappa: f64, tau: f64) -> PyResult<Self> {
        ModelParams::new(lambda_, mu, theta, kappa, tau)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "Params(lambda_={}, mu={}, theta={}, kappa={}, tau={})",
            p.lambda, p.mu, p.theta, p.kappa, p.tau
        )
    }
}

/// System state: queue lengths `q1`, `q2` and pool occupancies `zij`
/// (class-`i` customers held in pool `j`, as a fraction of the pool).
#[pyclass(module = "chatterlab")]
struct State {
    inner: StateVector,
}

impl State {
    fn wrap(inner: StateVector) -> PyResult<Self> {
        inner
            .well_formed()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }
}

#[pymethods]
impl State {
    #[new]
    fn new(q1: f64, q2: f64, z11: f64, z12: f64, z21: f64, z22: f64) -> PyResult<Self> {
        Self::wrap(StateVector { q1, q2, z11, z12, z21, z22 })
    }

    /// Canonical overloaded start: queues `q1 < q2`, stale reverse sharing
    /// `z21`, reverse content parked at the release threshold, both pools
    /// full.
    #[staticmethod]
    fn from_triple(q1: f64, q2: f64, z21: f64, params: &Params) -> PyResult<Self> {
        Self::wrap(state_from_triple(q1, q2, z21, &params.inner))
    }

    #[getter]
    fn q1(&self) -> f64 {
        self.inner.q1
    }

    #[getter]
    fn q2(&self) -> f64 {
        self.inner.q2
    }

    #[getter]
    fn z11(&self) -> f64 {
        self.inner.z11
    }

    #[getter]
    fn z12(&self) -> f64 {
        self.inner.z12
    }

    #[getter]
    fn z21(&self) -> f64 {
        self.inner.z21
    }

    #[getter]
    fn z22(&self) -> f64 {
        self.inner.z22
    }

    /// Queue difference `q2 - q1`.
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    /// The label-reversed state (classes and pools swapped).
    fn mirror(&self) -> Self {
        Self { inner: self.inner.mirror() }
    }

    fn __repr__(&self) -> String {
        let x = &self.inner;
        format!(
            "State(q1={}, q2={}, z11={}, z12={}, z21={}, z22={})",
            x.q1, x.q2, x.z11, x.z12, x.z21, x.z22
        )
    }
}

fn trajectory_dict<'py>(
    py: Python<'py>,
    traj: &fluid::Trajectory,
) -> PyResult<Bound<'py, PyDict>> {
    let n = traj.samples.len();
    let mut t = Vec::with_capacity(n);
    let mut q1 = Vec::with_capacity(n);
    let mut q2 = Vec::with_capacity(n);
    let mut z11 = Vec::with_capacity(n);
    let mut z12 = Vec::with_capacity(n);
    let mut z21 = Vec::with_capacity(n);
    let mut z22 = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    let mut phase = Vec::with_capacity(n);
    for s in &traj.samples {
        t.push(s.t);
        q1.push(s.state.q1);
        q2.push(s.state.q2);
        z11.push(s.state.z11);
        z12.push(s.state.z12);
        z21.push(s.state.z21);
        z22.push(s.state.z22);
        delta.push(s.delta);
        phase.push(s.phase.to_string());
    }
    let d = PyDict::new(py);
    d.set_item("t", t)?;
    d.set_item("q1", q1)?;
    d.set_item("q2", q2)?;
    d.set_item("z11", z11)?;
    d.set_item("z12", z12)?;
    d.set_item("z21", z21)?;
    d.set_item("z22", z22)?;
    d.set_item("delta", delta)?;
    d.set_item("phase", phase)?;
    d.set_item("hint", format!("{:?}", traj.hint))?;
    d.set_item("cycle_records", to_py(py, &traj.cycle_records)?)?;
    d.set_item("jumps", to_py(py, &traj.jumps)?)?;
    Ok(d)
}

/// The no-sharing rest state `(0, 0, lambda_, 0, 0, lambda_)`.
#[pyfunction]
fn stationary_point(params: &Params) -> State {
    State { inner: equilibrium::stationary_point(&params.inner) }
}

/// Simulate the deterministic switching model and return the sampled path
/// as a dict of columns (`t`, `q1`, …, `delta`, `phase`) plus `hint`,
/// `cycle_records`, and `jumps`.
#[pyfunction]
#[pyo3(signature = (state, params, horizon, sample_dt = 0.05))]
fn simulate<'py>(
    py: Python<'py>,
    state: &State,
    params: &Params,
    horizon: f64,
    sample_dt: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let traj = fluid::simulate(&state.inner, &params.inner, horizon, sample_dt).map_err(err)?;
    trajectory_dict(py, &traj)
}

/// Iterate the switching model's half-cycle return map to classify the
/// long-run behavior; the result dict carries `verdict`, the gap sequence,
/// and the periodic orbit when one is found.
#[pyfunction]
#[pyo3(signature = (state, params, tol = 1e-9, max_iter = 300))]
fn iterate_periodic(
    py: Python<'_>,
    state: &State,
    params: &Params,
    tol: f64,
    max_iter: usize,
) -> PyResult<Py<PyAny>> {
    let r = equilibrium::iterate_periodic(&state.inner, &params.inner, tol, max_iter)
        .map_err(err)?;
    to_py(py, &r)
}

/// One application of the jump-system cycle map to a queue-difference gap.
#[pyfunction]
fn delta_map(delta: f64, params: &Params) -> PyResult<f64> {
    approx::delta_map(delta, &params.inner).map_err(err)
}

/// Iterate the one-dimensional jump-system cycle map from `delta0`.
#[pyfunction]
#[pyo3(signature = (delta0, params, tol = 1e-10, max_iter = 300))]
fn iterate_approx(
    py: Python<'_>,
    delta0: f64,
    params: &Params,
    tol: f64,
    max_iter: usize,
) -> PyResult<Py<PyAny>> {
    let r = approx::iterate_approx(delta0, &params.inner, tol, max_iter).map_err(err)?;
    to_py(py, &r)
}

/// Certified contraction data for the jump-system map on an interval
/// around its fixed point (rate `rho`, cycle-length bound `r_bound`, …).
#[pyfunction]
#[pyo3(signature = (params, margin = 0.1))]
fn contraction_rate(py: Python<'_>, params: &Params, margin: f64) -> PyResult<Py<PyAny>> {
    let rc = approx::contraction_rate(&params.inner, margin).map_err(err)?;
    to_py(py, &rc)
}

/// Iterate the one-line heuristic gap map; the result carries the
/// classification and, for a sustained oscillation, the closure factor
/// `xi_star`.
#[pyfunction]
#[pyo3(signature = (delta0, params, max_iter = 100))]
fn heuristic_iterate(
    py: Python<'_>,
    delta0: f64,
    params: &Params,
    max_iter: usize,
) -> PyResult<Py<PyAny>> {
    let h = approx::heuristic_iterate(delta0, &params.inner, max_iter).map_err(err)?;
    to_py(py, &h)
}

/// Long-run served-rate report for the cycle implied by closure factor
/// `xi_star`: closed form, direct time average, the sign-variant
/// arrangement, and the collapse verdict.
#[pyfunction]
fn throughput_l(py: Python<'_>, xi_star: f64, params: &Params) -> PyResult<Py<PyAny>> {
    let rep = approx::throughput_l(xi_star, &params.inner).map_err(err)?;
    to_py(py, &rep)
}

/// Worst-case certificate that every start in the gap box
/// `[delta_lower, delta_upper]` with far-queue floor `q1_lower` oscillates
/// forever.
#[pyfunction]
fn certify_endless(
    py: Python<'_>,
    params: &Params,
    delta_lower: f64,
    delta_upper: f64,
    q1_lower: f64,
) -> PyResult<Py<PyAny>> {
    let cert =
        equilibrium::certify_endless(&params.inner, delta_lower, delta_upper, q1_lower)
            .map_err(err)?;
    to_py(py, &cert)
}

/// Simulate the discrete stochastic counterpart at scale `n` from the
/// nearest head-count state to `state`, returning the fluid-scaled path in
/// the same column layout as `simulate`.
#[pyfunction]
#[pyo3(signature = (state, params, n, horizon, sample_dt = 0.25, seed = 1))]
fn simulate_ctmc<'py>(
    py: Python<'py>,
    state: &State,
    params: &Params,
    n: u32,
    horizon: f64,
    sample_dt: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cp = ctmc::CtmcParams::from_symmetric(n, &params.inner).map_err(err)?;
    let x0 = ctmc::CtmcState::from_fluid(&state.inner, n, &cp);
    let traj = ctmc::simulate_ctmc(&x0, &cp, horizon, sample_dt, seed).map_err(err)?;
    trajectory_dict(py, &traj)
}

#[pymodule]
#[pyo3(name = "chatterlab")]
fn chatterlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Params>()?;
    m.add_class::<State>()?;
    m.add_function(wrap_pyfunction!(stationary_point, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(iterate_periodic, m)?)?;
    m.add_function(wrap_pyfunction!(delta_map, m)?)?;
    m.add_function(wrap_pyfunction!(iterate_approx, m)?)?;
    m.add_function(wrap_pyfunction!(contraction_rate, m)?)?;
    m.add_function(wrap_pyfunction!(heuristic_iterate, m)?)?;
    m.add_function(wrap_pyfunction!(throughput_l, m)?)?;
    m.add_function(wrap_pyfunction!(certify_endless, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_ctmc, m)?)?;
    Ok(())
}
