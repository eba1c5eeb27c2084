//! Python bindings for the `jamgame` crate.

use jamgame::nonsensing::{self, DeviationGrid};
use jamgame::reactive::{self, GdaOptions, PgaCcpOptions, StepSchedule};
use jamgame::{sim, GameInstance, SourceDistribution};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(jamgame_py, NumericalError, PyException);

fn to_py(e: jamgame::Error) -> PyErr {
    match e {
        jamgame::Error::Domain(_) | jamgame::Error::InvalidDistribution(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => NumericalError::new_err(e.to_string()),
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// A symmetric source density together with the jamming cost `c` and power budget `d`.
#[pyclass(name = "Game", frozen, skip_from_py_object, module = "jamgame_py")]
#[derive(Clone)]
struct PyGame {
    inner: GameInstance,
}

#[pymethods]
impl PyGame {
    #[new]
    #[pyo3(signature = (variance = 1.0, c = 1.0, d = 1.0))]
    fn new(variance: f64, c: f64, d: f64) -> PyResult<Self> {
        Ok(Self { inner: GameInstance::gaussian(variance, c, d).map_err(to_py)? })
    }

    /// Laplace source with the given variance.
    #[staticmethod]
    #[pyo3(signature = (variance, c = 1.0, d = 1.0))]
    fn laplace(variance: f64, c: f64, d: f64) -> PyResult<Self> {
        let dist = SourceDistribution::laplace_with_variance(variance).map_err(to_py)?;
        Ok(Self { inner: GameInstance::new(dist, c, d).map_err(to_py)? })
    }

    /// Source given by a table of (x, density) samples.
    #[staticmethod]
    #[pyo3(signature = (xs, ys, c = 1.0, d = 1.0))]
    fn tabulated(xs: Vec<f64>, ys: Vec<f64>, c: f64, d: f64) -> PyResult<Self> {
        let dist = SourceDistribution::tabulated(xs, ys).map_err(to_py)?;
        Ok(Self { inner: GameInstance::new(dist, c, d).map_err(to_py)? })
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    #[getter]
    fn d(&self) -> f64 {
        self.inner.d
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.inner.dist.variance()
    }

    fn pdf(&self, x: f64) -> PyResult<f64> {
        self.inner.dist.pdf(x).map_err(to_py)
    }

    fn tail_second_moment(&self, t: f64) -> PyResult<f64> {
        self.inner.dist.tail_second_moment(t).map_err(to_py)
    }

    fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        self.inner.dist.sample(seed, n)
    }

    fn __repr__(&self) -> String {
        format!(
            "Game({:?}, variance={}, c={}, d={})",
            self.inner.dist.family(),
            self.inner.dist.variance(),
            self.inner.c,
            self.inner.d
        )
    }
}

#[pyclass(name = "NonSensingEquilibrium", frozen, module = "jamgame_py")]
struct PyNonSensing {
    inner: nonsensing::NonSensingEquilibrium,
}

#[pymethods]
impl PyNonSensing {
    #[getter]
    fn phi_star(&self) -> f64 {
        self.inner.phi_star
    }

    #[getter]
    fn xhat(&self) -> (f64, f64) {
        (self.inner.xhat0, self.inner.xhat1)
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    #[getter]
    fn value(&self) -> f64 {
        self.inner.value
    }

    #[getter]
    fn regime(&self) -> String {
        format!("{:?}", self.inner.regime)
    }

    fn to_json(&self) -> String {
        json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "NonSensingEquilibrium(phi_star={}, threshold={}, value={})",
            self.inner.phi_star, self.inner.threshold, self.inner.value
        )
    }
}

/// Solve the non-sensing game. Raises ValueError for inadmissible sources.
#[pyfunction]
fn solve_nonsensing(game: &PyGame) -> PyResult<PyNonSensing> {
    Ok(PyNonSensing { inner: nonsensing::solve_equilibrium(&game.inner).map_err(to_py)? })
}

/// Check the equilibrium against unilateral deviations. Returns (is_saddle, report_json).
#[pyfunction]
#[pyo3(signature = (game, eq, points = 101))]
fn verify_saddle(game: &PyGame, eq: &PyNonSensing, points: usize) -> PyResult<(bool, String)> {
    let grid = DeviationGrid { points, ..Default::default() };
    let r = nonsensing::verify_saddle(&game.inner, &eq.inner, &grid).map_err(to_py)?;
    Ok((r.is_saddle(), json(&r)))
}

#[pyclass(name = "ReactivePoint", frozen, skip_from_py_object, module = "jamgame_py")]
#[derive(Clone)]
struct PyPoint {
    inner: reactive::ReactivePoint,
}

#[pymethods]
impl PyPoint {
    #[new]
    fn new(xhat0: f64, xhat1: f64, alpha: f64, beta: f64) -> PyResult<Self> {
        let inner = reactive::ReactivePoint::new([xhat0, xhat1], [alpha, beta]).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn xhat(&self) -> (f64, f64) {
        (self.inner.xhat0, self.inner.xhat1)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    fn mirrored(&self) -> Self {
        Self { inner: self.inner.mirrored() }
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("ReactivePoint({}, {}, {}, {})", p.xhat0, p.xhat1, p.alpha, p.beta)
    }
}

#[pyfunction]
fn objective(game: &PyGame, p: &PyPoint) -> PyResult<f64> {
    reactive::objective_jtilde(&game.inner, &p.inner).map_err(to_py)
}

/// Gradient of the reactive objective: ((d/dxhat0, d/dxhat1), (d/dalpha, d/dbeta)).
#[pyfunction]
fn gradients(game: &PyGame, p: &PyPoint) -> PyResult<((f64, f64), (f64, f64))> {
    let gx = reactive::grad_xhat(&game.inner, &p.inner).map_err(to_py)?;
    let gt = reactive::grad_theta(&game.inner, &p.inner).map_err(to_py)?;
    Ok(((gx[0], gx[1]), (gt[0], gt[1])))
}

#[pyclass(name = "Certificate", frozen, module = "jamgame_py")]
struct PyCertificate {
    inner: reactive::FneCertificate,
}

#[pymethods]
impl PyCertificate {
    #[getter]
    fn certified(&self) -> bool {
        self.inner.certified
    }

    #[getter]
    fn grad_norm(&self) -> f64 {
        self.inner.grad_norm
    }

    #[getter]
    fn lp_gap(&self) -> f64 {
        self.inner.lp_gap
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    fn __repr__(&self) -> String {
        format!(
            "Certificate(certified={}, grad_norm={:e}, lp_gap={:e})",
            self.inner.certified, self.inner.grad_norm, self.inner.lp_gap
        )
    }
}

#[pyfunction]
#[pyo3(signature = (game, p, epsilon = 1e-5))]
fn certify(game: &PyGame, p: &PyPoint, epsilon: f64) -> PyResult<PyCertificate> {
    Ok(PyCertificate { inner: reactive::certify_fne(&game.inner, &p.inner, epsilon).map_err(to_py)? })
}

#[pyclass(name = "SolveOutcome", frozen, module = "jamgame_py")]
struct PyOutcome {
    inner: reactive::SolveOutcome,
}

#[pymethods]
impl PyOutcome {
    #[getter]
    fn point(&self) -> PyPoint {
        PyPoint { inner: self.inner.point }
    }

    #[getter]
    fn certificate(&self) -> PyCertificate {
        PyCertificate { inner: self.inner.certificate }
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.trace.steps()
    }

    #[getter]
    fn terminated_by(&self) -> String {
        json(&self.inner.trace.terminated_by).trim_matches('"').to_string()
    }

    /// Per-iteration objective values, starting from the initial point.
    fn objectives(&self) -> Vec<f64> {
        self.inner.trace.iterations.iter().map(|r| r.objective).collect()
    }

    fn to_json(&self) -> String {
        json(&self.inner)
    }
}

fn init_or_default(game: &PyGame, init: Option<&PyPoint>) -> reactive::ReactivePoint {
    init.map(|p| p.inner).unwrap_or_else(|| reactive::default_init(&game.inner))
}

#[pyfunction]
#[pyo3(signature = (game, init = None, step = 0.1, epsilon = 1e-5, max_iters = 100_000))]
fn solve_pga_ccp(
    py: Python<'_>,
    game: &PyGame,
    init: Option<&PyPoint>,
    step: f64,
    epsilon: f64,
    max_iters: usize,
) -> PyResult<PyOutcome> {
    let init = init_or_default(game, init);
    let opts = PgaCcpOptions { schedule: StepSchedule::Constant(step), epsilon, max_iters };
    let inner = py
        .detach(|| reactive::solve_pga_ccp(&game.inner, &init, &opts))
        .map_err(to_py)?;
    Ok(PyOutcome { inner })
}

#[pyfunction]
#[pyo3(signature = (game, init = None, lambda_ga = 0.1, lambda_gd = 0.01, epsilon = 1e-5, max_iters = 100_000))]
fn solve_gda(
    py: Python<'_>,
    game: &PyGame,
    init: Option<&PyPoint>,
    lambda_ga: f64,
    lambda_gd: f64,
    epsilon: f64,
    max_iters: usize,
) -> PyResult<PyOutcome> {
    let init = init_or_default(game, init);
    let opts = GdaOptions { lambda_ga, lambda_gd, epsilon, max_iters };
    let inner = py.detach(|| reactive::solve_gda(&game.inner, &init, &opts)).map_err(to_py)?;
    Ok(PyOutcome { inner })
}

#[pyclass(name = "SimResult", frozen, module = "jamgame_py")]
struct PySimResult {
    inner: sim::SimResult,
}

#[pymethods]
impl PySimResult {
    #[getter]
    fn n(&self) -> u64 {
        self.inner.n
    }

    #[getter]
    fn empirical_cost(&self) -> f64 {
        self.inner.empirical_cost
    }

    #[getter]
    fn std_error(&self) -> f64 {
        self.inner.std_error
    }

    #[getter]
    fn p_transmit(&self) -> f64 {
        self.inner.p_transmit
    }

    #[getter]
    fn p_jam(&self) -> f64 {
        self.inner.p_jam
    }

    fn to_json(&self) -> String {
        json(&self.inner)
    }
}

fn run_sim(py: Python<'_>, game: &PyGame, b: sim::PolicyBundle, n: usize, seed: u64) -> PyResult<PySimResult> {
    let inner = py.detach(|| sim::simulate(&game.inner, &b, n, seed)).map_err(to_py)?;
    Ok(PySimResult { inner })
}

/// Monte Carlo cost of the non-sensing equilibrium policies.
#[pyfunction]
#[pyo3(signature = (game, eq, n = 1_000_000, seed = 0))]
fn simulate_nonsensing(py: Python<'_>, game: &PyGame, eq: &PyNonSensing, n: usize, seed: u64) -> PyResult<PySimResult> {
    run_sim(py, game, sim::bundle_from_nonsensing(&eq.inner), n, seed)
}

/// Monte Carlo cost of the policies induced by a reactive point.
#[pyfunction]
#[pyo3(signature = (game, p, n = 1_000_000, seed = 0))]
fn simulate_reactive(py: Python<'_>, game: &PyGame, p: &PyPoint, n: usize, seed: u64) -> PyResult<PySimResult> {
    run_sim(py, game, sim::bundle_from_reactive(&p.inner, &game.inner), n, seed)
}

#[pymodule]
fn jamgame_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyGame>()?;
    m.add_class::<PyNonSensing>()?;
    m.add_class::<PyPoint>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PyOutcome>()?;
    m.add_class::<PySimResult>()?;
    m.add_function(wrap_pyfunction!(solve_nonsensing, m)?)?;
    m.add_function(wrap_pyfunction!(verify_saddle, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(gradients, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pga_ccp, m)?)?;
    m.add_function(wrap_pyfunction!(solve_gda, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_nonsensing, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_reactive, m)?)?;
    Ok(())
}
