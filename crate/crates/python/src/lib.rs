//! Python bindings: problem setup, the integral-equation solver, field
//! reconstruction, the contraction certificate and the finite-difference
//! reference solver.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stefan_core::certify::{certify as certify_core, default_b2, empirical_contraction};
use stefan_core::fd::{compare_trajectories, fd_solve as fd_solve_core, FdConfig};
use stefan_core::volterra::{convergence_study, ConvergenceReference};
use stefan_core::{
    BoundaryLaw, FreeBoundaryTrajectory, KtauMode, LinearizedProfile, PhysicalProfile, ProblemSpec, SolverConfig,
    StefanError,
};

fn to_py(err: StefanError) -> PyErr {
    if err.is_numerical() {
        PyRuntimeError::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = String>>(text: &str) -> PyResult<T> {
    text.parse().map_err(PyValueError::new_err)
}

/// Exact traveling front with constant flux.
#[pyclass(name = "Front", frozen, skip_from_py_object)]
struct PyFront(stefan_core::FrontSolution);

#[pymethods]
impl PyFront {
    #[new]
    fn new(beta1: f64, beta2: f64, b_bar: f64) -> PyResult<Self> {
        stefan_core::make_front(beta1, beta2, b_bar).map(PyFront).map_err(to_py)
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.0.nu_const
    }

    #[getter]
    fn speed(&self) -> f64 {
        self.0.speed
    }

    #[getter]
    fn s_dot(&self) -> f64 {
        self.0.s_dot
    }

    fn zbar(&self, t: f64) -> f64 {
        self.0.zbar(t)
    }

    fn psi(&self, z: f64, t: f64) -> PyResult<f64> {
        self.0.psi(z, t).map_err(to_py)
    }

    /// Sampled datum at `t = 0`; `z_min=None` starts where the tail has decayed.
    #[pyo3(signature = (dz, z_min=None))]
    fn initial_profile(&self, dz: f64, z_min: Option<f64>) -> PyResult<PyProfile> {
        self.0.initial_profile(z_min, dz).map(PyProfile).map_err(to_py)
    }
}

/// Initial datum `psi_0` on a grid ending at the front.
#[pyclass(name = "Profile", frozen, from_py_object)]
#[derive(Clone)]
struct PyProfile(LinearizedProfile);

#[pymethods]
impl PyProfile {
    #[new]
    fn new(z: Vec<f64>, psi: Vec<f64>, dpsi: Vec<f64>, tail: f64, beta2: f64) -> PyResult<Self> {
        LinearizedProfile::new(z, psi, dpsi, tail, beta2).map(PyProfile).map_err(to_py)
    }

    #[staticmethod]
    fn cosine_blend(beta1: f64, beta2: f64, z_start: f64, b_bar: f64, dz: f64) -> PyResult<Self> {
        LinearizedProfile::cosine_blend(beta1, beta2, z_start, b_bar, dz)
            .map(PyProfile)
            .map_err(to_py)
    }

    #[getter]
    fn z(&self) -> Vec<f64> {
        self.0.z_grid.clone()
    }

    #[getter]
    fn psi(&self) -> Vec<f64> {
        self.0.psi_values.clone()
    }

    #[getter]
    fn b_bar(&self) -> f64 {
        self.0.b_bar
    }

    fn eval(&self, z: f64) -> f64 {
        self.0.eval(z)
    }
}

/// Sampled physical temperature `theta_0(x)`.
#[pyclass(name = "PhysicalProfile", frozen, from_py_object)]
#[derive(Clone)]
struct PyPhysicalProfile(PhysicalProfile);

#[pymethods]
impl PyPhysicalProfile {
    #[new]
    fn new(x: Vec<f64>, theta: Vec<f64>, tail: f64) -> PyResult<Self> {
        PhysicalProfile::new(x, theta, tail).map(PyPhysicalProfile).map_err(to_py)
    }

    fn h(&self, s: f64) -> PyResult<f64> {
        stefan_core::hodograph::h_of_s(&self.0, s).map_err(to_py)
    }
}

#[pyclass(name = "Problem", frozen, skip_from_py_object)]
struct PyProblem(ProblemSpec);

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (profile, beta1, beta2, b, law="frozen_h", physical=None))]
    fn new(
        profile: PyProfile,
        beta1: f64,
        beta2: f64,
        b: f64,
        law: &str,
        physical: Option<PyPhysicalProfile>,
    ) -> PyResult<Self> {
        let law: BoundaryLaw = parse(law)?;
        ProblemSpec::new(profile.0, beta1, beta2, b, law, physical.map(|p| p.0))
            .map(PyProblem)
            .map_err(to_py)
    }

    #[getter]
    fn beta2(&self) -> f64 {
        self.0.beta2
    }
}

/// Time-step and Picard settings.
#[pyclass(name = "SolverConfig", frozen, from_py_object)]
#[derive(Clone)]
struct PySolverConfig(SolverConfig);

#[pymethods]
impl PySolverConfig {
    #[new]
    #[pyo3(signature = (dt=1e-3, t_end=0.3, picard_tol=1e-12, picard_max=200, z_tail=5.0, ktau_mode="limit"))]
    fn new(dt: f64, t_end: f64, picard_tol: f64, picard_max: usize, z_tail: f64, ktau_mode: &str) -> PyResult<Self> {
        let cfg = SolverConfig {
            dt,
            t_end,
            picard_tol,
            picard_max,
            z_tail,
            ktau_mode: parse::<KtauMode>(ktau_mode)?,
        };
        cfg.validate().map_err(to_py)?;
        Ok(PySolverConfig(cfg))
    }
}

#[pyclass(name = "Trajectory", frozen, skip_from_py_object)]
struct PyTrajectory(FreeBoundaryTrajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn nu(&self) -> Vec<f64> {
        self.0.nu.clone()
    }

    #[getter]
    fn zbar(&self) -> Vec<f64> {
        self.0.zbar.clone()
    }

    #[getter]
    fn s(&self) -> Vec<f64> {
        self.0.s.clone()
    }

    #[getter]
    fn picard_iters(&self) -> Vec<usize> {
        self.0.picard_iters.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyfunction]
#[pyo3(signature = (problem, config=None))]
fn solve(py: Python<'_>, problem: &PyProblem, config: Option<PySolverConfig>) -> PyResult<PyTrajectory> {
    let cfg = config.map(|c| c.0).unwrap_or_default();
    py.detach(|| stefan_core::solve(&problem.0, &cfg))
        .map(PyTrajectory)
        .map_err(to_py)
}

/// `psi(z, t)` on `z` at the trajectory node `t`.
#[pyfunction]
fn reconstruct(py: Python<'_>, traj: &PyTrajectory, problem: &PyProblem, t: f64, z: Vec<f64>) -> PyResult<Vec<f64>> {
    py.detach(|| stefan_core::reconstruct_field(&traj.0, &problem.0, t, &z))
        .map(|snap| snap.psi)
        .map_err(to_py)
}

/// Contraction constants as a dict; `trials > 0` adds the randomized check.
#[pyfunction]
#[pyo3(signature = (problem, b2=None, trials=0, seed=0, config=None))]
fn certify<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    b2: Option<f64>,
    trials: usize,
    seed: u64,
    config: Option<PySolverConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = &problem.0;
    let b2 = match b2 {
        Some(v) => v,
        None => default_b2(spec.profile.b_bar).map_err(to_py)?,
    };
    let cert = certify_core(&spec.profile, spec.beta1, spec.beta2, b2).map_err(to_py)?;
    let out = PyDict::new(py);
    for (name, value, _) in cert.rows() {
        out.set_item(name, value)?;
    }
    let flags: Vec<&str> = cert.flags.iter().map(|f| f.as_str()).collect();
    out.set_item("flags", flags)?;
    if trials > 0 {
        let cfg = config.map(|c| c.0).unwrap_or_default();
        let stats = py
            .detach(|| empirical_contraction(spec, &cfg, &cert, trials, seed))
            .map_err(to_py)?;
        out.set_item("max_ratio", stats.max_ratio)?;
        out.set_item("mean_ratio", stats.mean_ratio)?;
        out.set_item("contraction_pass", stats.pass)?;
    }
    Ok(out)
}

/// Finite-difference reference run on the fixed domain.
#[pyfunction]
#[pyo3(signature = (problem, t_end, depth=10.0, ny=400, dt=1e-4, theta_scheme=0.5))]
fn fd_solve(
    py: Python<'_>,
    problem: &PyProblem,
    t_end: f64,
    depth: f64,
    ny: usize,
    dt: f64,
    theta_scheme: f64,
) -> PyResult<PyTrajectory> {
    let fd = FdConfig {
        depth,
        ny,
        dt,
        theta_scheme,
    };
    py.detach(|| fd_solve_core(&problem.0, &fd, t_end, &[]))
        .map(|(traj, _)| PyTrajectory(traj))
        .map_err(to_py)
}

/// Sup-norm differences `(nu, zbar, s)` on the sparser grid of the overlap.
#[pyfunction]
fn compare(a: &PyTrajectory, b: &PyTrajectory) -> PyResult<(f64, f64, f64)> {
    let d = compare_trajectories(&a.0, &b.0).map_err(to_py)?;
    Ok((d.nu.max, d.zbar.max, d.s.max))
}

/// `[(dt, sup_error, order)]`; the reference is the front when given, else the finest run.
#[pyfunction]
#[pyo3(signature = (problem, dts, config=None, front=None))]
fn convergence(
    py: Python<'_>,
    problem: &PyProblem,
    dts: Vec<f64>,
    config: Option<PySolverConfig>,
    front: Option<&PyFront>,
) -> PyResult<Vec<(f64, f64, Option<f64>)>> {
    let cfg = config.map(|c| c.0).unwrap_or_default();
    let reference = front.map_or(ConvergenceReference::Finest, |f| ConvergenceReference::Front(f.0));
    let rows = py
        .detach(|| convergence_study(&problem.0, &cfg, &dts, reference))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.dt, r.sup_error, r.order)).collect())
}

#[pymodule]
fn stefan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFront>()?;
    m.add_class::<PyProfile>()?;
    m.add_class::<PyPhysicalProfile>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolverConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(fd_solve, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    Ok(())
}
