//! Python bindings for the `pde_greedy` crate.
//!
//! Functionals cross the boundary as [`PyFunctional`] objects; positions and
//! parameters are plain lists of floats.

use std::path::PathBuf;

use pde_greedy::cli::exit_code;
use pde_greedy::tuning::{active_subspace_direction, build_anisotropic_b, KernelFamily};
use pde_greedy::{
    full_collocation_solve as dense_solve, make_problem, CandidateSet, DiffOp, Error, Functional, GreedyConfig,
    History, ParametricProblem, PositionKernel, ProductKernel, Site, Surrogate,
};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e if exit_code(&e) == 3 => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<DiffOp> {
    match kind {
        "I" | "interior" => Ok(DiffOp::NegLaplacian),
        "B" | "boundary" => Ok(DiffOp::Identity),
        other => Err(PyValueError::new_err(format!("unknown functional kind '{other}' (use 'I' or 'B')"))),
    }
}

/// A point evaluation (`kind = "B"`) or `-Δ_x` evaluation (`kind = "I"`).
#[pyclass(name = "Functional", module = "pde_greedy_py", from_py_object)]
#[derive(Clone)]
struct PyFunctional {
    inner: Functional,
}

#[pymethods]
impl PyFunctional {
    #[new]
    #[pyo3(signature = (kind, x, mu, target=0.0, weight=1.0))]
    fn new(kind: &str, x: Vec<f64>, mu: Vec<f64>, target: f64, weight: f64) -> PyResult<Self> {
        Ok(Self { inner: Functional::new(parse_kind(kind)?, x, mu, weight, target) })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.tag()
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.position.clone()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.parameter.clone()
    }

    #[getter]
    fn target(&self) -> f64 {
        self.inner.target
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.inner.weight
    }

    fn __repr__(&self) -> String {
        format!(
            "Functional('{}', x={:?}, mu={:?}, target={}, weight={})",
            self.inner.kind.tag(),
            self.inner.position,
            self.inner.parameter,
            self.inner.target,
            self.inner.weight
        )
    }
}

fn wrap_all(fs: &[Functional]) -> Vec<PyFunctional> {
    fs.iter().map(|f| PyFunctional { inner: f.clone() }).collect()
}

fn unwrap_all(fs: Vec<PyFunctional>) -> Vec<Functional> {
    fs.into_iter().map(|f| f.inner).collect()
}

#[pyclass(name = "CandidateSet", module = "pde_greedy_py", from_py_object)]
#[derive(Clone)]
struct PyCandidateSet {
    inner: CandidateSet,
}

#[pymethods]
impl PyCandidateSet {
    /// Builds a set from functionals; interior ones are moved first.
    #[new]
    fn new(functionals: Vec<PyFunctional>) -> Self {
        Self { inner: CandidateSet::from_functionals(unwrap_all(functionals)) }
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CandidateSet::read_csv(&path).map_err(to_py)? })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_interior(&self) -> usize {
        self.inner.n_interior
    }

    #[getter]
    fn n_boundary(&self) -> usize {
        self.inner.n_boundary
    }

    #[getter]
    fn functionals(&self) -> Vec<PyFunctional> {
        wrap_all(&self.inner.functionals)
    }

    fn targets(&self) -> Vec<f64> {
        self.inner.targets()
    }

    fn set_weights(&mut self, w_interior: f64, w_boundary: f64) {
        self.inner.set_weights(w_interior, w_boundary);
    }
}

/// One of the benchmark problems, e.g. `Problem("moving-circles-smooth")`.
#[pyclass(name = "Problem", module = "pde_greedy_py")]
struct PyProblem {
    inner: ParametricProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self { inner: make_problem(name).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }

    #[getter]
    fn dim_mu(&self) -> usize {
        self.inner.dim_mu()
    }

    fn sample(&self, n_interior: usize, n_boundary: usize, seed: u64) -> PyResult<PyCandidateSet> {
        Ok(PyCandidateSet { inner: self.inner.sample(n_interior, n_boundary, seed).map_err(to_py)? })
    }

    fn source(&self, x: Vec<f64>, mu: Vec<f64>) -> PyResult<f64> {
        self.check(&x, &mu)?;
        Ok(self.inner.source(&x, &mu))
    }

    fn boundary_value(&self, x: Vec<f64>, mu: Vec<f64>) -> PyResult<f64> {
        self.check(&x, &mu)?;
        Ok(self.inner.boundary_value(&x, &mu))
    }

    /// Exact solution, or `None` when the problem has none.
    fn exact(&self, x: Vec<f64>, mu: Vec<f64>) -> PyResult<Option<f64>> {
        self.check(&x, &mu)?;
        Ok(self.inner.exact(&x, &mu))
    }

    fn contains(&self, x: Vec<f64>, mu: Vec<f64>) -> PyResult<bool> {
        self.check(&x, &mu)?;
        Ok(self.inner.geometry.contains(&x, &mu))
    }
}

impl PyProblem {
    fn check(&self, x: &[f64], mu: &[f64]) -> PyResult<()> {
        Error::check_dim(self.inner.dim_x(), x.len()).map_err(to_py)?;
        Error::check_dim(self.inner.dim_mu(), mu.len()).map_err(to_py)
    }
}

fn position_kernel(family: &str, shape: f64, dim: usize) -> PyResult<PositionKernel> {
    let family: KernelFamily = family.parse().map_err(to_py)?;
    match family {
        KernelFamily::Gaussian => PositionKernel::gaussian(shape, dim),
        KernelFamily::Matern => PositionKernel::matern(shape, dim),
    }
    .map_err(to_py)
}

/// Product kernel `k_x(x, x') k_mu(mu, mu')`.
///
/// Gaussian shapes are `eps^2`, Matérn shapes are `eps`.
#[pyclass(name = "Kernel", module = "pde_greedy_py", from_py_object)]
#[derive(Clone)]
struct PyKernel {
    inner: ProductKernel,
}

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (family_x, shape_x, family_mu, shape_mu, dim_x, dim_mu=1))]
    fn new(family_x: &str, shape_x: f64, family_mu: &str, shape_mu: f64, dim_x: usize, dim_mu: usize) -> PyResult<Self> {
        Ok(Self {
            inner: ProductKernel::new(position_kernel(family_x, shape_x, dim_x)?, position_kernel(family_mu, shape_mu, dim_mu)?),
        })
    }

    /// Position kernel `exp(-h^T B h)` with `B` given as nested lists.
    #[staticmethod]
    #[pyo3(signature = (b, family_mu, shape_mu, dim_mu=1))]
    fn anisotropic(b: Vec<Vec<f64>>, family_mu: &str, shape_mu: f64, dim_mu: usize) -> PyResult<Self> {
        let n = b.len();
        if b.iter().any(|row| row.len() != n) {
            return Err(PyValueError::new_err("B must be square"));
        }
        let matrix = pde_greedy::linalg::SymMatrix::from_row_major(n, b.concat()).map_err(to_py)?;
        let kx = PositionKernel::gaussian_aniso(matrix).map_err(to_py)?;
        Ok(Self { inner: ProductKernel::new(kx, position_kernel(family_mu, shape_mu, dim_mu)?) })
    }

    #[getter]
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }

    #[getter]
    fn dim_mu(&self) -> usize {
        self.inner.dim_mu()
    }

    fn eval(&self, x: Vec<f64>, mu: Vec<f64>, x2: Vec<f64>, mu2: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(Site::new(&x, &mu), Site::new(&x2, &mu2)).map_err(to_py)
    }

    /// `<v_a, v_b>` for two functionals.
    fn functional_gram(&self, a: &PyFunctional, b: &PyFunctional) -> PyResult<f64> {
        self.inner.functional_gram(&a.inner, &b.inner).map_err(to_py)
    }
}

/// Kernel expansion `s(x, mu) = Σ alpha_i v_i(x, mu)`.
#[pyclass(name = "Surrogate", module = "pde_greedy_py")]
struct PySurrogate {
    inner: Surrogate,
}

#[pymethods]
impl PySurrogate {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: Surrogate::load(&path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn eval(&self, x: Vec<f64>, mu: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&x, &mu).map_err(to_py)
    }

    /// Evaluates at `(x_k, mu_k)` pairs.
    fn eval_many(&self, xs: Vec<Vec<f64>>, mus: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        if xs.len() != mus.len() {
            return Err(PyValueError::new_err("xs and mus must have equal length"));
        }
        xs.iter().zip(&mus).map(|(x, mu)| self.inner.eval(x, mu).map_err(to_py)).collect()
    }

    fn apply_functional(&self, f: &PyFunctional) -> PyResult<f64> {
        self.inner.apply_functional(&f.inner).map_err(to_py)
    }

    fn native_norm_sq(&self) -> f64 {
        self.inner.native_norm_sq()
    }

    /// Surrogate built from the first `m` selected functionals.
    fn truncated(&self, m: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.truncated(m).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn n_boundary(&self) -> usize {
        self.inner.n_boundary()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha().to_vec()
    }

    #[getter]
    fn functionals(&self) -> Vec<PyFunctional> {
        wrap_all(self.inner.functionals())
    }

    #[getter]
    fn kernel(&self) -> PyKernel {
        PyKernel { inner: self.inner.kernel().clone() }
    }

    fn __repr__(&self) -> String {
        format!("Surrogate(n={}, n_boundary={})", self.inner.n(), self.inner.n_boundary())
    }
}

/// Per-iteration greedy records.
#[pyclass(name = "History", module = "pde_greedy_py")]
struct PyHistory {
    inner: History,
}

#[pymethods]
impl PyHistory {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn stop_cause(&self) -> Option<String> {
        self.inner.stop_cause.map(|c| c.to_string())
    }

    #[getter]
    fn max_residual(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.max_residual).collect()
    }

    #[getter]
    fn power(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.power).collect()
    }

    #[getter]
    fn eta(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.eta).collect()
    }

    #[getter]
    fn kinds(&self) -> Vec<&'static str> {
        self.inner.records.iter().map(|r| if r.interior { "I" } else { "B" }).collect()
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(to_py)
    }
}

/// Greedy selection; returns `(surrogate, history)`.
#[pyfunction]
#[pyo3(signature = (kernel, candidates, beta=1.0, n_max=100, eps_acc=1e-15, eps_stab=1e-15))]
fn run_greedy(
    py: Python<'_>,
    kernel: &PyKernel,
    candidates: &PyCandidateSet,
    beta: f64,
    n_max: usize,
    eps_acc: f64,
    eps_stab: f64,
) -> PyResult<(PySurrogate, PyHistory)> {
    let config = GreedyConfig { beta, n_max, eps_acc, eps_stab };
    let (kernel, set) = (&kernel.inner, &candidates.inner);
    let (s, h) = py.detach(|| pde_greedy::run_greedy(kernel, set, config)).map_err(to_py)?;
    Ok((PySurrogate { inner: s }, PyHistory { inner: h }))
}

/// Dense symmetric collocation on all given functionals.
#[pyfunction]
#[pyo3(signature = (kernel, functionals, targets=None))]
fn full_collocation_solve(
    kernel: &PyKernel,
    functionals: Vec<PyFunctional>,
    targets: Option<Vec<f64>>,
) -> PyResult<PySurrogate> {
    let fs = unwrap_all(functionals);
    let y = targets.unwrap_or_else(|| fs.iter().map(|f| f.target).collect());
    Ok(PySurrogate { inner: dense_solve(&kernel.inner, &fs, &y).map_err(to_py)? })
}

/// Dominant eigenvector of the uncentred second moment of the gradients.
#[pyfunction]
#[pyo3(name = "active_subspace_direction")]
fn py_active_subspace_direction(gradients: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    active_subspace_direction(&gradients).map_err(to_py)
}

/// `V diag(along, across, ..., across) V^T` with `V e_1 = v1`, as nested lists.
#[pyfunction]
#[pyo3(name = "anisotropic_matrix")]
fn py_anisotropic_matrix(v1: Vec<f64>, along: f64, across: f64) -> PyResult<Vec<Vec<f64>>> {
    let b = build_anisotropic_b(&v1, along, across).map_err(to_py)?;
    let d = b.dim();
    Ok((0..d).map(|i| (0..d).map(|j| b.get(i, j)).collect()).collect())
}

#[pymodule]
fn pde_greedy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFunctional>()?;
    m.add_class::<PyCandidateSet>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PySurrogate>()?;
    m.add_class::<PyHistory>()?;
    m.add_function(wrap_pyfunction!(run_greedy, m)?)?;
    m.add_function(wrap_pyfunction!(full_collocation_solve, m)?)?;
    m.add_function(wrap_pyfunction!(py_active_subspace_direction, m)?)?;
    m.add_function(wrap_pyfunction!(py_anisotropic_matrix, m)?)?;
    Ok(())
}
