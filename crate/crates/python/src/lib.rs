//! Python bindings for the vkfem solver.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::sync::Arc;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use vkfem::forms::assemble_stiffness;
use vkfem::mesh::{LShapeDiagonal, Triangulation};
use vkfem::morley::MorleySpace;
use vkfem::problem::{Domain, Problem};
use vkfem::solver::{self, ActiveSetConvention, ProblemSpec, SolveResult, SolverOptions};
use vkfem::study::{self, EocMode, StudyRun};
use vkfem::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::Parse { .. } | Error::Format { .. } | Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn io_err(e: std::io::Error) -> PyErr {
    PyOSError::new_err(e.to_string())
}

/// Converts through JSON so records arrive as plain dicts and lists.
fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Mesh", module = "vkfem_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: Arc<Triangulation>,
}

#[pymethods]
impl PyMesh {
    /// Criss-cross triangulation of (-1/2, 1/2)^2 with four triangles.
    #[staticmethod]
    fn square() -> PyResult<Self> {
        let mesh = Triangulation::square_crisscross(0.5).map_err(to_py_err)?;
        Ok(Self { inner: Arc::new(mesh) })
    }

    #[staticmethod]
    #[pyo3(signature = (diagonal = "falling"))]
    fn lshape(diagonal: &str) -> PyResult<Self> {
        let d: LShapeDiagonal = diagonal.parse().map_err(to_py_err)?;
        let mesh = Triangulation::lshape(d).map_err(to_py_err)?;
        Ok(Self { inner: Arc::new(mesh) })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(io_err)?;
        let mesh = Triangulation::read_text(BufReader::new(file)).map_err(to_py_err)?;
        Ok(Self { inner: Arc::new(mesh) })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(io_err)?;
        self.inner.write_text(BufWriter::new(file)).map_err(to_py_err)
    }

    #[pyo3(signature = (times = 1))]
    fn refined(&self, times: usize) -> Self {
        let mut mesh = (*self.inner).clone();
        for _ in 0..times {
            mesh = mesh.red_refine();
        }
        Self { inner: Arc::new(mesh) }
    }

    #[getter]
    fn level(&self) -> usize {
        self.inner.level()
    }

    #[getter]
    fn h_max(&self) -> f64 {
        self.inner.h_max()
    }

    #[getter]
    fn vertices(&self) -> Vec<(f64, f64)> {
        self.inner.vertices().iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles().to_vec()
    }

    #[getter]
    fn edges(&self) -> Vec<[usize; 2]> {
        self.inner.edges().to_vec()
    }

    fn is_boundary_vertex(&self, v: usize) -> PyResult<bool> {
        if v >= self.inner.n_vertices() {
            return Err(PyValueError::new_err(format!("vertex {v} out of range")));
        }
        Ok(self.inner.is_boundary_vertex(v))
    }

    fn statistics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.statistics())
    }

    /// Stiffness matrix of the clamped Morley space as `(rows, cols, values)`.
    fn stiffness(&self) -> PyResult<(Vec<usize>, Vec<usize>, Vec<f64>)> {
        let space = MorleySpace::new(Arc::clone(&self.inner)).map_err(to_py_err)?;
        let a = assemble_stiffness(&space);
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for (r, c, v) in a.iter() {
            out.0.push(r);
            out.1.push(c);
            out.2.push(v);
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(level={}, vertices={}, triangles={})",
            self.inner.level(),
            self.inner.n_vertices(),
            self.inner.n_triangles()
        )
    }
}

#[pyclass(name = "Problem", module = "vkfem_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProblem {
    inner: Problem,
}

#[pymethods]
impl PyProblem {
    /// `example1`, `example2`, `example3` or `lshape`.
    #[staticmethod]
    #[pyo3(signature = (name, diagonal = "falling"))]
    fn preset(name: &str, diagonal: &str) -> PyResult<Self> {
        let preset = name.parse().map_err(to_py_err)?;
        let diagonal = diagonal.parse().map_err(to_py_err)?;
        Ok(Self {
            inner: Problem::preset_with_diagonal(preset, diagonal),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (domain, chi, f = "0"))]
    fn custom(domain: &str, chi: &str, f: &str) -> PyResult<Self> {
        let domain: Domain = domain.parse().map_err(to_py_err)?;
        Ok(Self {
            inner: Problem::custom(domain, chi, f).map_err(to_py_err)?,
        })
    }

    fn scaled(&self, scale: f64) -> Self {
        Self {
            inner: self.inner.with_scaled_obstacle(scale),
        }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn domain(&self) -> String {
        self.inner.domain.to_string()
    }

    #[getter]
    fn chi(&self) -> String {
        self.inner.obstacle.to_string()
    }

    #[getter]
    fn f(&self) -> String {
        self.inner.load.to_string()
    }

    fn obstacle(&self, x: f64, y: f64) -> f64 {
        (self.inner.obstacle_fn())([x, y])
    }

    fn load(&self, x: f64, y: f64) -> f64 {
        (self.inner.load_fn())([x, y])
    }

    fn mesh(&self, level: usize) -> PyResult<PyMesh> {
        let h = self.inner.domain.hierarchy(level).map_err(to_py_err)?;
        let mesh = h.level(level).expect("finest level exists");
        Ok(PyMesh {
            inner: Arc::clone(mesh),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(name={:?}, domain={}, chi={}, f={})",
            self.inner.name, self.inner.domain, self.inner.obstacle, self.inner.load
        )
    }
}

#[pyclass(name = "Solution", module = "vkfem_py", frozen)]
struct PySolution {
    inner: SolveResult,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn status(&self) -> String {
        self.inner.status.to_string()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.status == solver::Status::Converged
    }

    #[getter]
    fn outer_iterations(&self) -> usize {
        self.inner.outer_iterations()
    }

    #[getter]
    fn max_newton_iterations(&self) -> usize {
        self.inner.max_newton_iterations()
    }

    #[getter]
    fn final_change(&self) -> f64 {
        self.inner.final_change()
    }

    /// Morley coefficients of the displacement.
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.inner.u.values().to_vec()
    }

    /// Morley coefficients of the Airy stress function.
    #[getter]
    fn v(&self) -> Vec<f64> {
        self.inner.v.values().to_vec()
    }

    #[getter]
    fn multiplier(&self) -> Vec<f64> {
        self.inner.lambda.values().to_vec()
    }

    /// Displacement at every mesh vertex, zero on the boundary.
    #[getter]
    fn u_vertices(&self) -> Vec<f64> {
        let n = self.inner.u.space().mesh().n_vertices();
        (0..n).map(|p| self.inner.u.vertex_value(p)).collect()
    }

    #[getter]
    fn active_vertices(&self) -> Vec<usize> {
        self.inner.active_vertices()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn mesh(&self) -> PyMesh {
        PyMesh {
            inner: Arc::clone(self.inner.u.space().mesh()),
        }
    }

    fn history<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.history)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(status={}, outer_iterations={}, active={})",
            self.inner.status,
            self.inner.outer_iterations(),
            self.inner.active_set.len()
        )
    }
}

#[pyclass(name = "Study", module = "vkfem_py", frozen)]
struct PyStudy {
    inner: StudyRun,
}

#[pymethods]
impl PyStudy {
    #[getter]
    fn all_converged(&self) -> bool {
        self.inner.report.all_converged()
    }

    fn levels<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.report.levels)
    }

    fn coincidence<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.report.coincidence)
    }

    fn csv(&self) -> PyResult<String> {
        let mut out = Vec::new();
        self.inner.report.write_csv(&mut out).map_err(to_py_err)?;
        String::from_utf8(out).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __str__(&self) -> String {
        self.inner.report.to_string()
    }
}

#[allow(clippy::too_many_arguments)]
fn options(
    problem: &Problem,
    tol_newton: f64,
    tol_pdas: f64,
    max_pdas: usize,
    max_newton: usize,
    quad_degree: Option<usize>,
    convention: &str,
    warm_start_beta: bool,
    detect_cycles: bool,
) -> PyResult<SolverOptions> {
    let convention: ActiveSetConvention = convention.parse().map_err(to_py_err)?;
    Ok(SolverOptions {
        tol_newton,
        tol_pdas,
        max_pdas,
        max_newton,
        quad_degree: quad_degree.unwrap_or_else(|| problem.load_quad_degree()),
        convention,
        warm_start_beta,
        detect_cycles,
    })
}

/// Solves `problem` on refinement level `level`.
#[pyfunction]
#[pyo3(signature = (
    problem, level, *, tol_newton = 1e-7, tol_pdas = 1e-7, max_pdas = 100, max_newton = 50,
    quad_degree = None, convention = "complementary", warm_start_beta = false, detect_cycles = false
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    problem: &PyProblem,
    level: usize,
    tol_newton: f64,
    tol_pdas: f64,
    max_pdas: usize,
    max_newton: usize,
    quad_degree: Option<usize>,
    convention: &str,
    warm_start_beta: bool,
    detect_cycles: bool,
) -> PyResult<PySolution> {
    let p = &problem.inner;
    let opts = options(
        p,
        tol_newton,
        tol_pdas,
        max_pdas,
        max_newton,
        quad_degree,
        convention,
        warm_start_beta,
        detect_cycles,
    )?;
    let result = py
        .detach(|| -> vkfem::Result<SolveResult> {
            let h = p.domain.hierarchy(level)?;
            let space = MorleySpace::new(Arc::clone(h.level(level).expect("finest level exists")))?;
            let spec = ProblemSpec::new(space, p.obstacle_fn(), p.load_fn()).with_options(opts);
            solver::solve(&spec)
        })
        .map_err(to_py_err)?;
    Ok(PySolution { inner: result })
}

/// Solves on levels `0..=levels` (1..=levels on the L-shape) and measures
/// errors against the finest level.
#[pyfunction]
#[pyo3(signature = (
    problem, levels, *, tol_newton = 1e-7, tol_pdas = 1e-7, max_pdas = 100, max_newton = 50,
    quad_degree = None, convention = "complementary"
))]
#[allow(clippy::too_many_arguments)]
fn refinement_study(
    py: Python<'_>,
    problem: &PyProblem,
    levels: usize,
    tol_newton: f64,
    tol_pdas: f64,
    max_pdas: usize,
    max_newton: usize,
    quad_degree: Option<usize>,
    convention: &str,
) -> PyResult<PyStudy> {
    let p = &problem.inner;
    let opts = options(
        p,
        tol_newton,
        tol_pdas,
        max_pdas,
        max_newton,
        quad_degree,
        convention,
        false,
        false,
    )?;
    let run = py
        .detach(|| study::refinement_study(p, levels, &opts))
        .map_err(to_py_err)?;
    Ok(PyStudy { inner: run })
}

/// Experimental orders of convergence; `mode` is `reference` or `successive`.
#[pyfunction]
#[pyo3(signature = (errors, mode = "reference"))]
fn eoc(errors: Vec<f64>, mode: &str) -> PyResult<Vec<f64>> {
    let mode = match mode {
        "reference" => EocMode::Reference,
        "successive" => EocMode::Successive,
        other => return Err(PyValueError::new_err(format!("unknown EOC mode '{other}'"))),
    };
    study::eoc(&errors, mode).map_err(to_py_err)
}

/// Interior vertices of the solution mesh where `u - chi <= tol`.
#[pyfunction]
#[pyo3(signature = (solution, problem, tol = 0.0))]
fn coincidence_set(solution: &PySolution, problem: &PyProblem, tol: f64) -> Vec<usize> {
    let chi = problem.inner.obstacle_fn();
    study::coincidence_set(&solution.inner.u, &*chi, tol)
}

#[pyfunction]
#[pyo3(signature = (problem, grid = 1001))]
fn check_smallness<'py>(py: Python<'py>, problem: &PyProblem, grid: usize) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| study::check_smallness(&problem.inner, grid))
        .map_err(to_py_err)?;
    let out = to_python(py, &report)?;
    out.set_item("violated", report.violated())?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (problem, scales, levels))]
fn obstacle_scaling_sweep<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    scales: Vec<f64>,
    levels: Vec<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let p = &problem.inner;
    let opts = SolverOptions {
        quad_degree: p.load_quad_degree(),
        ..SolverOptions::default()
    };
    let records = py
        .detach(|| study::obstacle_scaling_sweep(p, &scales, &levels, &opts))
        .map_err(to_py_err)?;
    to_python(py, &records)
}

#[pymodule]
fn vkfem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyStudy>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(refinement_study, m)?)?;
    m.add_function(wrap_pyfunction!(eoc, m)?)?;
    m.add_function(wrap_pyfunction!(coincidence_set, m)?)?;
    m.add_function(wrap_pyfunction!(check_smallness, m)?)?;
    m.add_function(wrap_pyfunction!(obstacle_scaling_sweep, m)?)?;
    m.add("SMALLNESS_THRESHOLD", study::SMALLNESS_THRESHOLD)?;
    Ok(())
}
