//! Python module `mtdc_opf`: load cases, solve, verify, compare and dump.
//!
//! Reports and states cross the boundary as JSON text; the classes here expose
//! the headline numbers as attributes so small scripts need not parse it.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use mtdc_opf::case_file::{load_case, parse_case, serialize_case};
use mtdc_opf::matrices::{dump_coefficients, CoefficientSet};
use mtdc_opf::network::normalize_wind;
use mtdc_opf::pipeline::Outcome;
use mtdc_opf::recovery::RecoveredState;
use mtdc_opf::relaxation::{assemble, dump_problem};
use mtdc_opf::report::{Comparison, SolveReport};
use mtdc_opf::verifier::{brute_force_opf, check_shape, verify, ResidualReport, DEFAULT_TOLERANCE};
use mtdc_opf::{solve_case, Error, NetworkCase, PipelineOptions};

create_exception!(mtdc_opf, SolverError, PyException);
create_exception!(mtdc_opf, RecoveryError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) => SolverError::new_err(e.to_string()),
        Error::Recovery(_) => RecoveryError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A validated network case, per-unit on its own power base.
#[pyclass(name = "Case", frozen)]
struct PyCase {
    inner: NetworkCase,
}

#[pymethods]
impl PyCase {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_case(path).map(|inner| PyCase { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_case(text).map(|inner| PyCase { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        serialize_case(&self.inner)
    }

    fn rebase(&self, base_mva: f64) -> PyResult<Self> {
        if !(base_mva > 0.0 && base_mva.is_finite()) {
            return Err(PyValueError::new_err("base_mva must be positive"));
        }
        Ok(PyCase {
            inner: self.inner.rebase(base_mva),
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn base_mva(&self) -> f64 {
        self.inner.base_mva
    }

    #[getter]
    fn n_ac(&self) -> usize {
        self.inner.n_ac()
    }

    #[getter]
    fn n_dc(&self) -> usize {
        self.inner.n_dc()
    }

    fn __repr__(&self) -> String {
        format!(
            "Case({:?}, {} AC buses, {} DC buses, base {} MVA)",
            self.inner.name,
            self.inner.n_ac(),
            self.inner.n_dc(),
            self.inner.base_mva
        )
    }
}

#[pyclass(name = "SolveReport", frozen)]
struct PyReport {
    inner: SolveReport,
}

#[pymethods]
impl PyReport {
    /// `verified`, `not_optimal`, `recovery_failed` or `verification_failed`.
    #[getter]
    fn outcome(&self) -> &'static str {
        match self.inner.outcome {
            Outcome::Verified => "verified",
            Outcome::NotOptimal(_) => "not_optimal",
            Outcome::RecoveryFailed(_) => "recovery_failed",
            Outcome::VerificationFailed => "verification_failed",
        }
    }

    #[getter]
    fn verified(&self) -> bool {
        self.inner.outcome == Outcome::Verified
    }

    #[getter]
    fn status(&self) -> String {
        self.inner.solver.status.to_string()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.solver.iterations
    }

    #[getter]
    fn relative_gap(&self) -> f64 {
        self.inner.solver.relative_gap
    }

    #[getter]
    fn total_cost(&self) -> Option<f64> {
        self.inner.total_cost
    }

    #[getter]
    fn ac_loss_mw(&self) -> Option<f64> {
        self.inner.ac_loss_mw
    }

    #[getter]
    fn dc_loss_mw(&self) -> Option<f64> {
        self.inner.dc_loss_mw
    }

    /// lambda1 / lambda2 of the AC voltage matrix.
    #[getter]
    fn ac_eigen_ratio(&self) -> Option<f64> {
        self.inner.ac_rank.as_ref().map(|d| d.ratio_12)
    }

    #[getter]
    fn dc_eigen_ratio(&self) -> Option<f64> {
        self.inner.dc_rank.as_ref().map(|d| d.ratio_12)
    }

    /// `(from, to)` bus ids of DC lines within 1% of their limit.
    #[getter]
    fn binding_dc_lines(&self) -> Vec<(usize, usize)> {
        self.inner.binding_dc_lines().map(|l| (l.from, l.to)).collect()
    }

    /// Recovered state as JSON, accepted by `verify`; `None` if recovery failed.
    fn state_json(&self) -> PyResult<Option<String>> {
        self.inner.state.as_ref().map(json).transpose()
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.inner)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("SolveReport({:?}, {})", self.inner.case.name, self.outcome())
    }
}

#[pyclass(name = "Verification", frozen)]
struct PyVerification {
    inner: ResidualReport,
}

#[pymethods]
impl PyVerification {
    #[getter]
    fn passed(&self) -> bool {
        self.inner.pass
    }

    #[getter]
    fn max_residual(&self) -> f64 {
        self.inner.max_residual
    }

    /// One `"<kind> <subject>"` string per bound violation.
    #[getter]
    fn violations(&self) -> Vec<String> {
        self.inner
            .violations
            .iter()
            .map(|v| format!("{:?} {}", v.kind, v.subject))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Verification(passed={}, max_residual={:.3e})",
            self.inner.pass, self.inner.max_residual
        )
    }
}

#[pyfunction]
#[pyo3(signature = (case, gap_tol=None, feas_tol=None, rank_threshold=None, max_iter=None))]
fn solve(
    py: Python<'_>,
    case: &PyCase,
    gap_tol: Option<f64>,
    feas_tol: Option<f64>,
    rank_threshold: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<PyReport> {
    let mut opts = PipelineOptions::default();
    if let Some(v) = gap_tol {
        opts.solver.gap_tol = v;
    }
    if let Some(v) = feas_tol {
        opts.solver.feas_tol = v;
    }
    if let Some(v) = rank_threshold {
        opts.rank_threshold = v;
    }
    if let Some(v) = max_iter {
        opts.solver.max_iter = v;
    }
    let c = case.inner.clone();
    let out = py.detach(move || solve_case(&c, &opts)).map_err(py_err)?;
    Ok(PyReport {
        inner: SolveReport::new(&out),
    })
}

/// Re-check a state (bare, or a full report carrying one) against a case.
#[pyfunction]
#[pyo3(signature = (case, state_json, tol=DEFAULT_TOLERANCE))]
fn verify_state(case: &PyCase, state_json: &str, tol: f64) -> PyResult<PyVerification> {
    let value: serde_json::Value =
        serde_json::from_str(state_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let value = match value.get("state") {
        Some(s) => s.clone(),
        None => value,
    };
    let state: RecoveredState =
        serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let c = normalize_wind(&case.inner).map_err(py_err)?;
    check_shape(&c, &state).map_err(py_err)?;
    Ok(PyVerification {
        inner: verify(&c, &state, tol),
    })
}

/// Cost and loss comparison as JSON, or `None` if either side has no state.
#[pyfunction]
fn compare(base: &PyReport, other: &PyReport) -> PyResult<Option<String>> {
    Comparison::new(&base.inner, &other.inner).as_ref().map(json).transpose()
}

#[pyfunction]
fn dump_problem_text(case: &PyCase) -> PyResult<String> {
    let c = normalize_wind(&case.inner).map_err(py_err)?;
    Ok(dump_problem(&assemble(&c).map_err(py_err)?))
}

#[pyfunction]
fn dump_matrices_text(case: &PyCase) -> PyResult<String> {
    let c = normalize_wind(&case.inner).map_err(py_err)?;
    Ok(dump_coefficients(&c, &CoefficientSet::build(&c)))
}

/// Brute-force objective for a small case (at most three buses per network).
#[pyfunction]
#[pyo3(signature = (case, resolution=9, seed=None))]
fn oracle_objective(py: Python<'_>, case: &PyCase, resolution: usize, seed: Option<u64>) -> PyResult<f64> {
    let c = normalize_wind(&case.inner).map_err(py_err)?;
    py.detach(move || brute_force_opf(&c, resolution, seed))
        .map(|r| r.objective)
        .map_err(py_err)
}

#[pymodule(name = "mtdc_opf")]
pub fn mtdc_opf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCase>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyVerification>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(verify_state, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(dump_problem_text, m)?)?;
    m.add_function(wrap_pyfunction!(dump_matrices_text, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_objective, m)?)?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add("RecoveryError", m.py().get_type::<RecoveryError>())?;
    Ok(())
}
