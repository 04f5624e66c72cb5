//! Python bindings for the qsmooth core.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qsmooth::hardy::{self, DetectorOutcome};
use qsmooth::linalg::{CMatrix, C64};
use qsmooth::magnetometer::{self, MagnetometerConfig};
use qsmooth::regress::{regression_suite, run_criteria, SuiteOptions};
use qsmooth::weakmeas::{self, WeakMeasConfig};
use qsmooth::wigner;

fn to_py(e: qsmooth::Error) -> PyErr {
    if e.is_numeric() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<C64>>) -> PyResult<CMatrix> {
    CMatrix::from_rows(&rows).map_err(to_py)
}

fn outcome(s: &str) -> PyResult<DetectorOutcome> {
    s.parse().map_err(to_py)
}

/// Outcome probabilities of the Hardy interferometer, keyed by outcome plus "annihilation".
#[pyfunction]
fn hardy_probabilities(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let p = hardy::outcome_probabilities().map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("annihilation", p.annihilation)?;
    for o in &p.outcomes {
        d.set_item(o.outcome.to_string(), o.joint)?;
    }
    Ok(d)
}

/// Smoothing table h₂ for a detector outcome, its position marginal and MAP path.
#[pyfunction]
fn hardy_smoothing(outcome_label: &str) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, (usize, usize))> {
    let r = hardy::smoothing_table(outcome(outcome_label)?).map_err(to_py)?;
    Ok((r.table.values, r.position_marginal, r.map_position))
}

/// True when every paradox assertion holds.
#[pyfunction]
fn hardy_paradox_holds() -> PyResult<bool> {
    Ok(hardy::paradox_report().map_err(to_py)?.all_passed())
}

/// Feynman–Wootters table of an operator on a prime dimension.
#[pyfunction]
fn fw_wigner(rho: Vec<Vec<C64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix(rho)?;
    let n = m.dim();
    Ok(wigner::fw_wigner(&m, n).map_err(to_py)?.values)
}

/// Bounded Hannay–Berry table on the doubled 2N lattice.
#[pyfunction]
fn hb_wigner(rho: Vec<Vec<C64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix(rho)?;
    let n = m.dim();
    Ok(wigner::hb_wigner(&m, n).map_err(to_py)?.values)
}

/// Magnetometer jump kernel J(πk/N), k = 0..2N−1.
#[pyfunction]
fn jump_kernel(n: usize, kappa: f64) -> Vec<f64> {
    magnetometer::jump_kernel_table(n, kappa).values
}

/// Residual of the weak-measurement convolution identity for the pair (f, g).
#[pyfunction]
fn weak_convolution_residual(f: Vec<Vec<C64>>, g: Vec<Vec<C64>>, eps: f64) -> PyResult<f64> {
    let (f, g) = (matrix(f)?, matrix(g)?);
    let cfg = WeakMeasConfig::new(f.dim(), eps).map_err(to_py)?;
    weakmeas::convolution_identity_check(&f, &g, &cfg).map_err(to_py)
}

/// Default magnetometer configuration as JSON.
#[pyfunction]
fn magnetometer_default_config() -> PyResult<String> {
    serde_json::to_string(&MagnetometerConfig::benchmark_default()).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Filter versus smoother benchmark; takes and returns JSON.
#[pyfunction]
#[pyo3(signature = (config_json, seed = 0))]
fn magnetometer_benchmark(py: Python<'_>, config_json: &str, seed: u64) -> PyResult<String> {
    let cfg: MagnetometerConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let s = py.detach(|| magnetometer::benchmark(&cfg, seed)).map_err(to_py)?;
    serde_json::to_string(&s).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs acceptance criteria; returns (id, name, passed, detail) per criterion.
#[pyfunction]
#[pyo3(signature = (ids = None, fault_f2 = 0.0))]
fn regress(py: Python<'_>, ids: Option<Vec<u32>>, fault_f2: f64) -> Vec<(u32, String, bool, String)> {
    let opts = SuiteOptions {
        hardy_f2_perturbation: fault_f2,
    };
    let report = py.detach(|| match ids {
        Some(ids) => run_criteria(&ids, &opts),
        None => regression_suite(&opts),
    });
    report
        .criteria
        .into_iter()
        .map(|c| (c.id, c.name, c.passed, c.detail))
        .collect()
}

#[pymodule]
fn qsmooth_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(hardy_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(hardy_smoothing, m)?)?;
    m.add_function(wrap_pyfunction!(hardy_paradox_holds, m)?)?;
    m.add_function(wrap_pyfunction!(fw_wigner, m)?)?;
    m.add_function(wrap_pyfunction!(hb_wigner, m)?)?;
    m.add_function(wrap_pyfunction!(jump_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(weak_convolution_residual, m)?)?;
    m.add_function(wrap_pyfunction!(magnetometer_default_config, m)?)?;
    m.add_function(wrap_pyfunction!(magnetometer_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(regress, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_and_smoothing_reach_the_core() {
        let j = jump_kernel(3, 0.4);
        assert_eq!(j.len(), 6);
        let (table, marginal, _) = hardy_smoothing("DD").unwrap();
        assert_eq!(table.len(), 4);
        assert!((marginal.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(hardy_smoothing("XY").is_err());
    }

    #[test]
    fn wigner_tables_sum_to_trace() {
        let rho = vec![vec![C64::new(0.5, 0.0), C64::new(0.0, 0.5)], vec![C64::new(0.0, -0.5), C64::new(0.5, 0.0)]];
        let w = fw_wigner(rho.clone()).unwrap();
        assert!((w.iter().flatten().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(hb_wigner(rho).unwrap().len(), 4);
    }
}
