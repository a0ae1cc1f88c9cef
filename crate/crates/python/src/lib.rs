//! Python bindings: kernels, field models, sampling, the estimator, the
//! Gaussian-limit harness and the mixing diagnostics.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rfkde::harness;
use rfkde::{config::ConfigFile, mixing, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::Domain(_) | Error::Dimension { .. } | Error::Json(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Parses JSON text with Python's `json` module.
fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyclass(frozen, skip_from_py_object, module = "pyrfkde")]
#[derive(Clone)]
struct Kernel(rfkde::Kernel);

#[pymethods]
impl Kernel {
    /// Built-in family (`uniform`, `triangular`, `epanechnikov`, `quartic`,
    /// `truncated_gaussian`) with an optional support radius.
    #[new]
    #[pyo3(signature = (family, radius=None))]
    fn new(family: &str, radius: Option<f64>) -> PyResult<Self> {
        let mut spec = serde_json::json!({"family": family});
        if let Some(r) = radius {
            spec["radius"] = r.into();
        }
        Self::from_json(&spec.to_string())
    }

    /// Kernel from its JSON config form.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: rfkde::KernelSpec = serde_json::from_str(text).map_err(|e| err(e.into()))?;
        rfkde::Kernel::new(spec).map(Kernel).map_err(err)
    }

    fn __call__(&self, u: f64) -> f64 {
        self.0.evaluate(u)
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.0.radius()
    }

    #[getter]
    fn support(&self) -> (f64, f64) {
        self.0.support()
    }

    fn squared_integral(&self) -> PyResult<f64> {
        self.0.squared_integral().map_err(err)
    }

    fn mass(&self) -> PyResult<f64> {
        self.0.mass().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Kernel({:?}, radius={})", self.0.family(), self.0.radius())
    }
}

#[pyclass(frozen, skip_from_py_object, module = "pyrfkde")]
#[derive(Clone)]
struct FieldModel(rfkde::FieldModel);

#[pymethods]
impl FieldModel {
    #[staticmethod]
    #[pyo3(signature = (mean=0.0, sd=1.0))]
    fn iid_gaussian(mean: f64, sd: f64) -> PyResult<Self> {
        Self::from_json(&serde_json::json!({"variant": "iid_gaussian", "parameters": {"mean": mean, "sd": sd}}).to_string())
    }

    #[staticmethod]
    #[pyo3(signature = (a=0.0, b=1.0))]
    fn iid_uniform(a: f64, b: f64) -> PyResult<Self> {
        Self::from_json(&serde_json::json!({"variant": "iid_uniform", "parameters": {"a": a, "b": b}}).to_string())
    }

    #[staticmethod]
    #[pyo3(signature = (scale=1.0))]
    fn iid_laplace(scale: f64) -> PyResult<Self> {
        Self::from_json(&serde_json::json!({"variant": "iid_laplace", "parameters": {"scale": scale}}).to_string())
    }

    /// Moving average with constant coefficient `value` on `{-radius..radius}^d`.
    #[staticmethod]
    #[pyo3(signature = (d, radius, value=1.0, sd=1.0))]
    fn moving_average(d: usize, radius: i64, value: f64, sd: f64) -> PyResult<Self> {
        rfkde::MovingAverage::constant(d, radius, value, sd)
            .map(|ma| FieldModel(rfkde::FieldModel::MovingAverageGaussian(ma)))
            .map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(FieldModel).map_err(|e| err(e.into()))
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }

    fn marginal_density(&self, x: f64) -> f64 {
        self.0.marginal_density(x)
    }

    fn marginal_variance(&self) -> f64 {
        self.0.marginal_variance()
    }

    fn covariance(&self, lag: Vec<i64>) -> f64 {
        self.0.covariance(&lag)
    }

    #[getter]
    fn dependence_radius(&self) -> u64 {
        self.0.dependence_radius()
    }

    fn __repr__(&self) -> PyResult<String> {
        Ok(format!("FieldModel({})", to_json(&self.0)?))
    }
}

#[pyclass(frozen, skip_from_py_object, module = "pyrfkde")]
#[derive(Clone, Copy)]
struct LatticeWindow(rfkde::LatticeWindow);

#[pymethods]
impl LatticeWindow {
    #[new]
    fn new(d: usize, n: usize) -> PyResult<Self> {
        rfkde::LatticeWindow::new(d, n).map(LatticeWindow).map_err(err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    fn site_count(&self) -> usize {
        self.0.site_count()
    }

    /// 1-based coordinates of the `k`-th site in lexicographic order.
    fn site(&self, k: usize) -> PyResult<Vec<i64>> {
        if k >= self.0.site_count() {
            return Err(PyValueError::new_err(format!("site index {k} out of range")));
        }
        Ok(self.0.site(k))
    }

    fn __repr__(&self) -> String {
        format!("LatticeWindow(d={}, n={})", self.0.d, self.0.n)
    }
}

#[pyclass(frozen, module = "pyrfkde")]
struct FieldSample(rfkde::FieldSample);

#[pymethods]
impl FieldSample {
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn window(&self) -> LatticeWindow {
        LatticeWindow(*self.0.window())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    fn value_at(&self, site: Vec<i64>) -> Option<f64> {
        self.0.value_at(&site)
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }
}

#[pyclass(frozen, skip_from_py_object, module = "pyrfkde")]
#[derive(Clone)]
struct MixingSequence(rfkde::MixingSequence);

#[pymethods]
impl MixingSequence {
    #[staticmethod]
    fn power_law(c: f64, q: f64) -> PyResult<Self> {
        rfkde::MixingSequence::power_law(c, q).map(MixingSequence).map_err(err)
    }

    #[staticmethod]
    fn exponential(c: f64, rho: f64) -> PyResult<Self> {
        rfkde::MixingSequence::exponential(c, rho).map(MixingSequence).map_err(err)
    }

    #[staticmethod]
    fn finite(values: Vec<f64>) -> PyResult<Self> {
        rfkde::MixingSequence::finite(values).map(MixingSequence).map_err(err)
    }

    #[staticmethod]
    fn zero() -> Self {
        MixingSequence(rfkde::MixingSequence::zero())
    }

    fn alpha(&self, m: u64) -> f64 {
        self.0.alpha(m)
    }

    /// `(verdict, partial_sum, tail_bound)` for `sum_m m^(2d-1) alpha(m)`.
    fn series_condition(&self, d: u32) -> PyResult<(String, f64, f64)> {
        let r = mixing::series_condition(&self.0, d);
        Ok((to_json(&r.verdict)?.trim_matches('"').to_string(), r.partial_sum, r.tail_bound))
    }

    /// `(value, remainder_bound)` of `psi(m)`.
    fn psi_tail(&self, d: u32, m: u64) -> PyResult<(f64, f64)> {
        mixing::psi_tail(&self.0, d, m).map(|t| (t.value, t.remainder_bound)).map_err(err)
    }

    fn m_n(&self, d: u32, b: f64) -> PyResult<u64> {
        mixing::m_n(&self.0, d, b).map_err(err)
    }

    /// Rows of `(n, m_n, m_n^d, m_n^d b_n, psi(m_n)/(m_n^d b_n))` for `b_n = c (n^d)^(-beta)`.
    fn lemma2_limits(&self, d: u32, c: f64, beta: f64, n_grid: Vec<u64>) -> PyResult<Vec<(u64, u64, f64, f64, f64)>> {
        let sched = rfkde::BandwidthSchedule::new(c, beta, d).map_err(err)?;
        let t = mixing::lemma2_limits(&self.0, &sched, &n_grid).map_err(err)?;
        Ok(t.rows.iter().map(|r| (r.n, r.m_n, r.m_n_pow_d, r.m_n_pow_d_b_n, r.psi_over)).collect())
    }
}

/// Draws a realization of `model` on `window`.
#[pyfunction]
fn sample(model: &FieldModel, window: &LatticeWindow, seed: u64) -> PyResult<FieldSample> {
    rfkde::sample(&model.0, &window.0, seed).map(FieldSample).map_err(err)
}

/// `f_n` at each point.
#[pyfunction]
fn density_estimate(sample: &FieldSample, kernel: &Kernel, b: f64, points: Vec<f64>) -> PyResult<Vec<f64>> {
    rfkde::density_estimate(&sample.0, &kernel.0, b, &points).map(|e| e.values).map_err(err)
}

/// Reference double-loop evaluator.
#[pyfunction]
fn naive_density_estimate(values: Vec<f64>, kernel: &Kernel, b: f64, points: Vec<f64>) -> Vec<f64> {
    rfkde::naive_density_estimate(&values, &kernel.0, b, &points)
}

#[pyfunction]
fn expected_estimate(model: &FieldModel, kernel: &Kernel, b: f64, x: f64) -> PyResult<f64> {
    rfkde::expected_estimate(&model.0, &kernel.0, b, x).map_err(err)
}

#[pyfunction]
fn bias(model: &FieldModel, kernel: &Kernel, b: f64, x: f64) -> PyResult<f64> {
    rfkde::bias(&model.0, &kernel.0, b, x).map_err(err)
}

#[pyfunction]
fn limit_variance(model: &FieldModel, kernel: &Kernel, x: f64) -> PyResult<f64> {
    rfkde::limit_variance(&model.0, &kernel.0, x).map_err(err)
}

#[pyfunction]
fn centered_scaled(sample: &FieldSample, model: &FieldModel, kernel: &Kernel, b: f64, points: Vec<f64>) -> PyResult<Vec<f64>> {
    rfkde::centered_scaled(&sample.0, &model.0, &kernel.0, b, &points).map_err(err)
}

#[pyfunction]
fn fluctuation_terms(sample: &FieldSample, model: &FieldModel, kernel: &Kernel, b: f64, x: f64, y: f64, lambda1: f64, lambda2: f64) -> PyResult<Vec<f64>> {
    let spec = rfkde::FluctuationSpec::new(x, y, lambda1, lambda2).map_err(err)?;
    rfkde::fluctuation_terms(&sample.0, &model.0, &kernel.0, b, &spec).map_err(err)
}

#[pyfunction]
fn eta(model: &FieldModel, kernel: &Kernel, x: f64, y: f64, lambda1: f64, lambda2: f64) -> PyResult<f64> {
    let spec = rfkde::FluctuationSpec::new(x, y, lambda1, lambda2).map_err(err)?;
    rfkde::eta(&model.0, &kernel.0, &spec).map_err(err)
}

#[pyfunction]
fn normal_cdf(z: f64) -> f64 {
    harness::normal_cdf(z)
}

/// `(distance, p_value)` of the KS test against `N(0, variance)`.
#[pyfunction]
fn ks_test(samples: Vec<f64>, variance: f64) -> PyResult<(f64, f64)> {
    harness::ks_test(&samples, variance).map(|k| (k.distance, k.p_value)).map_err(err)
}

/// `(estimate, passed)` of the variance check.
#[pyfunction]
fn variance_check(samples: Vec<f64>, target: f64, rel_tol: f64) -> PyResult<(f64, bool)> {
    harness::variance_check(&samples, target, rel_tol).map(|v| (v.estimate, v.passed)).map_err(err)
}

/// Runs the replicate experiment in `config_json` and returns its report as a dict.
#[pyfunction]
#[pyo3(signature = (config_json, threads=None))]
fn run_clt<'py>(py: Python<'py>, config_json: &str, threads: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ConfigFile::from_json(config_json).map_err(err)?;
    let exp = cfg.experiment().map_err(err)?;
    let (report, _) = py
        .detach(|| harness::with_threads(threads, || harness::run_clt(&exp)))
        .map_err(err)?
        .map_err(err)?;
    Ok(from_json(py, &to_json(&report)?)?.cast_into::<PyDict>()?)
}

/// Replicate matrix `T_r(x_j)` as a list of rows.
#[pyfunction]
#[pyo3(signature = (config_json, threads=None))]
fn run_replicates(py: Python<'_>, config_json: &str, threads: Option<usize>) -> PyResult<Vec<Vec<f64>>> {
    let cfg = ConfigFile::from_json(config_json).map_err(err)?;
    let exp = cfg.experiment().map_err(err)?;
    let reps = py
        .detach(|| harness::with_threads(threads, || harness::run_replicates(&exp)))
        .map_err(err)?
        .map_err(err)?;
    Ok((0..reps.matrix.rows).map(|r| reps.matrix.row(r).to_vec()).collect())
}

#[pymodule]
fn pyrfkde(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Kernel>()?;
    m.add_class::<FieldModel>()?;
    m.add_class::<LatticeWindow>()?;
    m.add_class::<FieldSample>()?;
    m.add_class::<MixingSequence>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(density_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(naive_density_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(expected_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(bias, m)?)?;
    m.add_function(wrap_pyfunction!(limit_variance, m)?)?;
    m.add_function(wrap_pyfunction!(centered_scaled, m)?)?;
    m.add_function(wrap_pyfunction!(fluctuation_terms, m)?)?;
    m.add_function(wrap_pyfunction!(eta, m)?)?;
    m.add_function(wrap_pyfunction!(normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(ks_test, m)?)?;
    m.add_function(wrap_pyfunction!(variance_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_clt, m)?)?;
    m.add_function(wrap_pyfunction!(run_replicates, m)?)?;
    Ok(())
}
