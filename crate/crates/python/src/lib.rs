//! Python bindings for `linimpact`.

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use linimpact::app::config::{Experiment, PipelineConfig};
use linimpact::kyle::{self, KyleInputs};
use linimpact::propagator::{self, CalibrationProblem, DEFAULT_RIDGE};
use linimpact::scale::{self, CoarsenSpec};
use linimpact::synth::{self, AcfSpec, Seed};
use linimpact::{
    AcfCurve, Error, ErrorClass, ImpactKernel, LagWindow, SampledSeries, SamplingScale, SeriesKind,
    TimeUnit, Unit,
};

create_exception!(pylinimpact, ValidationError, PyValueError);
create_exception!(pylinimpact, NumericalError, PyArithmeticError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Validation => ValidationError::new_err(msg),
        ErrorClass::Numerical => NumericalError::new_err(msg),
        ErrorClass::Io => PyIOError::new_err(msg),
    }
}

fn time_unit(s: &str) -> PyResult<TimeUnit> {
    [
        TimeUnit::Step,
        TimeUnit::Microsecond,
        TimeUnit::Second,
        TimeUnit::Minute,
        TimeUnit::Day,
        TimeUnit::Month,
        TimeUnit::Year,
    ]
    .into_iter()
    .find(|u| u.as_str() == s)
    .ok_or_else(|| ValidationError::new_err(format!("unknown time unit `{s}`")))
}

fn series_kind(s: &str) -> PyResult<SeriesKind> {
    [
        SeriesKind::Price,
        SeriesKind::Flow,
        SeriesKind::Sign,
        SeriesKind::Dividend,
        SeriesKind::Trend,
    ]
    .into_iter()
    .find(|k| k.as_str() == s)
    .ok_or_else(|| ValidationError::new_err(format!("unknown series kind `{s}`")))
}

fn scale_of(value: f64, unit: &str) -> PyResult<SamplingScale> {
    SamplingScale::new(value, time_unit(unit)?).map_err(to_py)
}

/// Uniformly sampled series with a kind and a sampling scale.
#[pyclass(name = "Series", frozen)]
struct PySeries(SampledSeries);

#[pymethods]
impl PySeries {
    #[new]
    #[pyo3(signature = (values, kind = "flow", tau = 1.0, unit = "step", burn_in = 0))]
    fn new(values: Vec<f64>, kind: &str, tau: f64, unit: &str, burn_in: usize) -> PyResult<Self> {
        let s = SampledSeries::new(values, scale_of(tau, unit)?, series_kind(kind)?, Unit::Dimensionless)
            .map_err(to_py)?;
        Ok(Self(s.with_burn_in(burn_in)))
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().as_str()
    }

    /// `(value, unit)` of one sample.
    #[getter]
    fn tau(&self) -> (f64, &'static str) {
        let t = self.0.tau();
        (t.value, t.unit.as_str())
    }

    #[getter]
    fn burn_in(&self) -> usize {
        self.0.burn_in()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Series(kind={}, len={}, tau={})", self.0.kind().as_str(), self.0.len(), self.0.tau())
    }
}

/// Impact kernel `G_0, G_1, ...`.
#[pyclass(name = "Kernel", frozen)]
struct PyKernel(ImpactKernel);

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (values, tau = 1.0, unit = "step"))]
    fn new(values: Vec<f64>, tau: f64, unit: &str) -> PyResult<Self> {
        Ok(Self(ImpactKernel::raw(values, scale_of(tau, unit)?).map_err(to_py)?))
    }

    /// `G_n = scale * decay^n` for n = 0..=max_lag.
    #[staticmethod]
    #[pyo3(signature = (scale, decay, max_lag, tau = 1.0, unit = "step"))]
    fn exponential(scale: f64, decay: f64, max_lag: usize, tau: f64, unit: &str) -> PyResult<Self> {
        Ok(Self(
            ImpactKernel::exponential(scale, decay, max_lag, scale_of(tau, unit)?).map_err(to_py)?,
        ))
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Kernel(len={}, g0={})", self.0.len(), self.0.values[0])
    }
}

#[pyclass(name = "Calibration", frozen, get_all)]
struct PyCalibration {
    kernel: Py<PyKernel>,
    increments: Vec<f64>,
    relative_residual: f64,
    warning: Option<String>,
}

#[pyclass(name = "KyleEquilibrium", frozen, get_all)]
struct PyKyle {
    /// Unit-G_0 kernel.
    kernel: Py<PyKernel>,
    kernel_scale: Option<f64>,
    price_acf: Vec<f64>,
    price_variance_ratio: Option<f64>,
    verification_residual: f64,
}

fn kyle_to_py(py: Python<'_>, eq: kyle::KyleEquilibrium) -> PyResult<PyKyle> {
    Ok(PyKyle {
        kernel: Py::new(py, PyKernel(eq.kernel))?,
        kernel_scale: eq.kernel_scale,
        price_acf: eq.price_acf.values,
        price_variance_ratio: eq.price_variance_ratio,
        verification_residual: eq.verification_residual,
    })
}

/// Gaussian flow with a white, AR(1) or power-law ACF.
#[pyfunction]
#[pyo3(signature = (model, length, seed, variance = 1.0, alpha = 0.9, beta = 0.7, n_terms = 8, lag_range = (1, 1500)))]
#[allow(clippy::too_many_arguments)]
fn generate_flow(
    model: &str,
    length: usize,
    seed: u64,
    variance: f64,
    alpha: f64,
    beta: f64,
    n_terms: usize,
    lag_range: (usize, usize),
) -> PyResult<PySeries> {
    let tau = SamplingScale::step();
    let spec = match model {
        "white" => AcfSpec::white(variance, tau),
        "ar1" => AcfSpec::ar1(variance, alpha, tau),
        "powerlaw" => LagWindow::new(lag_range.0, lag_range.1)
            .and_then(|w| synth::powerlaw_mixture_spec(beta, variance, n_terms, w, tau)),
        other => return Err(ValidationError::new_err(format!("unknown flow model `{other}`"))),
    }
    .map_err(to_py)?;
    Ok(PySeries(synth::generate(&spec, length, Seed(seed)).map_err(to_py)?))
}

#[pyfunction]
fn simulate_market(kernel: PyRef<'_, PyKernel>, flow: PyRef<'_, PySeries>) -> PyResult<PySeries> {
    Ok(PySeries(synth::simulate_market(&kernel.0, &flow.0).map_err(to_py)?))
}

/// Biased sample autocovariance for lags 0..=max_lag.
#[pyfunction]
fn estimate_acf(series: PyRef<'_, PySeries>, max_lag: usize) -> PyResult<Vec<f64>> {
    Ok(linimpact::stats::estimate_acf(&series.0, max_lag).map_err(to_py)?.values)
}

#[pyfunction]
#[pyo3(signature = (prices, flows, max_lag, ridge = DEFAULT_RIDGE))]
fn calibrate(
    py: Python<'_>,
    prices: PyRef<'_, PySeries>,
    flows: PyRef<'_, PySeries>,
    max_lag: usize,
    ridge: f64,
) -> PyResult<PyCalibration> {
    let problem = CalibrationProblem::from_data(&prices.0, &flows.0, max_lag, ridge).map_err(to_py)?;
    let cal = propagator::calibrate(&problem).map_err(to_py)?;
    Ok(PyCalibration {
        kernel: Py::new(py, PyKernel(cal.kernel))?,
        increments: cal.increments,
        relative_residual: cal.relative_residual,
        warning: cal.warning,
    })
}

/// Block sums for flows, block-final values for prices.
#[pyfunction]
fn coarsen(series: PyRef<'_, PySeries>, ratio: usize) -> PyResult<PySeries> {
    let spec = CoarsenSpec::new(ratio).map_err(to_py)?;
    let out = match series.0.kind() {
        SeriesKind::Price => scale::coarsen_price(&series.0, spec),
        SeriesKind::Flow | SeriesKind::Sign => scale::coarsen_flow(&series.0, spec),
        other => {
            return Err(ValidationError::new_err(format!("cannot coarsen a {} series", other.as_str())))
        }
    };
    Ok(PySeries(out.map_err(to_py)?))
}

#[pyfunction]
fn coarsen_kernel(kernel: PyRef<'_, PyKernel>, ratio: usize) -> PyResult<PyKernel> {
    Ok(PyKernel(scale::coarsen_kernel(&kernel.0, ratio).map_err(to_py)?))
}

#[pyfunction]
fn price_variance_ratio(alpha: f64) -> f64 {
    kyle::price_variance_ratio(alpha)
}

/// Closed-form equilibrium for an AR(1) signal and white noise trading.
#[pyfunction]
#[pyo3(signature = (alpha, sigma_it0 = 1.0, omega0 = 1.0, max_lag = 200))]
fn solve_markovian(py: Python<'_>, alpha: f64, sigma_it0: f64, omega0: f64, max_lag: usize) -> PyResult<PyKyle> {
    let eq = kyle::solve_markovian(alpha, sigma_it0, omega0, max_lag, SamplingScale::step()).map_err(to_py)?;
    kyle_to_py(py, eq)
}

/// Equilibrium kernel for tabulated signal and noise-trader ACFs of equal length.
#[pyfunction]
#[pyo3(signature = (sigma_it, omega_nt, max_lag, tol = 1e-3))]
fn solve_kyle(py: Python<'_>, sigma_it: Vec<f64>, omega_nt: Vec<f64>, max_lag: usize, tol: f64) -> PyResult<PyKyle> {
    let tau = SamplingScale::step();
    let inputs = KyleInputs::new(AcfCurve::analytic(sigma_it, tau), AcfCurve::analytic(omega_nt, tau)).map_err(to_py)?;
    kyle_to_py(py, kyle::solve_combo(&inputs, max_lag, tol).map_err(to_py)?)
}

/// `Phi` at the reference horizon: predicted over empirical price variogram.
#[pyfunction]
#[pyo3(signature = (predicted, empirical, reference, unit = "day"))]
fn variance_ratio(
    predicted: PyRef<'_, PySeries>,
    empirical: PyRef<'_, PySeries>,
    reference: f64,
    unit: &str,
) -> PyResult<f64> {
    let report = propagator::variance_ratio(&predicted.0, &empirical.0, reference, time_unit(unit)?).map_err(to_py)?;
    Ok(report.phi_at_reference)
}

/// Run a named experiment; returns its scalars, notes and curve names.
#[pyfunction]
#[pyo3(signature = (name, config_toml = None, seed = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    name: &str,
    config_toml: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = match config_toml {
        Some(text) => PipelineConfig::from_toml_str(text).map_err(to_py)?,
        None => PipelineConfig::default(),
    };
    cfg.experiment = Some(name.parse::<Experiment>().map_err(to_py)?);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let bundle = py.detach(|| linimpact::app::run_experiment(&cfg)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("experiment", &bundle.experiment)?;
    out.set_item("config_hash", &bundle.config_hash)?;
    out.set_item("scalars", bundle.scalars.clone())?;
    out.set_item("notes", bundle.notes.clone())?;
    out.set_item("curves", bundle.curves.iter().map(|c| c.name.clone()).collect::<Vec<_>>())?;
    Ok(out)
}

#[pymodule]
fn pylinimpact(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ValidationError", m.py().get_type::<ValidationError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("DEFAULT_RIDGE", DEFAULT_RIDGE)?;
    m.add_class::<PySeries>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyCalibration>()?;
    m.add_class::<PyKyle>()?;
    m.add_function(wrap_pyfunction!(generate_flow, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_market, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_acf, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(coarsen, m)?)?;
    m.add_function(wrap_pyfunction!(coarsen_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(price_variance_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(solve_markovian, m)?)?;
    m.add_function(wrap_pyfunction!(solve_kyle, m)?)?;
    m.add_function(wrap_pyfunction!(variance_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
