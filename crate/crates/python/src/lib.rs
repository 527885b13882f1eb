//! Python bindings. Arrays cross the boundary as lists of floats.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qsde::returns::{self, DecomposeOptions, Modulation};
use qsde::sde::{self, Observable};
use qsde::spectral::{self, Taper};
use qsde::{Error, Provenance, QGaussianParams, ReturnModelParams, ReturnSeries, SdeParams, SolverConfig, StopRule};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Divergence { .. }
        | Error::Domain(_)
        | Error::TooShort(_)
        | Error::InsufficientBins { .. }
        | Error::ZeroVariance(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn series(values: Vec<f64>, dt: f64) -> PyResult<ReturnSeries> {
    ReturnSeries::new(values, dt, Provenance::Synthetic { seed: 0 }).map_err(py_err)
}

fn sde_params(eta: f64, lambda: f64, epsilon: f64, r0: f64, sigma: f64) -> PyResult<SdeParams> {
    SdeParams::new(eta, lambda, epsilon)
        .and_then(|p| p.with_scale(r0, sigma))
        .map_err(py_err)
}

fn observable(name: &str) -> PyResult<Observable> {
    match name {
        "signed" => Ok(Observable::Signed),
        "abs" => Ok(Observable::Absolute),
        _ => Err(PyValueError::new_err(format!("observable must be 'signed' or 'abs', got '{name}'"))),
    }
}

/// q-exponential `[1 + (1 - q) x]_+^(1 / (1 - q))`.
#[pyfunction]
fn exp_q(x: f64, q: f64) -> PyResult<f64> {
    qsde::exp_q(x, q).map_err(py_err)
}

/// q-Gaussian with tail exponent `lambda` and scale `r0`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct QGaussian {
    inner: QGaussianParams,
}

#[pymethods]
impl QGaussian {
    #[new]
    fn new(lambda: f64, r0: f64) -> PyResult<Self> {
        Ok(Self { inner: QGaussianParams::new(lambda, r0).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_q(q: f64, sigma_q: f64) -> PyResult<Self> {
        Ok(Self { inner: QGaussianParams::from_q(q, sigma_q).map_err(py_err)? })
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.inner.r0
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    #[getter]
    fn sigma_q(&self) -> f64 {
        self.inner.sigma_q()
    }

    fn pdf(&self, x: Vec<f64>) -> Vec<f64> {
        x.into_iter().map(|v| self.inner.pdf(v)).collect()
    }

    fn cdf(&self, x: Vec<f64>) -> Vec<f64> {
        x.into_iter().map(|v| self.inner.cdf(v)).collect()
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        qsde::qgaussian::sample_qgaussian(self.inner, &mut rng, n).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("QGaussian(lambda={}, r0={})", self.inner.lambda, self.inner.r0)
    }
}

/// Simulates the scaled SDE; returns `(times, values, steps)`.
#[pyfunction]
#[pyo3(signature = (eta=2.5, lambda_=3.6, epsilon=0.01, *, kappa=0.01, steps=None, t_end=None, seed=0, burn_in=0, x_init=0.0, reflect_at=None, r0=1.0, sigma=1.0, physical=false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    eta: f64,
    lambda_: f64,
    epsilon: f64,
    kappa: f64,
    steps: Option<u64>,
    t_end: Option<f64>,
    seed: u64,
    burn_in: u64,
    x_init: f64,
    reflect_at: Option<f64>,
    r0: f64,
    sigma: f64,
    physical: bool,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let p = sde_params(eta, lambda_, epsilon, r0, sigma)?;
    let stop = match (steps, t_end) {
        (Some(n), None) => StopRule::Steps(n),
        (None, Some(t)) => StopRule::Time(t),
        (None, None) => StopRule::Steps(100_000),
        _ => return Err(PyValueError::new_err("give either steps or t_end, not both")),
    };
    let cfg = SolverConfig { kappa, burn_in, x_init, seed, stop, reflect_at };
    let traj = py
        .detach(|| {
            let t = sde::simulate(p, &cfg)?;
            if physical {
                sde::rescale(&t, r0, sigma, eta)
            } else {
                Ok(t)
            }
        })
        .map_err(py_err)?;
    Ok((traj.times, traj.values, traj.steps))
}

/// Window averages of length `tau` of the observable (`'signed'` or `'abs'`).
#[pyfunction]
#[pyo3(signature = (tau, n_windows, eta=2.5, lambda_=3.6, epsilon=0.01, *, kappa=0.01, seed=0, burn_in=0, reflect_at=None, observable="abs"))]
#[allow(clippy::too_many_arguments)]
fn simulate_windowed(
    py: Python<'_>,
    tau: f64,
    n_windows: usize,
    eta: f64,
    lambda_: f64,
    epsilon: f64,
    kappa: f64,
    seed: u64,
    burn_in: u64,
    reflect_at: Option<f64>,
    observable: &str,
) -> PyResult<Vec<f64>> {
    let p = sde_params(eta, lambda_, epsilon, 1.0, 1.0)?;
    let obs = self::observable(observable)?;
    let cfg = SolverConfig { kappa, burn_in, seed, reflect_at, ..SolverConfig::default() };
    let s = py
        .detach(|| sde::simulate_windowed(p, &cfg, tau, n_windows, obs))
        .map_err(py_err)?;
    Ok(s.values)
}

/// Averaged periodogram; returns `(freqs, power)`.
#[pyfunction]
#[pyo3(signature = (values, dt=1.0, segment=None, n_segments=4, taper="hann"))]
fn psd(values: Vec<f64>, dt: f64, segment: Option<usize>, n_segments: usize, taper: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let taper = Taper::parse(taper).ok_or_else(|| PyValueError::new_err(format!("unknown taper '{taper}'")))?;
    let s = series(values, dt)?;
    let spec = match segment {
        Some(seg) => spectral::estimate_psd_with_segment(&s, seg, taper),
        None => spectral::estimate_psd(&s, n_segments, taper),
    }
    .map_err(py_err)?;
    Ok((spec.freqs, spec.power))
}

fn spectrum(freqs: Vec<f64>, power: Vec<f64>) -> PyResult<spectral::SpectrumEstimate> {
    if freqs.len() != power.len() {
        return Err(PyValueError::new_err("freqs and power differ in length"));
    }
    Ok(spectral::SpectrumEstimate {
        segment_len: 2 * freqs.len(),
        freqs,
        power,
        n_segments: 1,
        taper: Taper::Hann,
    })
}

/// Power-law fit `S = A f^-beta` over `[f_lo, f_hi]`.
#[pyfunction]
fn fit_power_law(freqs: Vec<f64>, power: Vec<f64>, f_lo: f64, f_hi: f64) -> PyResult<HashMap<&'static str, f64>> {
    let fit = spectral::fit_power_law(&spectrum(freqs, power)?, f_lo, f_hi).map_err(py_err)?;
    Ok(HashMap::from([
        ("beta", fit.exponent),
        ("amplitude", fit.amplitude),
        ("residual", fit.residual),
        ("points", fit.points as f64),
    ]))
}

/// Two-slope fit with a crossover frequency.
#[pyfunction]
#[pyo3(signature = (freqs, power, f_lo, f_hi, bins_per_decade=20))]
fn fit_broken_power_law(
    freqs: Vec<f64>,
    power: Vec<f64>,
    f_lo: f64,
    f_hi: f64,
    bins_per_decade: usize,
) -> PyResult<HashMap<&'static str, f64>> {
    let fit = spectral::fit_broken_power_law(&spectrum(freqs, power)?, f_lo, f_hi, bins_per_decade).map_err(py_err)?;
    Ok(HashMap::from([
        ("low_beta", fit.low_exponent),
        ("high_beta", fit.high_exponent),
        ("crossover", fit.crossover),
        ("residual", fit.residual),
    ]))
}

/// Closed-form `(beta, A)` of the simple SDE spectrum.
#[pyfunction]
#[pyo3(signature = (eta=2.5, lambda_=3.6))]
fn theoretical_spectrum(eta: f64, lambda_: f64) -> PyResult<(f64, f64)> {
    let p = sde_params(eta, lambda_, 0.0, 1.0, 1.0)?;
    let s = spectral::power_law_spectrum(&p).map_err(py_err)?;
    Ok((s.beta, s.amplitude))
}

/// Even-length moving average.
#[pyfunction]
fn moving_average(values: Vec<f64>, n: usize) -> PyResult<Vec<f64>> {
    Ok(spectral::moving_average(&series(values, 1.0)?, n).map_err(py_err)?.values)
}

/// One-minute returns of the composed model; `(returns, background)`.
#[pyfunction]
#[pyo3(signature = (minutes, seed=0, *, eta=2.5, lambda_=3.6, epsilon=0.01, lambda2=5.0, r0_bar=0.2, tau=1e-4, intercept=1.0, slope=2.5, ma_window=60, kappa=0.01, burn_in=1_000_000))]
#[allow(clippy::too_many_arguments)]
fn generate_returns(
    py: Python<'_>,
    minutes: usize,
    seed: u64,
    eta: f64,
    lambda_: f64,
    epsilon: f64,
    lambda2: f64,
    r0_bar: f64,
    tau: f64,
    intercept: f64,
    slope: f64,
    ma_window: usize,
    kappa: f64,
    burn_in: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let params = ReturnModelParams {
        sde: sde_params(eta, lambda_, epsilon, 1.0, 1.0)?,
        lambda2,
        r0_bar,
        tau,
        ma_window,
        modulation: Modulation { intercept, slope },
        kappa,
        burn_in,
    };
    let g = py
        .detach(|| returns::generate_returns_detailed(&params, minutes, seed))
        .map_err(py_err)?;
    Ok((g.returns.values, g.background.values))
}

/// Divides by the sample standard deviation.
#[pyfunction]
fn normalize(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(returns::normalize_returns(&series(values, 1.0)?).map_err(py_err)?.values)
}

/// Per-bin scales and the fitted linear modulation of a return series.
#[pyfunction]
#[pyo3(signature = (values, ma_window=60, lambda2=5.0, bins=20, min_count=1000))]
fn decompose(
    values: Vec<f64>,
    ma_window: usize,
    lambda2: f64,
    bins: usize,
    min_count: usize,
) -> PyResult<(f64, f64, Vec<(f64, f64, usize)>)> {
    let d = returns::decompose_empirical_with(&series(values, 1.0)?, ma_window, lambda2, DecomposeOptions { bins, min_count })
        .map_err(py_err)?;
    let rows = d.bins.iter().map(|b| (b.mean_abs_ma, b.r0, b.count)).collect();
    Ok((d.modulation.intercept, d.modulation.slope, rows))
}

/// Hill estimate over the top `fraction` of `|values|`; `(alpha, k)`.
#[pyfunction]
#[pyo3(signature = (values, fraction=0.001))]
fn hill(values: Vec<f64>, fraction: f64) -> PyResult<(f64, usize)> {
    let h = qsde::tail::hill_top_fraction(&values, fraction).map_err(py_err)?;
    Ok((h.alpha, h.k))
}

#[pymodule]
fn pyqsde(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<QGaussian>()?;
    m.add_function(wrap_pyfunction!(exp_q, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_windowed, m)?)?;
    m.add_function(wrap_pyfunction!(psd, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(fit_broken_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(moving_average, m)?)?;
    m.add_function(wrap_pyfunction!(generate_returns, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(hill, m)?)?;
    Ok(())
}
