//! Python bindings for `rhodium_core`.
//!
//! Parameter records are exposed as classes; results that are plain records
//! (Bragg solutions, fit results) come back as dictionaries.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rhodium_core::beat::{self as core_beat, BeatKernel};
use rhodium_core::constants::{self as consts, RhodiumParams};
use rhodium_core::fields;
use rhodium_core::fitting::{self as core_fit, FitConfig, FitParam};
use rhodium_core::io as core_io;
use rhodium_core::lamb_moessbauer::{self as lm, DisplacementEnsemble, DisplacementModel, Interpretation};
use rhodium_core::lattice::{self, LatticeSpec, TriGammaGeometry};
use rhodium_core::spectra::{self as core_spectra, Binning, Channel};
use rhodium_core::{special, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(inner) => PyOSError::new_err(inner.to_string()),
        Error::Quadrature(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for rhodium_core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Parses a JSON document with Python's `json` module.
fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "BeatParams", module = "rhodium", skip_from_py_object)]
#[derive(Clone)]
struct PyBeatParams {
    inner: core_beat::BeatParams,
}

#[pymethods]
impl PyBeatParams {
    #[new]
    #[pyo3(signature = (n0, tau0, tau_d, phi0, t_pump, background = 0.0))]
    fn new(n0: f64, tau0: f64, tau_d: f64, phi0: f64, t_pump: f64, background: f64) -> PyResult<Self> {
        let inner = core_beat::BeatParams { n0, tau0, tau_d, phi0, t_pump, background };
        inner.validate().py_err()?;
        Ok(Self { inner })
    }

    #[getter]
    fn n0(&self) -> f64 {
        self.inner.n0
    }
    #[getter]
    fn tau0(&self) -> f64 {
        self.inner.tau0
    }
    #[getter]
    fn tau_d(&self) -> f64 {
        self.inner.tau_d
    }
    #[getter]
    fn phi0(&self) -> f64 {
        self.inner.phi0
    }
    #[getter]
    fn t_pump(&self) -> f64 {
        self.inner.t_pump
    }
    #[getter]
    fn background(&self) -> f64 {
        self.inner.background
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "BeatParams(n0={}, tau0={}, tau_d={}, phi0={}, t_pump={}, background={})",
            p.n0, p.tau0, p.tau_d, p.phi0, p.t_pump, p.background
        )
    }
}

#[pyclass(name = "Geometry", module = "rhodium", skip_from_py_object)]
struct PyGeometry {
    inner: TriGammaGeometry,
}

#[pymethods]
impl PyGeometry {
    /// Tri-gamma cone with wavenumber `k` (1/m) and half-angle `theta` (rad).
    #[new]
    #[pyo3(signature = (k, theta, azimuth_offset = 0.0))]
    fn new(k: f64, theta: f64, azimuth_offset: f64) -> PyResult<Self> {
        Ok(Self { inner: TriGammaGeometry::with_azimuth(k, theta, azimuth_offset).py_err()? })
    }

    /// Bragg-matched cone for a gamma energy (eV) in an fcc lattice channel.
    #[staticmethod]
    #[pyo3(signature = (gamma_energy = consts::RH_GAMMA_ENERGY_EV, lattice_constant = consts::RH_LATTICE_CONSTANT_M, channel_axis = [1, 1, 1], candidate = 0))]
    fn bragg(gamma_energy: f64, lattice_constant: f64, channel_axis: [i32; 3], candidate: usize) -> PyResult<Self> {
        let k = consts::photon_wavenumber(gamma_energy).py_err()?;
        let spec = LatticeSpec::new(lattice_constant, channel_axis, 4).py_err()?;
        let found = lattice::bragg_angle_solve(k, &spec).py_err()?;
        let chosen = found
            .get(candidate)
            .ok_or_else(|| PyValueError::new_err(format!("candidate {candidate} out of range ({} found)", found.len())))?;
        Ok(Self { inner: chosen.geometry(k).py_err()? })
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k_mag
    }
    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }
    #[getter]
    fn azimuth_offset(&self) -> f64 {
        self.inner.azimuth_offset
    }
    #[getter]
    fn k_vectors(&self) -> Vec<[f64; 3]> {
        self.inner.k_vectors.iter().map(|v| [v.x, v.y, v.z]).collect()
    }

    /// Complex E field at `r` (m, working frame).
    fn electric_field(&self, r: [f64; 3]) -> Vec<num_complex::Complex64> {
        fields::evaluate_e(&self.inner, &r.into()).iter().copied().collect()
    }

    fn __repr__(&self) -> String {
        format!("Geometry(k={}, theta={}, azimuth_offset={})", self.inner.k_mag, self.inner.theta, self.inner.azimuth_offset)
    }
}

#[pyclass(name = "CountSeries", module = "rhodium", skip_from_py_object)]
#[derive(Clone)]
struct PyCountSeries {
    inner: core_spectra::CountSeries,
}

#[pymethods]
impl PyCountSeries {
    #[new]
    fn new(channel: &str, t_start: Vec<f64>, width: Vec<f64>, counts: Vec<u64>) -> PyResult<Self> {
        if t_start.len() != width.len() || width.len() != counts.len() {
            return Err(PyValueError::new_err("t_start, width and counts must have equal length"));
        }
        let channel: Channel = channel.parse().py_err()?;
        let bins = t_start
            .into_iter()
            .zip(width)
            .zip(counts)
            .map(|((t_start, width), counts)| core_spectra::Bin { t_start, width, counts })
            .collect();
        Ok(Self { inner: core_spectra::CountSeries::new(channel, bins).py_err()? })
    }

    #[staticmethod]
    fn read_csv(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { inner: core_io::read_count_series(&path).py_err()? })
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        core_io::write_count_series(&self.inner, &path).py_err()
    }

    #[getter]
    fn channel(&self) -> String {
        self.inner.channel.to_string()
    }
    #[getter]
    fn t_start(&self) -> Vec<f64> {
        self.inner.bins.iter().map(|b| b.t_start).collect()
    }
    #[getter]
    fn width(&self) -> Vec<f64> {
        self.inner.bins.iter().map(|b| b.width).collect()
    }
    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.bins.iter().map(|b| b.counts).collect()
    }

    fn rebin(&self, factor: usize) -> PyResult<Self> {
        Ok(Self { inner: core_spectra::rebin(&self.inner, factor).py_err()? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "RatioSeries", module = "rhodium", skip_from_py_object)]
struct PyRatioSeries {
    inner: core_spectra::RatioSeries,
}

#[pymethods]
impl PyRatioSeries {
    #[getter]
    fn ratio(&self) -> Vec<f64> {
        self.inner.bins.iter().map(|b| b.ratio).collect()
    }
    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.inner.bins.iter().map(|b| b.sigma).collect()
    }
    #[getter]
    fn valid(&self) -> Vec<bool> {
        self.inner.bins.iter().map(|b| b.valid).collect()
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        core_io::write_ratio_series(&self.inner, &path).py_err()
    }

    fn __len__(&self) -> usize {
        self.inner.bins.len()
    }
}

/// Linewidth, Doppler speed, strain rate and beat time constant for the default sample.
#[pyfunction]
#[pyo3(signature = (f_lm = 0.5, xi = 50e-6))]
fn estimates<'py>(py: Python<'py>, f_lm: f64, xi: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = RhodiumParams::default();
    let d = PyDict::new(py);
    let td = core_beat::tau_d(p.tau0, f_lm, p.default_mu_nuclear(), xi).py_err()?;
    d.set_item("linewidth_ev", consts::natural_linewidth(p.tau0).py_err()?)?;
    d.set_item("doppler_speed_m_per_s", consts::doppler_speed_per_linewidth(&p).py_err()?)?;
    d.set_item("strain_rate_per_s", consts::thermal_strain_rate(&p).py_err()?)?;
    d.set_item("tau_d_s", td)?;
    d.set_item("tau_d_over_tau0", td / p.tau0)?;
    Ok(d)
}

#[pyfunction]
fn tau_d(tau0: f64, f_lm: f64, mu_n: f64, xi: f64) -> PyResult<f64> {
    core_beat::tau_d(tau0, f_lm, mu_n, xi).py_err()
}

#[pyfunction]
fn bessel_j0(x: f64) -> f64 {
    special::bessel_j0(x)
}

#[pyfunction]
fn bessel_j0_asymptotic(x: f64) -> PyResult<f64> {
    special::bessel_j0_asymptotic(x).py_err()
}

/// Bragg solutions as dictionaries sorted by cone angle.
#[pyfunction]
#[pyo3(signature = (gamma_energy = consts::RH_GAMMA_ENERGY_EV, lattice_constant = consts::RH_LATTICE_CONSTANT_M, channel_axis = [1, 1, 1], g_shell_cutoff = 4))]
fn bragg_angle_solve<'py>(
    py: Python<'py>,
    gamma_energy: f64,
    lattice_constant: f64,
    channel_axis: [i32; 3],
    g_shell_cutoff: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let k = consts::photon_wavenumber(gamma_energy).py_err()?;
    let spec = LatticeSpec::new(lattice_constant, channel_axis, g_shell_cutoff).py_err()?;
    json_to_py(py, &lattice::bragg_angle_solve(k, &spec).py_err()?)
}

/// Largest |E| relative to the single-gamma amplitude over random lattice sites.
#[pyfunction]
#[pyo3(signature = (geometry, n_sites = 1000, seed = 0, lattice_constant = consts::RH_LATTICE_CONSTANT_M))]
fn cancellation_residual(geometry: &PyGeometry, n_sites: usize, seed: u64, lattice_constant: f64) -> PyResult<f64> {
    let spec = LatticeSpec::new(lattice_constant, [1, 1, 1], 4).py_err()?;
    fields::cancellation_residual(&geometry.inner, &spec, n_sites, seed).py_err()
}

/// Monte Carlo Lamb-Mossbauer factor: (value, stderr).
#[pyfunction]
#[pyo3(signature = (geometry, sigma, n_samples = 1_000_000, seed = 0, model = "longitudinal-gaussian", interpretation = "coherent"))]
fn flm_mc(
    geometry: &PyGeometry,
    sigma: f64,
    n_samples: usize,
    seed: u64,
    model: &str,
    interpretation: &str,
) -> PyResult<(f64, Option<f64>)> {
    let ens = match model {
        "longitudinal-gaussian" => DisplacementEnsemble::longitudinal(sigma, n_samples, seed),
        "isotropic-gaussian" => DisplacementEnsemble::isotropic(sigma, n_samples, seed),
        other => return Err(PyValueError::new_err(format!("unknown displacement model `{other}`"))),
    };
    debug_assert!(ens.model != DisplacementModel::ExplicitSamples);
    let interp = match interpretation {
        "coherent" => Interpretation::Coherent,
        "incoherent" => Interpretation::Incoherent,
        other => return Err(PyValueError::new_err(format!("unknown interpretation `{other}`"))),
    };
    let r = lm::flm_mc(&geometry.inner, &ens, interp).py_err()?;
    Ok((r.value, r.stderr))
}

#[pyfunction]
fn flm_closed_form(geometry: &PyGeometry, sigma: f64) -> PyResult<f64> {
    Ok(lm::flm_closed_form(&geometry.inner, sigma).py_err()?.value)
}

fn kernel_of(bessel: bool) -> BeatKernel {
    if bessel {
        BeatKernel::BesselJ0Squared
    } else {
        BeatKernel::Cos2
    }
}

#[pyfunction]
#[pyo3(signature = (t, params, bessel = false))]
fn count_rate(t: f64, params: &PyBeatParams, bessel: bool) -> PyResult<f64> {
    core_beat::count_rate_with(t, &params.inner, kernel_of(bessel)).py_err()
}

#[pyfunction]
#[pyo3(signature = (t, params, bessel = false))]
fn accumulated_intensity(t: f64, params: &PyBeatParams, bessel: bool) -> PyResult<f64> {
    core_beat::accumulated_intensity_with(t, &params.inner, kernel_of(bessel), &Default::default()).py_err()
}

#[pyfunction]
#[pyo3(signature = (params, grid, bessel = false))]
fn beat_curve(py: Python<'_>, params: &PyBeatParams, grid: Vec<f64>, bessel: bool) -> PyResult<Vec<f64>> {
    let p = params.inner;
    let curve = py
        .detach(|| core_beat::beat_curve_with(&p, &grid, kernel_of(bessel), &Default::default()))
        .py_err()?;
    Ok(curve.into_iter().map(|(_, i)| i).collect())
}

#[pyfunction]
fn rate_minima(params: &PyBeatParams, count: usize) -> PyResult<Vec<f64>> {
    core_beat::rate_minima(&params.inner, count).py_err()
}

/// Poisson gamma and K-alpha series in uniform bins.
#[pyfunction]
#[pyo3(signature = (params, kalpha_scale, width, horizon, seed = 0))]
fn simulate_counts(
    py: Python<'_>,
    params: &PyBeatParams,
    kalpha_scale: f64,
    width: f64,
    horizon: f64,
    seed: u64,
) -> PyResult<(PyCountSeries, PyCountSeries)> {
    let p = params.inner;
    let (g, k) = py
        .detach(|| core_spectra::simulate_counts(&p, kalpha_scale, &Binning { width, horizon }, seed))
        .py_err()?;
    Ok((PyCountSeries { inner: g }, PyCountSeries { inner: k }))
}

#[pyfunction]
fn normalize(gamma: &PyCountSeries, kalpha: &PyCountSeries) -> PyResult<PyRatioSeries> {
    Ok(PyRatioSeries { inner: core_spectra::normalize(&gamma.inner, &kalpha.inner).py_err()? })
}

#[pyfunction]
fn chi2(series: &PyCountSeries, params: &PyBeatParams) -> PyResult<f64> {
    core_fit::chi2(&series.inner, &params.inner).py_err()
}

/// Fits a count series starting from `initial`; returns the fit result as a dict.
#[pyfunction]
#[pyo3(signature = (series, initial, free_params = None, phase_grid = 8))]
fn fit_beat<'py>(
    py: Python<'py>,
    series: &PyCountSeries,
    initial: &PyBeatParams,
    free_params: Option<Vec<String>>,
    phase_grid: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = FitConfig::new(initial.inner);
    cfg.phase_grid = phase_grid;
    if let Some(names) = free_params {
        cfg.free_params = names
            .iter()
            .map(|n| {
                serde_json::from_value::<FitParam>(serde_json::Value::String(n.clone()))
                    .map_err(|_| PyValueError::new_err(format!("unknown parameter `{n}`")))
            })
            .collect::<PyResult<_>>()?;
    }
    let data = series.inner.clone();
    let result = py.detach(|| core_fit::fit_beat(&data, &cfg)).py_err()?;
    json_to_py(py, &result)
}

#[pymodule]
fn rhodium(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBeatParams>()?;
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyCountSeries>()?;
    m.add_class::<PyRatioSeries>()?;
    m.add_function(wrap_pyfunction!(estimates, m)?)?;
    m.add_function(wrap_pyfunction!(tau_d, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_j0, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_j0_asymptotic, m)?)?;
    m.add_function(wrap_pyfunction!(bragg_angle_solve, m)?)?;
    m.add_function(wrap_pyfunction!(cancellation_residual, m)?)?;
    m.add_function(wrap_pyfunction!(flm_mc, m)?)?;
    m.add_function(wrap_pyfunction!(flm_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(count_rate, m)?)?;
    m.add_function(wrap_pyfunction!(accumulated_intensity, m)?)?;
    m.add_function(wrap_pyfunction!(beat_curve, m)?)?;
    m.add_function(wrap_pyfunction!(rate_minima, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_counts, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(chi2, m)?)?;
    m.add_function(wrap_pyfunction!(fit_beat, m)?)?;
    m.add("RH_TAU0_S", consts::RH_TAU0_S)?;
    Ok(())
}
