//! Python module `tbddma_py`.

use std::path::PathBuf;

use ndarray::Array2;
use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tbddma::reproduce::reproduce as run_example;
use tbddma::scenario::{run_scenario, RunOptions};
use tbddma::{Coding, DetectConfig, Error, Fading, NoiseConfig, ThresholdRule, Window};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyRuntimeError::new_err(e.to_string()),
        4 => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn coding(name: &str) -> PyResult<Coding> {
    match name {
        "first_bin" => Ok(Coding::FirstBin),
        "centered" => Ok(Coding::Centered),
        other => Err(PyValueError::new_err(format!(
            "coding must be 'first_bin' or 'centered', got '{other}'"
        ))),
    }
}

fn window(name: &str) -> PyResult<Window> {
    match name {
        "none" => Ok(Window::None),
        "hann" => Ok(Window::Hann),
        "taylor" => Ok(Window::taylor_default()),
        other => Err(PyValueError::new_err(format!(
            "window must be 'none', 'hann' or 'taylor', got '{other}'"
        ))),
    }
}

fn rows_of(a: &Array2<Complex64>) -> Vec<Vec<Complex64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[pyclass(name = "RadarParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyRadarParams(tbddma::RadarParams);

#[pymethods]
impl PyRadarParams {
    #[new]
    #[pyo3(signature = (carrier_freq_hz, bandwidth_hz, chirp_time_s, num_pulses, num_tx, num_rx, fast_time_samples))]
    fn new(
        carrier_freq_hz: f64,
        bandwidth_hz: f64,
        chirp_time_s: f64,
        num_pulses: usize,
        num_tx: usize,
        num_rx: usize,
        fast_time_samples: usize,
    ) -> PyResult<Self> {
        tbddma::RadarParams::new(
            carrier_freq_hz,
            bandwidth_hz,
            chirp_time_s,
            num_pulses,
            num_tx,
            num_rx,
            fast_time_samples,
        )
        .map(Self)
        .map_err(py_err)
    }

    /// 79 GHz, 300 MHz, Q = 512, M = 8, N = 12.
    #[staticmethod]
    fn automotive(chirp_time_s: f64, fast_time_samples: usize) -> Self {
        Self(tbddma::RadarParams::automotive(chirp_time_s, fast_time_samples))
    }

    /// (range resolution, R_max, velocity resolution, v_max).
    fn metrics(&self) -> PyResult<(f64, f64, f64, f64)> {
        let m = tbddma::derive_metrics(&self.0).map_err(py_err)?;
        Ok((
            m.range_resolution_m,
            m.max_unambiguous_range_m,
            m.velocity_resolution_mps,
            m.max_unambiguous_velocity_mps,
        ))
    }

    fn with_pulses(&self, num_pulses: usize) -> Self {
        let mut p = self.0;
        p.num_pulses = num_pulses;
        Self(p)
    }

    fn with_receivers(&self, num_rx: usize) -> Self {
        let mut p = self.0;
        p.num_rx = num_rx;
        Self(p)
    }

    fn velocity_from_doppler(&self, normalized: f64) -> f64 {
        self.0.velocity_from_doppler(normalized)
    }

    #[getter]
    fn num_pulses(&self) -> usize {
        self.0.num_pulses
    }

    #[getter]
    fn num_tx(&self) -> usize {
        self.0.num_tx
    }

    #[getter]
    fn num_rx(&self) -> usize {
        self.0.num_rx
    }

    #[getter]
    fn fast_time_samples(&self) -> usize {
        self.0.fast_time_samples
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyclass(name = "Modulation", frozen)]
struct PyModulation(tbddma::PhaseModulationMatrix);

#[pymethods]
impl PyModulation {
    #[staticmethod]
    fn tdma(m: usize, q: usize) -> PyResult<Self> {
        tbddma::tdma_matrix(m, q).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (m, q, coding = "first_bin"))]
    fn ddma(m: usize, q: usize, coding: &str) -> PyResult<Self> {
        tbddma::ddma_matrix(m, q, self::coding(coding)?).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (m, mv, q, coding = "first_bin"))]
    fn empty_spectrum(m: usize, mv: usize, q: usize, coding: &str) -> PyResult<Self> {
        tbddma::empty_spectrum_matrix(m, mv, q, self::coding(coding)?)
            .map(Self)
            .map_err(py_err)
    }

    /// `beam_indices` are 1-based in-period virtual pulse indices.
    #[staticmethod]
    #[pyo3(signature = (m, mv, q, beam_indices, coding = "first_bin"))]
    fn tb_ddma(m: usize, mv: usize, q: usize, beam_indices: Vec<usize>, coding: &str) -> PyResult<Self> {
        tbddma::tb_ddma_matrix(m, mv, q, &beam_indices, self::coding(coding)?)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn hadamard(m: usize, q: usize) -> PyResult<Self> {
        tbddma::hadamard_matrix(m, q).map(Self).map_err(py_err)
    }

    /// Rows are transmitters, columns pulses.
    fn entries(&self) -> Vec<Vec<Complex64>> {
        rows_of(self.0.entries())
    }

    #[getter]
    fn scheme(&self) -> String {
        format!("{:?}", self.0.scheme())
    }

    #[getter]
    fn doppler_shifts(&self) -> Vec<f64> {
        self.0.doppler_shifts().to_vec()
    }

    #[getter]
    fn pulse_selection(&self) -> Option<Vec<usize>> {
        self.0.pulse_selection().map(<[usize]>::to_vec)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.0.entries().dim()
    }
}

#[pyclass(name = "Target", frozen, from_py_object)]
#[derive(Clone)]
struct PyTarget(tbddma::Target);

#[pymethods]
impl PyTarget {
    #[new]
    #[pyo3(signature = (range_m, velocity_mps, sin_angle = 0.0, amplitude = 1.0, swerling = false))]
    fn new(range_m: f64, velocity_mps: f64, sin_angle: f64, amplitude: f64, swerling: bool) -> Self {
        let fading = if swerling { Fading::SwerlingI } else { Fading::Fixed };
        Self(
            tbddma::Target::new(range_m, velocity_mps)
                .with_angle(sin_angle)
                .with_amplitude(amplitude)
                .with_fading(fading),
        )
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyclass(name = "DataCube", frozen)]
struct PyDataCube(tbddma::DataCube);

#[pymethods]
impl PyDataCube {
    /// (receivers, fast-time samples, pulses).
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.0.samples.dim()
    }

    /// Fast-time × pulse samples of one receiver.
    fn receiver(&self, n: usize) -> PyResult<Vec<Vec<Complex64>>> {
        if n >= self.0.samples.dim().0 {
            return Err(PyValueError::new_err(format!("receiver {n} out of range")));
        }
        Ok(rows_of(&self.0.samples.index_axis(ndarray::Axis(0), n).to_owned()))
    }

    /// Σ_n |Z_n|² over receivers, rows range bins, columns Doppler bins.
    #[pyo3(signature = (window = "hann"))]
    fn range_doppler_power(&self, window: &str) -> PyResult<Vec<Vec<f64>>> {
        let maps = tbddma::range_doppler_map(&self.0, self::window(window)?).map_err(py_err)?;
        let p = tbddma::export::combined_power(&maps).map_err(py_err)?;
        Ok(p.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Empty-spectrum detection; `threshold` is a median scale factor, or a
    /// level below the peak in dB when `peak_relative` is set.
    #[pyo3(signature = (window = "hann", threshold = 12.0, peak_relative = false))]
    fn detect(&self, py: Python<'_>, window: &str, threshold: f64, peak_relative: bool) -> PyResult<Vec<Py<PyAny>>> {
        let cfg = DetectConfig {
            window: self::window(window)?,
            threshold: if peak_relative {
                ThresholdRule::PeakRelativeDb(threshold)
            } else {
                ThresholdRule::MedianScale(threshold)
            },
            thinning: true,
        };
        let dets = tbddma::detect_and_estimate(&self.0, &cfg).map_err(py_err)?;
        dets.iter()
            .map(|d| {
                let dict = pyo3::types::PyDict::new(py);
                dict.set_item("range_bin", d.range_bin)?;
                dict.set_item("range_m", d.range_m)?;
                dict.set_item("start_bin", d.start_bin)?;
                dict.set_item("observed_doppler", d.observed_doppler)?;
                dict.set_item("recovered_doppler", d.recovered_doppler)?;
                dict.set_item("velocity_mps", d.velocity_mps)?;
                dict.set_item("confidence", d.confidence)?;
                dict.set_item("first_in_row", d.first_in_row)?;
                dict.set_item("last_in_row", d.last_in_row)?;
                Ok(dict.into_any().unbind())
            })
            .collect()
    }
}

#[pyfunction]
#[pyo3(signature = (params, modulation, targets, snr_db = None, seed = 0))]
fn simulate(
    py: Python<'_>,
    params: &PyRadarParams,
    modulation: &PyModulation,
    targets: Vec<PyTarget>,
    snr_db: Option<f64>,
    seed: u64,
) -> PyResult<PyDataCube> {
    let targets: Vec<_> = targets.into_iter().map(|t| t.0).collect();
    let noise = NoiseConfig {
        input_snr_db: snr_db,
        seed,
    };
    let (p, w) = (params.0, modulation.0.clone());
    py.detach(|| tbddma::simulate_rx(&p, &w, &targets, &noise))
        .map(PyDataCube)
        .map_err(py_err)
}

#[pyfunction]
fn steering_vector(num_elements: usize, spacing_wavelengths: f64, sin_theta: f64) -> PyResult<Vec<Complex64>> {
    tbddma::steering_vector(num_elements, spacing_wavelengths, sin_theta)
        .map(|s| s.entries)
        .map_err(py_err)
}

/// ψ(f_ob - f_1) in (-0.5, 0.5].
#[pyfunction]
fn recover_doppler(f_ob: f64, f_1: f64) -> f64 {
    tbddma::recover_doppler(f_ob, f_1)
}

#[pyfunction]
fn sequence_test(row: Vec<bool>, m: usize, mv: usize) -> PyResult<Vec<usize>> {
    tbddma::sequence_test(&row, m, mv).map_err(py_err)
}

#[pyfunction]
fn taylor_window(length: usize, nbar: usize, sidelobe_db: f64) -> PyResult<Vec<f64>> {
    tbddma::taylor_window(length, nbar, sidelobe_db).map_err(py_err)
}

/// Σ_k |a(s)ᴴ d_k|² on `grid`.
#[pyfunction]
#[pyo3(signature = (columns, grid, spacing_wavelengths = 0.5))]
fn beampattern(columns: Vec<Vec<Complex64>>, grid: Vec<f64>, spacing_wavelengths: f64) -> PyResult<Vec<f64>> {
    tbddma::beampattern(&columns, spacing_wavelengths, &grid)
        .map(|b| b.values)
        .map_err(py_err)
}

/// Fast-time beamspace design over the region [lo, hi] in sin θ.
/// Returns (M×K matrix rows, ripple, relaxation bound, rank-one residual).
#[pyfunction]
#[pyo3(signature = (num_tx, num_waveforms, lo, hi, seed = 0, randomization_trials = 1000))]
#[allow(clippy::type_complexity)]
fn design_tb(
    py: Python<'_>,
    num_tx: usize,
    num_waveforms: usize,
    lo: f64,
    hi: f64,
    seed: u64,
    randomization_trials: usize,
) -> PyResult<(Vec<Vec<Complex64>>, f64, f64, f64)> {
    let mut cfg = tbddma::TbDesignConfig::symmetric(num_tx, num_waveforms, 0.5);
    cfg.region = (lo, hi);
    cfg.seed = seed;
    cfg.randomization_trials = randomization_trials;
    let tb = py.detach(|| tbddma::design_tb(&cfg)).map_err(py_err)?;
    Ok((rows_of(&tb.matrix), tb.ripple, tb.relaxation_bound, tb.rank_one_residual))
}

fn options(out_dir: PathBuf, seed: Option<u64>, plot: bool) -> RunOptions {
    RunOptions {
        seed,
        out_dir: Some(out_dir),
        fast_time_samples: None,
        plot,
    }
}

/// Runs a built-in example; returns the summary as JSON text.
#[pyfunction]
#[pyo3(signature = (example_id, out_dir, seed = None, plot = false))]
fn reproduce(py: Python<'_>, example_id: u8, out_dir: PathBuf, seed: Option<u64>, plot: bool) -> PyResult<String> {
    let opts = options(out_dir, seed, plot);
    let b = py.detach(|| run_example(example_id, &opts)).map_err(py_err)?;
    serde_json::to_string(&b).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs a JSON scenario file; returns the summary as JSON text.
#[pyfunction]
#[pyo3(signature = (path, out_dir, seed = None, plot = false))]
fn simulate_scenario(py: Python<'_>, path: PathBuf, out_dir: PathBuf, seed: Option<u64>, plot: bool) -> PyResult<String> {
    let opts = options(out_dir, seed, plot);
    let b = py.detach(|| run_scenario(&path, &opts)).map_err(py_err)?;
    serde_json::to_string(&b).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn tbddma_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRadarParams>()?;
    m.add_class::<PyModulation>()?;
    m.add_class::<PyTarget>()?;
    m.add_class::<PyDataCube>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(steering_vector, m)?)?;
    m.add_function(wrap_pyfunction!(recover_doppler, m)?)?;
    m.add_function(wrap_pyfunction!(sequence_test, m)?)?;
    m.add_function(wrap_pyfunction!(taylor_window, m)?)?;
    m.add_function(wrap_pyfunction!(beampattern, m)?)?;
    m.add_function(wrap_pyfunction!(design_tb, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_scenario, m)?)?;
    m.add("SPEED_OF_LIGHT", tbddma::SPEED_OF_LIGHT)?;
    Ok(())
}
