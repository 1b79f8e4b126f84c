//! Target scenes and synthesis of dechirped receive cubes.

use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::{Array3, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modmat::PhaseModulationMatrix;
use crate::params::{cis_turns, derive_metrics, RadarParams};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// Deterministic amplitude equal to `mean_amplitude`.
    #[default]
    Fixed,
    /// One circular complex Gaussian draw per CPI with mean power `mean_amplitude²`.
    SwerlingI,
}

/// Point target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub range_m: f64,
    pub velocity_mps: f64,
    #[serde(default)]
    pub sin_angle: f64,
    #[serde(default = "one")]
    pub mean_amplitude: f64,
    #[serde(default)]
    pub fading: Fading,
}

fn one() -> f64 {
    1.0
}

impl Target {
    pub fn new(range_m: f64, velocity_mps: f64) -> Self {
        Target {
            range_m,
            velocity_mps,
            sin_angle: 0.0,
            mean_amplitude: 1.0,
            fading: Fading::Fixed,
        }
    }

    pub fn with_angle(mut self, sin_angle: f64) -> Self {
        self.sin_angle = sin_angle;
        self
    }

    pub fn with_fading(mut self, fading: Fading) -> Self {
        self.fading = fading;
        self
    }

    pub fn with_amplitude(mut self, mean_amplitude: f64) -> Self {
        self.mean_amplitude = mean_amplitude;
        self
    }
}

/// Receiver noise. SNR is per sample and per receive element, relative to the
/// echo power of a unit-amplitude target seen through a single transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// `None` disables additive noise.
    #[serde(default)]
    pub input_snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseConfig {
    pub fn noiseless(seed: u64) -> Self {
        NoiseConfig {
            input_snr_db: None,
            seed,
        }
    }

    pub fn with_snr(input_snr_db: f64, seed: u64) -> Self {
        NoiseConfig {
            input_snr_db: Some(input_snr_db),
            seed,
        }
    }
}

/// Receive samples indexed (receiver n, fast-time p, pulse q).
#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    pub params: RadarParams,
    pub modulation: PhaseModulationMatrix,
    pub samples: Array3<Complex64>,
}

impl DataCube {
    pub fn new(
        params: RadarParams,
        modulation: PhaseModulationMatrix,
        samples: Array3<Complex64>,
    ) -> Result<Self> {
        params.validate()?;
        let want = (params.num_rx, params.fast_time_samples, params.num_pulses);
        if samples.dim() != want {
            return Err(Error::DimensionMismatch(format!(
                "cube is {:?}, params imply {want:?}",
                samples.dim()
            )));
        }
        check_modulation(&params, &modulation)?;
        Ok(DataCube {
            params,
            modulation,
            samples,
        })
    }

    /// Keeps the pulses listed in `tb.pulse_selection()` and attaches `tb`.
    ///
    /// The cube must have been synthesized with the empty-spectrum code that
    /// `tb` was drawn from; the selected columns are checked for equality.
    /// Selected samples keep their original slow-time instants, so the result
    /// equals a direct TB-DDMA synthesis only for static targets.
    pub fn resample_pulses(&self, tb: &PhaseModulationMatrix) -> Result<DataCube> {
        let sel = tb.pulse_selection().ok_or_else(|| {
            Error::Unsupported("pulse resampling needs a TB-DDMA matrix".into())
        })?;
        let src = self.modulation.entries();
        if tb.num_tx() != src.nrows() || tb.virtual_tx() != self.modulation.virtual_tx() {
            return Err(Error::DimensionMismatch(
                "TB-DDMA matrix was not drawn from this cube's code".into(),
            ));
        }
        if let Some(&bad) = sel.iter().find(|&&v| v >= src.ncols()) {
            return Err(Error::DimensionMismatch(format!(
                "virtual pulse {bad} beyond the cube's {} pulses",
                src.ncols()
            )));
        }
        for (k, &v) in sel.iter().enumerate() {
            if tb.entries().column(k) != src.column(v) {
                return Err(Error::DimensionMismatch(format!(
                    "physical pulse {k} does not match virtual pulse {v}"
                )));
            }
        }
        let samples = self.samples.select(Axis(2), sel);
        let mut params = self.params;
        params.num_pulses = sel.len();
        Ok(DataCube {
            params,
            modulation: tb.clone(),
            samples,
        })
    }
}

fn check_modulation(params: &RadarParams, w: &PhaseModulationMatrix) -> Result<()> {
    if w.num_tx() != params.num_tx || w.num_pulses() != params.num_pulses {
        return Err(Error::DimensionMismatch(format!(
            "modulation matrix is {}x{}, params need {}x{}",
            w.num_tx(),
            w.num_pulses(),
            params.num_tx,
            params.num_pulses
        )));
    }
    Ok(())
}

/// Separable per-target factors: σ·b[n]·r[p]·s[q].
struct Echo {
    rx: Vec<Complex64>,
    fast: Vec<Complex64>,
    slow: Vec<Complex64>,
}

fn echo(params: &RadarParams, w: &PhaseModulationMatrix, t: &Target, sigma: Complex64) -> Echo {
    let lambda = params.wavelength_m();
    let tau0 = 2.0 * t.range_m / SPEED_OF_LIGHT;
    let fd = 2.0 * t.velocity_mps / lambda;
    let fs = params.sample_rate_hz();
    let beat = (params.chirp_rate() * tau0 + fd) / fs;
    let fast = (0..params.fast_time_samples)
        .map(|p| cis_turns(-beat * p as f64))
        .collect();
    let dt = params.tx_spacing_wavelengths;
    let dr = params.rx_spacing();
    let s = t.sin_angle;
    let tx_phase: Vec<Complex64> = (0..params.num_tx)
        .map(|m| cis_turns(-dt * m as f64 * s))
        .collect();
    let nu = fd * params.chirp_time_s;
    let entries = w.entries();
    let slow = (0..params.num_pulses)
        .map(|q| {
            let g: Complex64 = (0..params.num_tx)
                .map(|m| entries[(m, q)] * tx_phase[m])
                .sum();
            sigma * g * cis_turns(-nu * q as f64)
        })
        .collect();
    let rx = (0..params.num_rx)
        .map(|n| cis_turns(-dr * n as f64 * s))
        .collect();
    Echo { rx, fast, slow }
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std, im * std)
}

/// Synthesizes the dechirped receive cube for a scene.
///
/// Swerling amplitudes come from stream 0 of a ChaCha generator seeded with
/// `noise.seed`, in target order; receiver n draws its noise from stream n+1,
/// so the result does not depend on thread scheduling.
pub fn simulate_rx(
    params: &RadarParams,
    w: &PhaseModulationMatrix,
    targets: &[Target],
    noise: &NoiseConfig,
) -> Result<DataCube> {
    params.validate()?;
    check_modulation(params, w)?;
    let metrics = derive_metrics(params)?;
    for (i, t) in targets.iter().enumerate() {
        if !(-1.0..=1.0).contains(&t.sin_angle) {
            return Err(Error::param(
                "sin_angle",
                format!("target {i}: {} outside [-1, 1]", t.sin_angle),
            ));
        }
        if !(t.range_m.is_finite() && t.range_m >= 0.0) {
            return Err(Error::param("range_m", format!("target {i}: must be >= 0")));
        }
        if !t.velocity_mps.is_finite() {
            return Err(Error::param("velocity_mps", format!("target {i}: not finite")));
        }
        if !(t.mean_amplitude.is_finite() && t.mean_amplitude > 0.0) {
            return Err(Error::param(
                "mean_amplitude",
                format!("target {i}: must be positive"),
            ));
        }
        if t.range_m >= metrics.max_unambiguous_range_m {
            log::warn!(
                "target {i} at {:.1} m is beyond R_max = {:.1} m and will fold",
                t.range_m,
                metrics.max_unambiguous_range_m
            );
        }
    }
    if let Some(snr) = noise.input_snr_db {
        if !snr.is_finite() {
            return Err(Error::param("input_snr_db", "must be finite"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let sigmas: Vec<Complex64> = targets
        .iter()
        .map(|t| match t.fading {
            Fading::Fixed => Complex64::new(t.mean_amplitude, 0.0),
            Fading::SwerlingI => gaussian(&mut rng, t.mean_amplitude * FRAC_1_SQRT_2),
        })
        .collect();
    let echoes: Vec<Echo> = targets
        .iter()
        .zip(&sigmas)
        .map(|(t, &s)| echo(params, w, t, s))
        .collect();
    let noise_std = noise
        .input_snr_db
        .map(|snr| (10f64.powf(-snr / 10.0) / 2.0).sqrt());

    let (nr, np, nq) = (params.num_rx, params.fast_time_samples, params.num_pulses);
    let mut samples = Array3::<Complex64>::zeros((nr, np, nq));
    samples
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(n, mut plane)| {
            for e in &echoes {
                let b = e.rx[n];
                for (p, mut row) in plane.axis_iter_mut(Axis(0)).enumerate() {
                    let bp = b * e.fast[p];
                    for (z, s) in row.iter_mut().zip(&e.slow) {
                        *z += bp * s;
                    }
                }
            }
            if let Some(std) = noise_std {
                let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
                rng.set_stream(n as u64 + 1);
                for z in plane.iter_mut() {
                    *z += gaussian(&mut rng, std);
                }
            }
        });

    Ok(DataCube {
        params: *params,
        modulation: w.clone(),
        samples,
    })
}
