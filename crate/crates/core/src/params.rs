//! Radar configuration, derived performance metrics and steering vectors.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

/// Physical configuration of a chirp-sequence MIMO radar.
///
/// The fast-time sampling rate is implied by `fast_time_samples / chirp_time_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarParams {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    /// Chirp duration and pulse repetition interval T_p.
    pub chirp_time_s: f64,
    pub num_pulses: usize,
    pub num_tx: usize,
    pub num_rx: usize,
    pub fast_time_samples: usize,
    /// Transmit element spacing in wavelengths.
    #[serde(default = "default_tx_spacing")]
    pub tx_spacing_wavelengths: f64,
    /// Receive element spacing in wavelengths; defaults to `num_tx * tx_spacing`.
    #[serde(default)]
    pub rx_spacing_wavelengths: Option<f64>,
}

fn default_tx_spacing() -> f64 {
    0.5
}

/// Estimation performance of a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub range_resolution_m: f64,
    pub max_unambiguous_range_m: f64,
    pub velocity_resolution_mps: f64,
    pub max_unambiguous_velocity_mps: f64,
}

/// Array response toward one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub sin_theta: f64,
    pub entries: Vec<Complex64>,
}

impl RadarParams {
    /// Half-wavelength transmit array with a filled receive aperture.
    pub fn new(
        carrier_freq_hz: f64,
        bandwidth_hz: f64,
        chirp_time_s: f64,
        num_pulses: usize,
        num_tx: usize,
        num_rx: usize,
        fast_time_samples: usize,
    ) -> Result<Self> {
        let p = RadarParams {
            carrier_freq_hz,
            bandwidth_hz,
            chirp_time_s,
            num_pulses,
            num_tx,
            num_rx,
            fast_time_samples,
            tx_spacing_wavelengths: 0.5,
            rx_spacing_wavelengths: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// 79 GHz, 300 MHz, 512 pulses, 8 transmitters, 12 receivers.
    pub fn automotive(chirp_time_s: f64, fast_time_samples: usize) -> Self {
        RadarParams {
            carrier_freq_hz: 79e9,
            bandwidth_hz: 300e6,
            chirp_time_s,
            num_pulses: 512,
            num_tx: 8,
            num_rx: 12,
            fast_time_samples,
            tx_spacing_wavelengths: 0.5,
            rx_spacing_wavelengths: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("carrier_freq_hz", self.carrier_freq_hz)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("chirp_time_s", self.chirp_time_s)?;
        positive("tx_spacing_wavelengths", self.tx_spacing_wavelengths)?;
        if let Some(d) = self.rx_spacing_wavelengths {
            positive("rx_spacing_wavelengths", d)?;
        }
        for (name, v) in [
            ("num_pulses", self.num_pulses),
            ("num_tx", self.num_tx),
            ("num_rx", self.num_rx),
            ("fast_time_samples", self.fast_time_samples),
        ] {
            if v == 0 {
                return Err(Error::param(name, "must be a positive integer"));
            }
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn chirp_rate(&self) -> f64 {
        self.bandwidth_hz / self.chirp_time_s
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.fast_time_samples as f64 / self.chirp_time_s
    }

    pub fn rx_spacing(&self) -> f64 {
        self.rx_spacing_wavelengths
            .unwrap_or(self.num_tx as f64 * self.tx_spacing_wavelengths)
    }

    /// Normalized Doppler f_d·T_p of a radial velocity.
    pub fn normalized_doppler(&self, velocity_mps: f64) -> f64 {
        2.0 * velocity_mps / self.wavelength_m() * self.chirp_time_s
    }

    /// Radial velocity of a normalized Doppler value.
    pub fn velocity_from_doppler(&self, normalized: f64) -> f64 {
        normalized * self.wavelength_m() / (2.0 * self.chirp_time_s)
    }

    pub fn range_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and positive, got {v}")))
    }
}

pub fn derive_metrics(params: &RadarParams) -> Result<Metrics> {
    params.validate()?;
    let p = params;
    let lambda = p.wavelength_m();
    Ok(Metrics {
        range_resolution_m: p.range_resolution_m(),
        max_unambiguous_range_m: SPEED_OF_LIGHT * p.sample_rate_hz() * p.chirp_time_s
            / (4.0 * p.bandwidth_hz),
        velocity_resolution_mps: lambda / (2.0 * p.num_pulses as f64 * p.chirp_time_s),
        max_unambiguous_velocity_mps: lambda / (4.0 * p.chirp_time_s),
    })
}

/// Entry m is `exp(-i 2π spacing m sin_theta)`.
pub fn steering_vector(
    num_elements: usize,
    spacing_wavelengths: f64,
    sin_theta: f64,
) -> Result<SteeringVector> {
    if !(-1.0..=1.0).contains(&sin_theta) {
        return Err(Error::param(
            "sin_theta",
            format!("must lie in [-1, 1], got {sin_theta}"),
        ));
    }
    Ok(SteeringVector {
        sin_theta,
        entries: steering_entries(num_elements, spacing_wavelengths, sin_theta),
    })
}

/// Unchecked steering entries; direction may be any real number.
pub(crate) fn steering_entries(n: usize, spacing: f64, s: f64) -> Vec<Complex64> {
    (0..n)
        .map(|m| cis_turns(-spacing * m as f64 * s))
        .collect()
}

/// `exp(i 2π x)` with x reduced to [-0.5, 0.5] first.
pub(crate) fn cis_turns(x: f64) -> Complex64 {
    let r = x - x.round();
    Complex64::from_polar(1.0, TAU * r)
}

/// `exp(-i 2π num/den)` reduced exactly in integers.
pub(crate) fn cis_rational(num: i64, den: i64) -> Complex64 {
    let r = num.rem_euclid(den);
    if r == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if 2 * r == den {
        return Complex64::new(-1.0, 0.0);
    }
    if 4 * r == den {
        return Complex64::new(0.0, -1.0);
    }
    if 4 * r == 3 * den {
        return Complex64::new(0.0, 1.0);
    }
    cis_turns(-(r as f64) / den as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn range_resolution_300mhz() {
        let p = RadarParams::automotive(12e-6, 1024);
        let m = derive_metrics(&p).unwrap();
        assert!((m.range_resolution_m - 0.4997).abs() < 1e-4);
    }

    #[test]
    fn max_range_back_solved() {
        let p = RadarParams::automotive(1.5e-6, 900);
        let m = derive_metrics(&p).unwrap();
        assert!((m.max_unambiguous_range_m - 224.84).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = RadarParams::automotive(12e-6, 1024);
        p.bandwidth_hz = -1.0;
        assert!(derive_metrics(&p).is_err());
        let mut p = RadarParams::automotive(12e-6, 1024);
        p.num_rx = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn steering_examples() {
        let a = steering_vector(5, 0.5, 0.0).unwrap();
        assert!(a.entries.iter().all(|z| (*z - 1.0).norm() < 1e-15));
        let a = steering_vector(2, 0.5, 1.0).unwrap();
        assert!((a.entries[1] + 1.0).norm() < 1e-15);
        let a = steering_vector(4, 0.5, 0.5).unwrap();
        for (m, z) in a.entries.iter().enumerate() {
            let want = Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_2 * m as f64);
            assert!((z - want).norm() < 1e-12);
        }
        assert!(steering_vector(4, 0.5, 1.01).is_err());
    }

    #[test]
    fn rational_phases_exact() {
        assert_eq!(cis_rational(3, 4), Complex64::new(0.0, 1.0));
        assert_eq!(cis_rational(-1, 4), Complex64::new(0.0, 1.0));
        assert_eq!(cis_rational(10, 5), Complex64::new(1.0, 0.0));
        let z = cis_rational(1, 3);
        assert!((z - Complex64::from_polar(1.0, -TAU / 3.0)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn metric_ratios(
            fc in 1e9f64..100e9, b in 1e6f64..4e9, tp in 1e-7f64..1e-3,
            q in 1usize..4096, pp in 1usize..8192,
        ) {
            let p = RadarParams::new(fc, b, tp, q, 1, 1, pp).unwrap();
            let m = derive_metrics(&p).unwrap();
            let r1 = m.max_unambiguous_range_m / m.range_resolution_m;
            let r2 = m.max_unambiguous_velocity_mps / m.velocity_resolution_mps;
            prop_assert!((r1 - pp as f64 / 2.0).abs() <= 1e-9 * r1);
            prop_assert!((r2 - q as f64 / 2.0).abs() <= 1e-9 * r2);
        }

        #[test]
        fn steering_unit_modulus_and_conjugate_reversal(m in 1usize..24, s in -1.0f64..=1.0) {
            let a = steering_vector(m, 0.5, s).unwrap().entries;
            prop_assert_eq!(a[0], Complex64::new(1.0, 0.0));
            let g = Complex64::from_polar(1.0, std::f64::consts::PI * (m as f64 - 1.0) * s);
            for k in 0..m {
                prop_assert!((a[k].norm() - 1.0).abs() < 1e-12);
                let lhs = a[m - 1 - k].conj();
                prop_assert!((lhs - g * a[k]).norm() < 1e-12);
            }
        }
    }
}
