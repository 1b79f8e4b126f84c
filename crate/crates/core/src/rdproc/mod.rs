//! Range-Doppler processing, fused binary detection and Doppler-ambiguity
//! recovery for empty-spectrum DDMA.

mod detect;

use std::f64::consts::TAU;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modmat::{PhaseModulationMatrix, Scheme};
use crate::scene::DataCube;
use crate::tbdesign::taylor_window;

pub use detect::{
    binary_detection, comb_thin, detect_and_estimate, estimate_threshold, find_peaks,
    process_empty_spectrum, recover_doppler, sequence_test, wrap_half, BinaryMatrix,
    DetectConfig, Detection, DetectionProducts, Peak, ThresholdRule,
};

/// Taper applied along each axis before the 2-D transform.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    None,
    #[default]
    Hann,
    Taylor {
        nbar: usize,
        sidelobe_db: f64,
    },
}

impl Window {
    pub fn taylor_default() -> Self {
        Window::Taylor {
            nbar: 4,
            sidelobe_db: -30.0,
        }
    }

    /// Window coefficients of the given length.
    pub fn coefficients(&self, len: usize) -> Result<Vec<f64>> {
        match *self {
            Window::None => Ok(vec![1.0; len]),
            Window::Hann => Ok(hann(len)),
            Window::Taylor { nbar, sidelobe_db } => taylor_window(len, nbar, sidelobe_db),
        }
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|k| 0.5 - 0.5 * (TAU * k as f64 / len as f64).cos())
        .collect()
}

/// Per-receiver range-Doppler map. Rows are range bins, columns Doppler bins
/// ordered from the most negative normalized Doppler upward.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub data: Array2<Complex64>,
    pub range_axis_m: Vec<f64>,
    /// Normalized Doppler (cycles per pulse) of each column.
    pub doppler_axis: Vec<f64>,
}

impl RangeDopplerMap {
    pub fn magnitude(&self) -> Array2<f64> {
        self.data.mapv(|z| z.norm())
    }

    pub fn num_range_bins(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_doppler_bins(&self) -> usize {
        self.data.ncols()
    }
}

/// Offset between column index and signed Doppler bin: `bin = col - offset`.
pub fn doppler_offset(q: usize) -> usize {
    q.div_ceil(2).saturating_sub(1)
}

/// Column holding signed Doppler bin `k` (taken modulo Q).
pub fn column_of_bin(k: i64, q: usize) -> usize {
    (k + doppler_offset(q) as i64).rem_euclid(q as i64) as usize
}

/// Signed Doppler bin of column `c`.
pub fn bin_of_column(c: usize, q: usize) -> i64 {
    c as i64 - doppler_offset(q) as i64
}

fn axis_for(width: usize, q: usize) -> Vec<f64> {
    (0..width)
        .map(|c| bin_of_column(c, width) as f64 / q as f64)
        .collect()
}

/// 2-D DFT of each receiver's (p, q) plane with kernel `exp(+i2π k x / N)`,
/// so that a target at range R lands on bin R/Δ_R and a slow-time phasor
/// `exp(-i2π ν q)` on Doppler bin ν·Q.
pub fn range_doppler_map(cube: &DataCube, window: Window) -> Result<Vec<RangeDopplerMap>> {
    let (_, np, nq) = cube.samples.dim();
    let wp = window.coefficients(np)?;
    let wq = window.coefficients(nq)?;
    let mut planner = FftPlanner::<f64>::new();
    let fft_q = planner.plan_fft(nq, FftDirection::Inverse);
    let fft_p = planner.plan_fft(np, FftDirection::Inverse);
    let dr = cube.params.range_resolution_m();
    let range_axis: Vec<f64> = (0..np).map(|p| p as f64 * dr).collect();
    let doppler_axis = axis_for(nq, nq);
    let off = doppler_offset(nq);

    let maps = cube
        .samples
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|plane| {
            let mut rows: Vec<Complex64> = plane
                .indexed_iter()
                .map(|((p, q), z)| z * (wp[p] * wq[q]))
                .collect();
            fft_q.process(&mut rows);
            // columns contiguous, Doppler shifted so that column 0 is the most negative bin
            let mut cols = vec![Complex64::new(0.0, 0.0); np * nq];
            transpose(&rows, np, nq, &mut cols, |q| (q + off) % nq);
            fft_p.process(&mut cols);
            let mut out = vec![Complex64::new(0.0, 0.0); np * nq];
            transpose(&cols, nq, np, &mut out, |p| p);
            let work = Array2::from_shape_vec((np, nq), out).expect("shape matches buffer");
            RangeDopplerMap {
                data: work,
                range_axis_m: range_axis.clone(),
                doppler_axis: doppler_axis.clone(),
            }
        })
        .collect();
    Ok(maps)
}

/// Tiled transpose of a row-major `r×c` buffer; source column j lands in row `map(j)`.
fn transpose(src: &[Complex64], r: usize, c: usize, dst: &mut [Complex64], map: impl Fn(usize) -> usize) {
    const TILE: usize = 32;
    for i0 in (0..r).step_by(TILE) {
        for j0 in (0..c).step_by(TILE) {
            for i in i0..(i0 + TILE).min(r) {
                for j in j0..(j0 + TILE).min(c) {
                    dst[map(j) * r + i] = src[i * c + j];
                }
            }
        }
    }
}

/// Slab width and integer center bin of each transmitter.
fn slabs(w: &PhaseModulationMatrix, q: usize) -> Result<(usize, Vec<i64>)> {
    if !w.is_ddma_family() {
        return Err(Error::Unsupported(format!(
            "demultiplexing needs a DDMA-family matrix, got {:?}",
            w.scheme()
        )));
    }
    let m = w.num_tx();
    let groups = match w.scheme() {
        Scheme::EmptySpectrumDdma => w.virtual_tx(),
        _ => m,
    };
    if q % groups != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{q} Doppler bins do not split into {groups} slabs"
        )));
    }
    let centers = w
        .doppler_shifts()
        .iter()
        .map(|f| {
            let c = f * q as f64;
            if (c - c.round()).abs() > 1e-9 {
                Err(Error::Unsupported(format!(
                    "Doppler shift {f} is not aligned to the {q}-bin grid"
                )))
            } else {
                Ok(c.round() as i64)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((q / groups, centers))
}

/// Cuts the map into one Doppler slab per transmitter, each re-centered so that
/// the transmitter's shift sits on relative bin 0. Relative bins run over
/// (-w/2, w/2] with w = Q/M (Q/M_v for empty-spectrum codes).
pub fn demultiplex(map: &RangeDopplerMap, w: &PhaseModulationMatrix) -> Result<Vec<RangeDopplerMap>> {
    let q = map.num_doppler_bins();
    let (width, centers) = slabs(w, q)?;
    let axis = axis_for(width, q);
    Ok(centers
        .iter()
        .map(|&c| {
            let cols: Vec<usize> = (0..width)
                .map(|j| column_of_bin(c + bin_of_column(j, width), q))
                .collect();
            RangeDopplerMap {
                data: map.data.select(Axis(1), &cols),
                range_axis_m: map.range_axis_m.clone(),
                doppler_axis: axis.clone(),
            }
        })
        .collect())
}

/// Places demultiplexed slabs back into a full Q-bin map; bins no slab covers are zero.
pub fn reassemble(
    sub_maps: &[RangeDopplerMap],
    w: &PhaseModulationMatrix,
    q: usize,
) -> Result<RangeDopplerMap> {
    let (width, centers) = slabs(w, q)?;
    if sub_maps.len() != centers.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} sub-maps for {} transmitters",
            sub_maps.len(),
            centers.len()
        )));
    }
    let np = sub_maps.first().map_or(0, |s| s.num_range_bins());
    let mut data = Array2::<Complex64>::zeros((np, q));
    for (sub, &c) in sub_maps.iter().zip(&centers) {
        if sub.data.dim() != (np, width) {
            return Err(Error::DimensionMismatch(format!(
                "sub-map is {:?}, expected {:?}",
                sub.data.dim(),
                (np, width)
            )));
        }
        for j in 0..width {
            let col = column_of_bin(c + bin_of_column(j, width), q);
            data.column_mut(col).assign(&sub.data.column(j));
        }
    }
    Ok(RangeDopplerMap {
        data,
        range_axis_m: sub_maps[0].range_axis_m.clone(),
        doppler_axis: axis_for(q, q),
    })
}
