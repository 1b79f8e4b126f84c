//! Feasible-set projection, ripple evaluation and local minimax refinement of
//! the generating vector d.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::TbDesignConfig;
use crate::error::Result;
use crate::params::steering_entries;

/// Column layout of D built from one generating vector, with the design's
/// grid and power targets.
#[derive(Debug, Clone)]
pub struct Layout {
    m: usize,
    k: usize,
    /// Σ over the two elements of a conjugate pair of |d|².
    pair_power: f64,
    steering: Vec<Vec<Complex64>>,
    pub(super) ideal: Vec<f64>,
}

pub(super) fn complex_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// max_j |P_j - G(θ_j)| for columns `cols`.
pub fn ripple(cols: &[Vec<Complex64>], steering: &[Vec<Complex64>], ideal: &[f64]) -> f64 {
    steering
        .iter()
        .zip(ideal)
        .map(|(a, p)| (p - pattern_at(a, cols)).abs())
        .fold(0.0, f64::max)
}

fn pattern_at(a: &[Complex64], cols: &[Vec<Complex64>]) -> f64 {
    cols.iter()
        .map(|d| a.iter().zip(d).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr())
        .sum()
}

fn transform(k: usize, d: &[Complex64]) -> Vec<Complex64> {
    match k {
        0 => d.to_vec(),
        1 => d.iter().rev().map(|z| z.conj()).collect(),
        2 => d.iter().map(|z| z.conj()).collect(),
        _ => d.iter().rev().cloned().collect(),
    }
}

impl Layout {
    pub fn new(cfg: &TbDesignConfig) -> Result<Self> {
        Ok(Layout {
            m: cfg.num_tx,
            k: cfg.num_waveforms,
            pair_power: cfg.c2 * 2.0 / cfg.num_waveforms as f64,
            steering: cfg
                .grid
                .iter()
                .map(|&s| steering_entries(cfg.num_tx, cfg.spacing_wavelengths, s))
                .collect(),
            ideal: cfg.ideal_values(),
        })
    }

    /// D = [d, Jd*] (K = 2) or [d, Jd*, d*, Jd] (K = 4).
    pub fn columns(&self, d: &[Complex64]) -> Vec<Vec<Complex64>> {
        (0..self.k).map(|k| transform(k, d)).collect()
    }

    pub fn ripple(&self, d: &[Complex64]) -> f64 {
        ripple(&self.columns(d), &self.steering, &self.ideal)
    }

    /// Rescales each conjugate pair (m, M-1-m) to meet the per-element power.
    pub fn project(&self, d: &[Complex64]) -> Vec<Complex64> {
        let mut out = d.to_vec();
        for a in 0..self.m.div_ceil(2) {
            let b = self.m - 1 - a;
            if a == b {
                let r = (self.pair_power / 2.0).sqrt();
                let z = out[a];
                out[a] = if z.norm() > 0.0 { z / z.norm() * r } else { Complex64::new(r, 0.0) };
                continue;
            }
            let p = out[a].norm_sqr() + out[b].norm_sqr();
            if p > 0.0 {
                let s = (self.pair_power / p).sqrt();
                out[a] *= s;
                out[b] *= s;
            } else {
                let r = (self.pair_power / 2.0).sqrt();
                out[a] = Complex64::new(r, 0.0);
                out[b] = Complex64::new(r, 0.0);
            }
        }
        out
    }

    fn pairs(&self) -> usize {
        self.m / 2
    }

    /// Parameters: one power-split angle per pair, then one phase per element.
    fn encode(&self, d: &[Complex64]) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.pairs())
            .map(|a| d[self.m - 1 - a].norm().atan2(d[a].norm()))
            .collect();
        x.extend(d.iter().map(|z| z.arg()));
        x
    }

    fn decode(&self, x: &[f64]) -> Vec<Complex64> {
        let np = self.pairs();
        let r = self.pair_power.sqrt();
        let mut mags = vec![(self.pair_power / 2.0).sqrt(); self.m];
        for a in 0..np {
            mags[a] = r * x[a].cos();
            mags[self.m - 1 - a] = r * x[a].sin();
        }
        (0..self.m)
            .map(|i| Complex64::from_polar(mags[i], x[np + i]))
            .collect()
    }

    /// Partial derivative of d with respect to parameter `i`.
    fn d_partial(&self, x: &[f64], d: &[Complex64], i: usize) -> Vec<Complex64> {
        let np = self.pairs();
        let mut g = vec![Complex64::new(0.0, 0.0); self.m];
        if i < np {
            let (a, b) = (i, self.m - 1 - i);
            let r = self.pair_power.sqrt();
            g[a] = Complex64::from_polar(-r * x[i].sin(), x[np + a]);
            g[b] = Complex64::from_polar(r * x[i].cos(), x[np + b]);
        } else {
            let e = i - np;
            g[e] = Complex64::new(0.0, 1.0) * d[e];
        }
        g
    }

    /// Pattern errors e_j = P_j - G_j and their gradients.
    fn errors_and_grads(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.decode(x);
        let cols = self.columns(&d);
        let partials: Vec<Vec<Vec<Complex64>>> = (0..x.len())
            .map(|i| {
                let g = self.d_partial(x, &d, i);
                (0..self.k).map(|k| transform(k, &g)).collect()
            })
            .collect();
        let mut errs = Vec::with_capacity(self.steering.len());
        let mut grads = Vec::with_capacity(self.steering.len());
        for (a, p) in self.steering.iter().zip(&self.ideal) {
            let proj: Vec<Complex64> = cols
                .iter()
                .map(|c| a.iter().zip(c).map(|(x, y)| x.conj() * y).sum())
                .collect();
            let g: f64 = proj.iter().map(|z| z.norm_sqr()).sum();
            errs.push(p - g);
            let grad = partials
                .iter()
                .map(|dk| {
                    let dg: f64 = dk
                        .iter()
                        .zip(&proj)
                        .map(|(dc, u)| {
                            let du: Complex64 = a.iter().zip(dc).map(|(x, y)| x.conj() * y).sum();
                            2.0 * (u.conj() * du).re
                        })
                        .sum();
                    -dg
                })
                .collect();
            grads.push(grad);
        }
        (errs, grads)
    }

    fn softmax(errs: &[f64], rho: f64) -> (f64, Vec<f64>) {
        let zmax = errs.iter().map(|e| e.abs()).fold(0.0, f64::max) * rho;
        let mut total = 0.0;
        let mut w = Vec::with_capacity(errs.len());
        for &e in errs {
            let up = (rho * e - zmax).exp();
            let dn = (-rho * e - zmax).exp();
            total += up + dn;
            w.push(up - dn);
        }
        for v in &mut w {
            *v /= total;
        }
        ((zmax + total.ln()) / rho, w)
    }

    fn smooth_value(&self, x: &[f64], rho: f64) -> (f64, f64) {
        let d = self.decode(x);
        let cols = self.columns(&d);
        let errs: Vec<f64> = self
            .steering
            .iter()
            .zip(&self.ideal)
            .map(|(a, p)| p - pattern_at(a, &cols))
            .collect();
        let rip = errs.iter().map(|e| e.abs()).fold(0.0, f64::max);
        (Self::softmax(&errs, rho).0, rip)
    }

    /// Log-sum-exp smoothing of max_j |e_j| with continuation in the sharpness,
    /// gradient descent with backtracking at each level; returns the best
    /// vector seen and its true ripple.
    pub fn refine(&self, start: &[Complex64]) -> (Vec<Complex64>, f64) {
        let mut x = self.encode(&self.project(start));
        let mut best_x = x.clone();
        let mut best = self.ripple(&self.decode(&x));
        let scale = self.ideal.iter().map(|p| p.abs()).fold(0.0, f64::max).max(1.0);
        for kappa in [8.0, 16.0, 32.0, 64.0, 128.0, 256.0] {
            let rho = kappa / scale;
            let mut step = 0.1;
            for _ in 0..200 {
                let (errs, grads) = self.errors_and_grads(&x);
                let (f, w) = Self::softmax(&errs, rho);
                let mut g = vec![0.0; x.len()];
                for (wj, gj) in w.iter().zip(&grads) {
                    for (gi, v) in g.iter_mut().zip(gj) {
                        *gi += wj * v;
                    }
                }
                let gn: f64 = g.iter().map(|v| v * v).sum();
                if gn < 1e-30 {
                    break;
                }
                let mut accepted = None;
                while step > 1e-12 {
                    let xn: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                    let (fnew, rip) = self.smooth_value(&xn, rho);
                    if fnew < f {
                        accepted = Some((xn, rip));
                        break;
                    }
                    step *= 0.5;
                }
                let Some((xn, rip)) = accepted else { break };
                x = xn;
                step *= 2.0;
                if rip < best {
                    best = rip;
                    best_x = x.clone();
                }
            }
        }
        (self.decode(&best_x), best)
    }
}
