//! Fast-time transmit beamspace design through a semidefinite relaxation,
//! beampattern evaluation, and slow-time DFT beam patterns.

mod refine;
pub mod sdp;
mod taper;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modmat::{PhaseModulationMatrix, Scheme};
use crate::params::steering_entries;

pub use refine::{ripple, Layout};
pub use sdp::{LinearConstraint, LowRankSdp, SdpOptions, SdpSolution};
pub use taper::taylor_window;

/// Rank-one acceptance level for λ₂/λ₁.
pub const RANK_ONE_TOL: f64 = 1e-6;

/// Uniform grid of `n` points over [-1, 1] in sin θ.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TbDesignConfig {
    pub num_tx: usize,
    /// K ∈ {2, 4}.
    pub num_waveforms: usize,
    /// Coverage region [s_lo, s_hi] in sin θ.
    pub region: (f64, f64),
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    /// Desired pattern on the grid; defaults to a power-conserving rectangle on the region.
    #[serde(default)]
    pub ideal_pattern: Option<Vec<f64>>,
    /// Per-element transmit power.
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default = "half")]
    pub spacing_wavelengths: f64,
    #[serde(default = "default_trials")]
    pub randomization_trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Run the local minimax refinement on the best extracted candidate.
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub solver: SolverSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let o = SdpOptions::default();
        SolverSettings {
            feasibility_tol: o.feasibility_tol,
            gap_tol: o.gap_tol,
            max_iterations: o.max_iterations,
        }
    }
}

fn default_grid() -> Vec<f64> {
    uniform_grid(181)
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn default_trials() -> usize {
    1000
}

impl TbDesignConfig {
    /// Defaults around a symmetric region ±`s0` in sin θ.
    pub fn symmetric(num_tx: usize, num_waveforms: usize, s0: f64) -> Self {
        TbDesignConfig {
            num_tx,
            num_waveforms,
            region: (-s0, s0),
            grid: default_grid(),
            ideal_pattern: None,
            c2: 1.0,
            spacing_wavelengths: 0.5,
            randomization_trials: default_trials(),
            seed: 0,
            refine: true,
            solver: SolverSettings::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_waveforms != 2 && self.num_waveforms != 4 {
            return Err(Error::param(
                "num_waveforms",
                format!("must be 2 or 4, got {}", self.num_waveforms),
            ));
        }
        if self.num_tx < self.num_waveforms {
            return Err(Error::param(
                "num_tx",
                format!("{} is smaller than K = {}", self.num_tx, self.num_waveforms),
            ));
        }
        let (lo, hi) = self.region;
        if !(lo.is_finite() && hi.is_finite() && -1.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::param(
                "region",
                format!("need -1 <= lo < hi <= 1, got ({lo}, {hi})"),
            ));
        }
        if self.grid.is_empty() {
            return Err(Error::param("grid", "must be non-empty"));
        }
        if self.grid.iter().any(|s| !(-1.0..=1.0).contains(s))
            || self.grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::param("grid", "must be strictly increasing within [-1, 1]"));
        }
        if let Some(p) = &self.ideal_pattern {
            if p.len() != self.grid.len() {
                return Err(Error::param(
                    "ideal_pattern",
                    format!("{} values for {} grid points", p.len(), self.grid.len()),
                ));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("ideal_pattern", "values must be finite"));
            }
        }
        if !(self.c2.is_finite() && self.c2 > 0.0) {
            return Err(Error::param("c2", "must be positive"));
        }
        if !(self.spacing_wavelengths.is_finite() && self.spacing_wavelengths > 0.0) {
            return Err(Error::param("spacing_wavelengths", "must be positive"));
        }
        Ok(())
    }

    /// Desired pattern values on the grid.
    pub fn ideal_values(&self) -> Vec<f64> {
        if let Some(p) = &self.ideal_pattern {
            return p.clone();
        }
        let (lo, hi) = self.region;
        let height = 2.0 * self.num_tx as f64 * self.c2 / (hi - lo);
        self.grid
            .iter()
            .map(|&s| if s >= lo && s <= hi { height } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    /// Δ was rank one; d is its principal eigenvector.
    RankOne,
    /// Best of colored Gaussian candidates and the truncated eigenvector.
    Randomized,
}

/// Designed M×K fast-time beamspace matrix.
#[derive(Debug, Clone)]
pub struct TbMatrix {
    pub matrix: Array2<Complex64>,
    /// max_j |P_j - G(θ_j)| of the returned matrix.
    pub ripple: f64,
    /// λ₂/λ₁ of the relaxation's optimal Δ.
    pub rank_one_residual: f64,
    /// Optimal value of the relaxation; a lower bound on any feasible ripple.
    pub relaxation_bound: f64,
    pub covariance: Array2<Complex64>,
    pub extraction: Extraction,
    /// Ripple before local refinement.
    pub extracted_ripple: f64,
    pub solver_iterations: usize,
    pub ideal_pattern: Vec<f64>,
    pub grid: Vec<f64>,
}

impl TbMatrix {
    pub fn columns(&self) -> Vec<Vec<Complex64>> {
        self.matrix.columns().into_iter().map(|c| c.to_vec()).collect()
    }

    /// Σ_m |d_{m,k}|² per column (c₁ of the power constraints).
    pub fn column_norms_sq(&self) -> Vec<f64> {
        self.matrix
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    /// Σ_k |d_{m,k}|² per element.
    pub fn row_powers(&self) -> Vec<f64> {
        self.matrix
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }
}

/// Reverse-order elementwise conjugate J d*.
pub fn conjugate_counterpart(d: &[Complex64]) -> Vec<Complex64> {
    d.iter().rev().map(|z| z.conj()).collect()
}

/// Builds the epigraph SDP for a design configuration.
pub fn build_relaxation(cfg: &TbDesignConfig) -> Result<LowRankSdp> {
    cfg.validate()?;
    let m = cfg.num_tx;
    let k = cfg.num_waveforms;
    let ideal = cfg.ideal_values();
    let nj = cfg.grid.len();
    let mut factors: Vec<Vec<Complex64>> = Vec::new();
    for &s in &cfg.grid {
        factors.push(steering_entries(m, cfg.spacing_wavelengths, s));
    }
    if k == 4 {
        for &s in &cfg.grid {
            factors.push(steering_entries(m, cfg.spacing_wavelengths, -s));
        }
    }
    let unit0 = factors.len();
    for i in 0..m {
        let mut e = vec![Complex64::new(0.0, 0.0); m];
        e[i] = Complex64::new(1.0, 0.0);
        factors.push(e);
    }
    let pattern_terms = |j: usize, sign: f64| -> Vec<(usize, f64)> {
        let mut t = vec![(j, 2.0 * sign)];
        if k == 4 {
            t.push((nj + j, 2.0 * sign));
        }
        t
    };
    // linear variables: t, then lower slacks, then upper slacks
    let mut constraints = Vec::with_capacity(2 * nj + m.div_ceil(2));
    for (j, &p) in ideal.iter().enumerate() {
        constraints.push(LinearConstraint {
            matrix_terms: pattern_terms(j, 1.0),
            linear_terms: vec![(0, 1.0), (1 + j, -1.0)],
            rhs: p,
        });
        constraints.push(LinearConstraint {
            matrix_terms: pattern_terms(j, -1.0),
            linear_terms: vec![(0, 1.0), (1 + nj + j, -1.0)],
            rhs: -p,
        });
    }
    let row_target = cfg.c2 * 2.0 / k as f64;
    for a in 0..m.div_ceil(2) {
        let b = m - 1 - a;
        let terms = if a == b {
            vec![(unit0 + a, 2.0)]
        } else {
            vec![(unit0 + a, 1.0), (unit0 + b, 1.0)]
        };
        constraints.push(LinearConstraint {
            matrix_terms: terms,
            linear_terms: vec![],
            rhs: row_target,
        });
    }
    let mut linear_cost = vec![0.0; 1 + 2 * nj];
    linear_cost[0] = 1.0;
    Ok(LowRankSdp {
        dim: m,
        factors,
        constraints,
        linear_cost,
    })
}

pub fn design_tb(cfg: &TbDesignConfig) -> Result<TbMatrix> {
    let sdp = build_relaxation(cfg)?;
    let opts = SdpOptions {
        feasibility_tol: cfg.solver.feasibility_tol,
        gap_tol: cfg.solver.gap_tol,
        max_iterations: cfg.solver.max_iterations,
    };
    let sol = sdp::solve(&sdp, &opts)?;
    let delta = sol.matrix.clone();
    let m = cfg.num_tx;
    let eig = SymmetricEigen::new(delta.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    if !(l1 > 0.0) {
        return Err(Error::Numerical("relaxation returned a zero covariance".into()));
    }
    let l2 = if m > 1 { eig.eigenvalues[order[1]].max(0.0) } else { 0.0 };
    let residual = l2 / l1;

    let layout = Layout::new(cfg)?;
    let principal: Vec<Complex64> = eig
        .eigenvectors
        .column(order[0])
        .iter()
        .map(|z| z * l1.sqrt())
        .collect();
    let mut best = layout.project(&principal);
    let mut best_ripple = layout.ripple(&best);
    let extraction = if residual <= RANK_ONE_TOL {
        Extraction::RankOne
    } else {
        let root = psd_sqrt(&eig);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.randomization_trials {
            let g = refine::complex_gaussian(&mut rng, m);
            let xi: Vec<Complex64> = (0..m)
                .map(|i| (0..m).map(|j| root[(i, j)] * g[j]).sum())
                .collect();
            let cand = layout.project(&xi);
            let r = layout.ripple(&cand);
            if r < best_ripple {
                best = cand;
                best_ripple = r;
            }
        }
        Extraction::Randomized
    };
    let extracted_ripple = best_ripple;
    if cfg.refine && extraction == Extraction::Randomized {
        let (d, r) = layout.refine(&best);
        if r < best_ripple {
            best = d;
            best_ripple = r;
        }
    }
    let cols = layout.columns(&best);
    let matrix = Array2::from_shape_fn((m, cols.len()), |(i, k)| cols[k][i]);
    Ok(TbMatrix {
        matrix,
        ripple: best_ripple,
        rank_one_residual: residual,
        relaxation_bound: sol.primal_objective,
        covariance: Array2::from_shape_fn((m, m), |ij| delta[ij]),
        extraction,
        extracted_ripple,
        solver_iterations: sol.iterations,
        ideal_pattern: layout.ideal.clone(),
        grid: cfg.grid.clone(),
    })
}

fn psd_sqrt(eig: &SymmetricEigen<Complex64, nalgebra::Dyn>) -> DMatrix<Complex64> {
    let v = &eig.eigenvectors;
    let n = v.nrows();
    let mut scaled = v.clone();
    for (k, l) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(k).scale_mut(l.max(0.0).sqrt());
    }
    let mut out = &scaled * v.adjoint();
    for i in 0..n {
        out[(i, i)].im = 0.0;
    }
    out
}

/// Transmit power pattern over a sin θ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beampattern {
    pub sin_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Beampattern {
    /// Scales so that the peak equals 1 (no-op for an all-zero pattern).
    pub fn normalize(mut self) -> Self {
        let peak = self.values.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            for v in &mut self.values {
                *v /= peak;
            }
        }
        self.normalized = true;
        self
    }

    pub fn values_db(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| 10.0 * v.max(1e-30).log10())
            .collect()
    }
}

/// G(θ_j) = Σ_k |a(θ_j)ᴴ d_k|².
pub fn beampattern(
    columns: &[Vec<Complex64>],
    spacing_wavelengths: f64,
    grid: &[f64],
) -> Result<Beampattern> {
    let m = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != m) {
        return Err(Error::DimensionMismatch(
            "beampattern columns differ in length".into(),
        ));
    }
    if grid.iter().any(|s| !s.is_finite()) {
        return Err(Error::param("grid", "values must be finite"));
    }
    let values = grid
        .iter()
        .map(|&s| {
            let a = steering_entries(m, spacing_wavelengths, s);
            columns
                .iter()
                .map(|d| {
                    a.iter()
                        .zip(d)
                        .map(|(x, y)| x.conj() * y)
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum()
        })
        .collect();
    Ok(Beampattern {
        sin_grid: grid.to_vec(),
        values,
        normalized: false,
    })
}

/// Pattern of the distinct DFT beams in one period of a DDMA-family code,
/// each column optionally tapered across the array by `taper`.
pub fn slow_time_tb_pattern(
    w: &PhaseModulationMatrix,
    taper: Option<&[f64]>,
    spacing_wavelengths: f64,
    grid: &[f64],
) -> Result<Beampattern> {
    if !matches!(w.scheme(), Scheme::Ddma | Scheme::TbDdma | Scheme::EmptySpectrumDdma) {
        return Err(Error::Unsupported(format!(
            "slow-time beams need a DDMA-family matrix, got {:?}",
            w.scheme()
        )));
    }
    let m = w.num_tx();
    if let Some(t) = taper {
        if t.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "taper has {} coefficients for {m} elements",
                t.len()
            )));
        }
    }
    let period = w.period().min(w.num_pulses());
    let columns: Vec<Vec<Complex64>> = (0..period)
        .map(|q| {
            let mut c = w.column(q);
            if let Some(t) = taper {
                for (z, x) in c.iter_mut().zip(t) {
                    *z *= *x;
                }
            }
            c
        })
        .collect();
    beampattern(&columns, spacing_wavelengths, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modmat::{ddma_matrix, tb_ddma_matrix, virtual_beam_directions, Coding};
    use proptest::prelude::*;

    #[test]
    fn counterpart_examples() {
        let d = vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)];
        assert_eq!(conjugate_counterpart(&d), d);
        let d = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        assert_eq!(
            conjugate_counterpart(&d),
            vec![Complex64::new(0.0, -1.0), Complex64::new(1.0, 0.0)]
        );
    }

    #[test]
    fn coherent_all_ones_peak() {
        let b = beampattern(&[vec![Complex64::new(1.0, 0.0); 6]], 0.5, &[0.0, 0.5]).unwrap();
        assert!((b.values[0] - 36.0).abs() < 1e-12);
        assert!(b.values[1] < 36.0);
        assert!(beampattern(&[vec![Complex64::new(1.0, 0.0); 2], vec![Complex64::new(1.0, 0.0); 3]], 0.5, &[0.0]).is_err());
    }

    #[test]
    fn dft_beams_peak_and_null() {
        let w = ddma_matrix(4, 4, Coding::FirstBin).unwrap();
        let dirs = virtual_beam_directions(4).directions;
        for q in 0..4 {
            let b = beampattern(&[w.column(q)], 0.5, &dirs).unwrap();
            let own = crate::modmat::beam_direction(q, 4);
            for (s, v) in dirs.iter().zip(&b.values) {
                if *s == own {
                    assert!((v - 16.0).abs() < 1e-10);
                } else {
                    assert!(*v < 1e-20);
                }
            }
        }
    }

    #[test]
    fn full_ddma_is_omnidirectional() {
        for m in 1..10 {
            let w = ddma_matrix(m, 2 * m, Coding::Centered).unwrap();
            let b = slow_time_tb_pattern(&w, None, 0.5, &uniform_grid(181)).unwrap();
            let (lo, hi) = b.values.iter().fold((f64::MAX, 0.0f64), |(a, c), &v| (a.min(v), c.max(v)));
            assert!((hi - lo) / hi < 1e-9);
        }
    }

    #[test]
    fn single_beam_pattern() {
        let w = tb_ddma_matrix(1, 4, 8, &[3], Coding::FirstBin).unwrap();
        let b = slow_time_tb_pattern(&w, None, 0.5, &[0.0, 1.0]).unwrap();
        assert!((b.values[0] - 1.0).abs() < 1e-12);
        let w = crate::modmat::tdma_matrix(2, 4).unwrap();
        assert!(slow_time_tb_pattern(&w, None, 0.5, &[0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TbDesignConfig::symmetric(8, 3, 0.5);
        assert!(design_tb(&c).is_err());
        c.num_waveforms = 4;
        c.num_tx = 3;
        assert!(design_tb(&c).is_err());
        let mut c = TbDesignConfig::symmetric(8, 2, 0.5);
        c.region = (0.5, -0.5);
        assert!(design_tb(&c).is_err());
        let mut c = TbDesignConfig::symmetric(8, 2, 0.5);
        c.grid = vec![0.0, -0.5];
        assert!(design_tb(&c).is_err());
    }

    #[test]
    fn default_ideal_height() {
        let c = TbDesignConfig::symmetric(8, 2, 0.5);
        let p = c.ideal_values();
        assert_eq!(p[90], 16.0);
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn two_element_omnidirectional() {
        let mut c = TbDesignConfig::symmetric(2, 2, 1.0);
        c.ideal_pattern = Some(vec![1.0; c.grid.len()]);
        let d = design_tb(&c).unwrap();
        assert!((d.relaxation_bound - 1.0).abs() < 1e-6);
        assert!((d.covariance[(0, 0)].re - 0.5).abs() < 1e-4);
        assert!((d.covariance[(1, 1)].re - 0.5).abs() < 1e-4);
        assert!(d.covariance[(0, 1)].norm() < 1e-4);
        // brute force over the 2×2 feasible cone: Δ = [[a, c], [c*, 1-a]]
        let grid = &c.grid;
        let a_vecs: Vec<_> = grid.iter().map(|&s| steering_entries(2, 0.5, s)).collect();
        let mut best = f64::INFINITY;
        for ia in 0..=20 {
            let a = ia as f64 / 20.0;
            let rmax = (a * (1.0 - a)).sqrt();
            for ir in 0..=10 {
                for ip in 0..16 {
                    let cc = Complex64::from_polar(rmax * ir as f64 / 10.0, ip as f64 * std::f64::consts::TAU / 16.0);
                    let t = a_vecs
                        .iter()
                        .map(|v| {
                            let q = a * v[0].norm_sqr() + (1.0 - a) * v[1].norm_sqr()
                                + 2.0 * (v[0].conj() * cc * v[1]).re;
                            (1.0 - 2.0 * q).abs()
                        })
                        .fold(0.0, f64::max);
                    best = best.min(t);
                }
            }
        }
        assert!((best - 1.0).abs() < 1e-12);
        assert!(d.relaxation_bound <= best + 1e-6);
    }

    #[test]
    fn odd_element_count_satisfies_row_power() {
        let mut c = TbDesignConfig::symmetric(5, 2, 0.4);
        c.randomization_trials = 200;
        let d = design_tb(&c).unwrap();
        for p in d.row_powers() {
            assert!((p - 1.0).abs() < 1e-9, "{p}");
        }
        assert!(d.ripple >= d.relaxation_bound - 1e-6);
    }

    #[test]
    fn four_waveforms() {
        let mut c = TbDesignConfig::symmetric(8, 4, 0.5);
        c.randomization_trials = 200;
        let d = design_tb(&c).unwrap();
        assert_eq!(d.matrix.ncols(), 4);
        for p in d.row_powers() {
            assert!((p - 1.0).abs() < 1e-9, "{p}");
        }
        let n = d.column_norms_sq();
        assert!(n.iter().all(|x| (x - n[0]).abs() < 1e-9));
        assert!(d.ripple >= d.relaxation_bound - 1e-6);
        let cols = d.columns();
        assert_eq!(cols[1], conjugate_counterpart(&cols[0]));
        assert_eq!(cols[2], cols[0].iter().map(|z| z.conj()).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn counterpart_pattern_magnitude(
            re in proptest::collection::vec(-1.0f64..1.0, 1..12),
            s in -1.0f64..=1.0,
        ) {
            let d: Vec<Complex64> = re.iter().enumerate().map(|(i, &r)| Complex64::new(r, (i as f64 * 0.7).sin())).collect();
            let jd = conjugate_counterpart(&d);
            let a = beampattern(&[d], 0.5, &[s]).unwrap().values[0];
            let b = beampattern(&[jd], 0.5, &[s]).unwrap().values[0];
            prop_assert!((a - b).abs() < 1e-12 * a.max(1.0));
        }
    }
}
