//! Primal-dual interior-point method for small complex Hermitian SDPs whose
//! constraint matrices are weighted sums of rank-one terms.
//!
//! Primal:  min c·x  s.t.  Σ_r w_ir Re(u_r^H X u_r) + Σ_j b_ij x_j = rhs_i,
//!          X ⪰ 0 (Hermitian), x ≥ 0.
//! Dual:    max rhs·y s.t.  Z = -Σ_i y_i A_i ⪰ 0,  z = c - Bᵀy ≥ 0.
//!
//! Search directions follow the HKM scaling with a Mehrotra predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    /// (factor index, weight) pairs: A_i = Σ w u_r u_rᴴ.
    pub matrix_terms: Vec<(usize, f64)>,
    /// (linear variable index, coefficient) pairs.
    pub linear_terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSdp {
    pub dim: usize,
    pub factors: Vec<Vec<Complex64>>,
    pub constraints: Vec<LinearConstraint>,
    pub linear_cost: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            feasibility_tol: 1e-8,
            gap_tol: 1e-7,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub matrix: DMatrix<Complex64>,
    pub linear: Vec<f64>,
    pub dual: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
}

type CMat = DMatrix<Complex64>;

struct Ops<'a> {
    sdp: &'a LowRankSdp,
    u: CMat,
    /// Dense R×m weight matrix.
    weights: DMatrix<f64>,
    /// For each linear variable, its (constraint, coefficient) entries.
    lin_cols: Vec<Vec<(usize, f64)>>,
}

impl<'a> Ops<'a> {
    fn new(sdp: &'a LowRankSdp) -> Result<Self> {
        let n = sdp.dim;
        let r = sdp.factors.len();
        let m = sdp.constraints.len();
        let nl = sdp.linear_cost.len();
        if n == 0 || m == 0 {
            return Err(Error::param("sdp", "empty problem"));
        }
        let mut u = CMat::zeros(n, r);
        for (k, f) in sdp.factors.iter().enumerate() {
            if f.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "factor {k} has length {}, expected {n}",
                    f.len()
                )));
            }
            for (i, z) in f.iter().enumerate() {
                u[(i, k)] = *z;
            }
        }
        let mut weights = DMatrix::zeros(r, m);
        let mut lin_cols = vec![Vec::new(); nl];
        for (i, c) in sdp.constraints.iter().enumerate() {
            for &(f, w) in &c.matrix_terms {
                if f >= r {
                    return Err(Error::param("sdp", format!("factor index {f} out of range")));
                }
                weights[(f, i)] += w;
            }
            for &(j, b) in &c.linear_terms {
                if j >= nl {
                    return Err(Error::param("sdp", format!("linear index {j} out of range")));
                }
                lin_cols[j].push((i, b));
            }
        }
        Ok(Ops {
            sdp,
            u,
            weights,
            lin_cols,
        })
    }

    fn m(&self) -> usize {
        self.sdp.constraints.len()
    }

    /// A(K)_i = Σ_r w_ir Re(u_rᴴ K u_r).
    fn apply(&self, k: &CMat) -> DVector<f64> {
        let ku = k * &self.u;
        let diag = DVector::from_iterator(
            self.u.ncols(),
            (0..self.u.ncols()).map(|r| self.u.column(r).dotc(&ku.column(r)).re),
        );
        self.weights.tr_mul(&diag)
    }

    /// Σ_i y_i A_i.
    fn adjoint(&self, y: &DVector<f64>) -> CMat {
        let coef = &self.weights * y;
        let mut scaled = self.u.clone();
        for (r, c) in coef.iter().enumerate() {
            scaled.column_mut(r).scale_mut(*c);
        }
        scaled * self.u.adjoint()
    }

    fn apply_lin(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (j, col) in self.lin_cols.iter().enumerate() {
            for &(i, b) in col {
                out[i] += b * x[j];
            }
        }
        out
    }

    fn adjoint_lin(&self, y: &DVector<f64>) -> Vec<f64> {
        self.lin_cols
            .iter()
            .map(|col| col.iter().map(|&(i, b)| b * y[i]).sum())
            .collect()
    }

    /// Schur complement of the HKM system.
    fn schur(&self, x: &CMat, zinv: &CMat, xl: &[f64], zl: &[f64]) -> DMatrix<f64> {
        let p = self.u.adjoint() * x * &self.u;
        let q = self.u.adjoint() * zinv * &self.u;
        let r = self.u.ncols();
        let h = DMatrix::from_fn(r, r, |a, b| (p[(a, b)] * q[(b, a)]).re);
        let mut s = self.weights.tr_mul(&(h * &self.weights));
        for (j, col) in self.lin_cols.iter().enumerate() {
            let d = xl[j] / zl[j];
            for &(i, bi) in col {
                for &(k, bk) in col {
                    s[(i, k)] += d * bi * bk;
                }
            }
        }
        s
    }
}

fn hermitize(m: &mut CMat) {
    let h = (&*m + m.adjoint()) * Complex64::new(0.5, 0.0);
    *m = h;
}

fn frob(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest α with X + α·dX ⪰ 0 (∞ if unbounded).
fn max_step_psd(x: &CMat, dx: &CMat) -> Result<f64> {
    let chol = Cholesky::new(x.clone())
        .ok_or_else(|| Error::Numerical("iterate lost positive definiteness".into()))?;
    let l = chol.l();
    let n = x.nrows();
    let linv = l
        .solve_lower_triangular(&CMat::identity(n, n))
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut s = &linv * dx * linv.adjoint();
    hermitize(&mut s);
    let lmin = SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn max_step_lin(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx: CMat,
    dxl: Vec<f64>,
    dy: DVector<f64>,
    dz: CMat,
    dzl: Vec<f64>,
}

pub fn solve(sdp: &LowRankSdp, opts: &SdpOptions) -> Result<SdpSolution> {
    let ops = Ops::new(sdp)?;
    let n = sdp.dim;
    let m = ops.m();
    let nl = sdp.linear_cost.len();
    let b = DVector::from_iterator(m, sdp.constraints.iter().map(|c| c.rhs));
    let c = &sdp.linear_cost;
    let bnorm = b.norm();
    let cnorm = norm(c);

    let anorms: Vec<f64> = sdp
        .constraints
        .iter()
        .map(|con| {
            con.matrix_terms
                .iter()
                .map(|&(f, w)| w.abs() * sdp.factors[f].iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum::<f64>()
                + con.linear_terms.iter().map(|&(_, v)| v.abs()).sum::<f64>()
        })
        .collect();
    let nn = n as f64;
    let xi = sdp
        .constraints
        .iter()
        .zip(&anorms)
        .map(|(con, a)| nn * (1.0 + con.rhs.abs()) / (1.0 + a))
        .fold(10f64.max(nn.sqrt()), f64::max);
    let eta = anorms
        .iter()
        .cloned()
        .fold(10f64.max(nn.sqrt()).max(cnorm), f64::max);

    let mut x = CMat::identity(n, n) * Complex64::new(xi, 0.0);
    let mut z = CMat::identity(n, n) * Complex64::new(eta, 0.0);
    let mut xl = vec![xi; nl];
    let mut zl = vec![eta; nl];
    let mut y = DVector::<f64>::zeros(m);
    let big_n = (n + nl) as f64;

    let mut last = (f64::NAN, f64::NAN, f64::NAN);
    for iter in 0..=opts.max_iterations {
        let rp = &b - ops.apply(&x) - ops.apply_lin(&xl);
        let mut rd_mat = -ops.adjoint(&y) - &z;
        hermitize(&mut rd_mat);
        let bty = ops.adjoint_lin(&y);
        let rd: Vec<f64> = (0..nl).map(|j| c[j] - bty[j] - zl[j]).collect();
        let comp = inner(&x, &z) + xl.iter().zip(&zl).map(|(a, b)| a * b).sum::<f64>();
        let mu = comp / big_n;
        let pobj: f64 = c.iter().zip(&xl).map(|(a, b)| a * b).sum();
        let dobj = b.dot(&y);
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = (frob(&rd_mat) + norm(&rd)) / (1.0 + cnorm);
        let gap = comp.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        last = (pinf, dinf, gap);
        log::trace!("sdp iter {iter}: pobj {pobj:.9} dobj {dobj:.9} pinf {pinf:.2e} dinf {dinf:.2e} gap {gap:.2e}");
        if pinf <= opts.feasibility_tol && dinf <= opts.feasibility_tol && gap <= opts.gap_tol {
            let mut matrix = x;
            hermitize(&mut matrix);
            return Ok(SdpSolution {
                matrix,
                linear: xl,
                dual: y.iter().cloned().collect(),
                primal_objective: pobj,
                dual_objective: dobj,
                iterations: iter,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                relative_gap: gap,
            });
        }
        if iter == opts.max_iterations {
            break;
        }

        let zchol = Cholesky::new(z.clone())
            .ok_or_else(|| Error::Numerical("dual slack lost positive definiteness".into()))?;
        let mut zinv = zchol.inverse();
        hermitize(&mut zinv);
        let schur = ops.schur(&x, &zinv, &xl, &zl);
        let schur_chol = factor_schur(schur)?;

        let direction = |sigma_mu: f64, corr: Option<&Direction>| -> Direction {
            let mut k = &zinv * Complex64::new(sigma_mu, 0.0) - &x - &x * &rd_mat * &zinv;
            if let Some(a) = corr {
                k -= &a.dx * &a.dz * &zinv;
            }
            let klp: Vec<f64> = (0..nl)
                .map(|j| {
                    let mut v = sigma_mu / zl[j] - xl[j] - xl[j] * rd[j] / zl[j];
                    if let Some(a) = corr {
                        v -= a.dxl[j] * a.dzl[j] / zl[j];
                    }
                    v
                })
                .collect();
            let rhs = &rp - ops.apply(&k) - ops.apply_lin(&klp);
            let dy = schur_chol.solve(&rhs);
            let aty = ops.adjoint(&dy);
            let mut dz = &rd_mat - &aty;
            hermitize(&mut dz);
            let bdy = ops.adjoint_lin(&dy);
            let dzl: Vec<f64> = (0..nl).map(|j| rd[j] - bdy[j]).collect();
            let mut dx = k + &x * &aty * &zinv;
            hermitize(&mut dx);
            let dxl: Vec<f64> = (0..nl).map(|j| klp[j] + xl[j] * bdy[j] / zl[j]).collect();
            Direction {
                dx,
                dxl,
                dy,
                dz,
                dzl,
            }
        };

        let pred = direction(0.0, None);
        let ap = max_step_psd(&x, &pred.dx)?.min(max_step_lin(&xl, &pred.dxl)).min(1.0);
        let ad = max_step_psd(&z, &pred.dz)?.min(max_step_lin(&zl, &pred.dzl)).min(1.0);
        let xa = &x + &pred.dx * Complex64::new(ap, 0.0);
        let za = &z + &pred.dz * Complex64::new(ad, 0.0);
        let lin_aff: f64 = (0..nl)
            .map(|j| (xl[j] + ap * pred.dxl[j]) * (zl[j] + ad * pred.dzl[j]))
            .sum();
        let mu_aff = (inner(&xa, &za) + lin_aff) / big_n;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let dir = direction(sigma * mu, Some(&pred));
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let sp = (gamma * max_step_psd(&x, &dir.dx)?.min(max_step_lin(&xl, &dir.dxl))).min(1.0);
        let sd = (gamma * max_step_psd(&z, &dir.dz)?.min(max_step_lin(&zl, &dir.dzl))).min(1.0);

        x += &dir.dx * Complex64::new(sp, 0.0);
        hermitize(&mut x);
        z += &dir.dz * Complex64::new(sd, 0.0);
        hermitize(&mut z);
        for j in 0..nl {
            xl[j] += sp * dir.dxl[j];
            zl[j] += sd * dir.dzl[j];
        }
        y += &dir.dy * sd;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        primal: last.0,
        dual: last.1,
        gap: last.2,
    })
}

fn factor_schur(s: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let sym = (&s + s.transpose()) * 0.5;
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c);
    }
    let scale = sym.diagonal().iter().cloned().fold(0.0, f64::max).max(1.0);
    let mut reg = 1e-14 * scale;
    while reg < 1e-6 * scale {
        let shifted = &sym + DMatrix::identity(sym.nrows(), sym.ncols()) * reg;
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c);
        }
        reg *= 100.0;
    }
    Err(Error::Numerical("Schur complement is not positive definite".into()))
}
