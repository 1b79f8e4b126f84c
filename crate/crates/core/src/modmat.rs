//! Slow-time phase-modulation matrices and their virtual beam structure.

use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::cis_rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Tdma,
    Ddma,
    EmptySpectrumDdma,
    TbDdma,
    Hadamard,
    /// User-supplied entries with no structural guarantees.
    Custom,
}

/// Placement of the DDMA Doppler shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coding {
    /// f_m = m / M_v, the first transmitter unmodulated.
    #[default]
    FirstBin,
    /// Shifts symmetric about zero Doppler.
    Centered,
}

/// M×Q slow-time coding matrix W.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModulationMatrix {
    entries: Array2<Complex64>,
    scheme: Scheme,
    coding: Option<Coding>,
    virtual_tx: usize,
    doppler_shifts: Vec<f64>,
    pulse_selection: Option<Vec<usize>>,
    period: usize,
}

/// Directions of the DFT beams formed by one period of DDMA columns.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualBeamSet {
    /// sin θ_v values, ascending.
    pub directions: Vec<f64>,
    pub period: usize,
}

impl PhaseModulationMatrix {
    /// Wraps arbitrary entries; rows are transmitters, columns pulses.
    pub fn custom(entries: Array2<Complex64>) -> Result<Self> {
        let (m, q) = entries.dim();
        if m == 0 || q == 0 {
            return Err(Error::param("entries", "matrix must be non-empty"));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("entries", "entries must be finite"));
        }
        Ok(PhaseModulationMatrix {
            entries,
            scheme: Scheme::Custom,
            coding: None,
            virtual_tx: m,
            doppler_shifts: Vec::new(),
            pulse_selection: None,
            period: q,
        })
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn coding(&self) -> Option<Coding> {
        self.coding
    }

    pub fn virtual_tx(&self) -> usize {
        self.virtual_tx
    }

    /// Normalized Doppler shift per row; empty for non-DDMA schemes.
    pub fn doppler_shifts(&self) -> &[f64] {
        &self.doppler_shifts
    }

    /// Virtual-pulse index of each physical pulse (TB-DDMA only).
    pub fn pulse_selection(&self) -> Option<&[usize]> {
        self.pulse_selection.as_deref()
    }

    /// Column period of the coding.
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn num_tx(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_pulses(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_ddma_family(&self) -> bool {
        matches!(
            self.scheme,
            Scheme::Ddma | Scheme::EmptySpectrumDdma | Scheme::TbDdma
        )
    }

    /// Column q as a vector over transmitters.
    pub fn column(&self, q: usize) -> Vec<Complex64> {
        self.entries.column(q).to_vec()
    }
}

fn check_divides(name: &'static str, m: usize, q: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::param(name, "must be positive"));
    }
    if q == 0 || q % m != 0 {
        return Err(Error::param(
            "num_pulses",
            format!("{q} is not a positive multiple of {name} = {m}"),
        ));
    }
    Ok(())
}

/// Doppler shift of row m (0-based) as a reduced-free fraction num/den.
fn shift_fraction(m: usize, mv: usize, coding: Coding) -> (i64, i64) {
    match coding {
        Coding::FirstBin => (m as i64, mv as i64),
        Coding::Centered => (2 * m as i64 + 1 - mv as i64, 2 * mv as i64),
    }
}

fn ddma_entries(rows: usize, mv: usize, q: usize, coding: Coding) -> Array2<Complex64> {
    Array2::from_shape_fn((rows, q), |(m, k)| {
        let (num, den) = shift_fraction(m, mv, coding);
        cis_rational(num * k as i64, den)
    })
}

fn shifts(rows: usize, mv: usize, coding: Coding) -> Vec<f64> {
    (0..rows)
        .map(|m| {
            let (num, den) = shift_fraction(m, mv, coding);
            num as f64 / den as f64
        })
        .collect()
}

pub fn tdma_matrix(m: usize, q: usize) -> Result<PhaseModulationMatrix> {
    check_divides("num_tx", m, q)?;
    let entries = Array2::from_shape_fn((m, q), |(r, k)| {
        if k % m == r {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(PhaseModulationMatrix {
        entries,
        scheme: Scheme::Tdma,
        coding: None,
        virtual_tx: m,
        doppler_shifts: Vec::new(),
        pulse_selection: None,
        period: m,
    })
}

/// Row m carries `exp(-i 2π f_m q)`.
pub fn ddma_matrix(m: usize, q: usize, coding: Coding) -> Result<PhaseModulationMatrix> {
    check_divides("num_tx", m, q)?;
    Ok(PhaseModulationMatrix {
        entries: ddma_entries(m, m, q, coding),
        scheme: Scheme::Ddma,
        coding: Some(coding),
        virtual_tx: m,
        doppler_shifts: shifts(m, m, coding),
        pulse_selection: None,
        period: m,
    })
}

/// Sylvester Hadamard blocks repeated along slow time; M must be a power of two.
pub fn hadamard_matrix(m: usize, q: usize) -> Result<PhaseModulationMatrix> {
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::param(
            "num_tx",
            format!("Hadamard coding needs a power-of-two size, got {m}"),
        ));
    }
    check_divides("num_tx", m, q)?;
    let entries = Array2::from_shape_fn((m, q), |(r, k)| {
        let c = k % m;
        if (r & c).count_ones() % 2 == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(-1.0, 0.0)
        }
    });
    Ok(PhaseModulationMatrix {
        entries,
        scheme: Scheme::Hadamard,
        coding: None,
        virtual_tx: m,
        doppler_shifts: Vec::new(),
        pulse_selection: None,
        period: m,
    })
}

/// First M rows of the M_v-element DDMA matrix.
pub fn empty_spectrum_matrix(
    m: usize,
    mv: usize,
    q: usize,
    coding: Coding,
) -> Result<PhaseModulationMatrix> {
    if m == 0 {
        return Err(Error::param("num_tx", "must be positive"));
    }
    if m >= mv {
        return Err(Error::param(
            "virtual_tx",
            format!("must exceed num_tx = {m}, got {mv}"),
        ));
    }
    check_divides("virtual_tx", mv, q)?;
    Ok(PhaseModulationMatrix {
        entries: ddma_entries(m, mv, q, coding),
        scheme: Scheme::EmptySpectrumDdma,
        coding: Some(coding),
        virtual_tx: mv,
        doppler_shifts: shifts(m, mv, coding),
        pulse_selection: None,
        period: mv,
    })
}

/// sin θ of the beam formed by in-period pulse q of an M-column period, in (-1, 1].
pub fn beam_direction(q: usize, m: usize) -> f64 {
    let m = m as i64;
    let mut k = (2 * q as i64).rem_euclid(2 * m);
    if k > m {
        k -= 2 * m;
    }
    k as f64 / m as f64
}

pub fn virtual_beam_directions(m: usize) -> VirtualBeamSet {
    let m = m.max(1);
    let mut directions: Vec<f64> = (0..m).map(|q| beam_direction(q, m)).collect();
    directions.sort_by(f64::total_cmp);
    VirtualBeamSet {
        directions,
        period: m,
    }
}

/// TB-DDMA matrix: physical pulse k transmits virtual column
/// `(k / M)·M_v + beam_indices[k mod M] - 1` of the M_v-element DDMA code.
///
/// `beam_indices` are 1-based in-period virtual pulse indices, in transmit order.
pub fn tb_ddma_matrix(
    m: usize,
    mv: usize,
    q: usize,
    beam_indices: &[usize],
    coding: Coding,
) -> Result<PhaseModulationMatrix> {
    check_divides("num_tx", m, q)?;
    if mv < m {
        return Err(Error::param(
            "virtual_tx",
            format!("must be at least num_tx = {m}, got {mv}"),
        ));
    }
    if beam_indices.len() != m {
        return Err(Error::param(
            "beam_indices",
            format!("expected {m} indices, got {}", beam_indices.len()),
        ));
    }
    let mut seen = vec![false; mv];
    for &b in beam_indices {
        if b == 0 || b > mv {
            return Err(Error::param(
                "beam_indices",
                format!("index {b} outside 1..={mv}"),
            ));
        }
        if std::mem::replace(&mut seen[b - 1], true) {
            return Err(Error::param("beam_indices", format!("index {b} repeated")));
        }
    }
    let selection: Vec<usize> = (0..q)
        .map(|k| (k / m) * mv + beam_indices[k % m] - 1)
        .collect();
    let entries = Array2::from_shape_fn((m, q), |(r, k)| {
        let (num, den) = shift_fraction(r, mv, coding);
        cis_rational(num * selection[k] as i64, den)
    });
    Ok(PhaseModulationMatrix {
        entries,
        scheme: if mv == m { Scheme::Ddma } else { Scheme::TbDdma },
        coding: Some(coding),
        virtual_tx: mv,
        doppler_shifts: tb_physical_shifts(m, mv, coding),
        pulse_selection: if mv == m { None } else { Some(selection) },
        period: m,
    })
}

/// Physical-rate Doppler of TB-DDMA row r: the virtual shift scaled by M_v/M,
/// since one physical period of M pulses spans M_v virtual pulses.
fn tb_physical_shifts(m: usize, mv: usize, coding: Coding) -> Vec<f64> {
    (0..m)
        .map(|r| {
            let (num, den) = shift_fraction(r, mv, coding);
            let (n2, d2) = (num * mv as i64, den * m as i64);
            let rem = n2.rem_euclid(d2);
            if coding == Coding::Centered && 2 * rem > d2 {
                (rem - d2) as f64 / d2 as f64
            } else {
                rem as f64 / d2 as f64
            }
        })
        .collect()
}

/// Phase of row `tx` per pulse, in radians, unwrapped across pulses.
pub fn phase_trajectory(w: &PhaseModulationMatrix, tx: usize) -> Result<Vec<f64>> {
    if tx >= w.num_tx() {
        return Err(Error::param(
            "tx_index",
            format!("{tx} out of range for {} rows", w.num_tx()),
        ));
    }
    let row = w.entries.row(tx);
    let mut out = Vec::with_capacity(row.len());
    let mut prev = 0.0;
    for (k, z) in row.iter().enumerate() {
        let raw = if z.norm() == 0.0 { prev } else { z.arg() };
        let val = if k == 0 {
            raw
        } else {
            let d = raw - prev;
            prev + d - TAU * (d / TAU).round()
        };
        out.push(val);
        prev = val;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::steering_entries;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn tdma_examples() {
        let w = tdma_matrix(2, 4).unwrap();
        let want = [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]];
        for r in 0..2 {
            for k in 0..4 {
                assert_eq!(w.entries()[(r, k)], c(want[r][k], 0.0));
            }
        }
        let w = tdma_matrix(8, 512).unwrap();
        for k in 0..512 {
            let ones: Vec<_> = (0..8).filter(|&r| w.entries()[(r, k)] == c(1.0, 0.0)).collect();
            assert_eq!(ones, vec![k % 8]);
        }
        assert!(tdma_matrix(3, 8).is_err());
    }

    #[test]
    fn ddma_examples() {
        let w = ddma_matrix(4, 8, Coding::FirstBin).unwrap();
        assert!(w.entries().row(0).iter().all(|&z| z == c(1.0, 0.0)));
        for m in 0..4 {
            let want = Complex64::from_polar(1.0, -FRAC_PI_2 * m as f64);
            assert!((w.entries()[(m, 1)] - want).norm() < 1e-15);
        }
        assert!(ddma_matrix(3, 8, Coding::Centered).is_err());
        let cen = ddma_matrix(4, 8, Coding::Centered).unwrap();
        assert_eq!(cen.doppler_shifts(), &[-0.375, -0.125, 0.125, 0.375]);
    }

    #[test]
    fn hadamard_examples() {
        let w = hadamard_matrix(4, 4).unwrap();
        let want = [
            [1., 1., 1., 1.],
            [1., -1., 1., -1.],
            [1., 1., -1., -1.],
            [1., -1., -1., 1.],
        ];
        for r in 0..4 {
            for k in 0..4 {
                assert_eq!(w.entries()[(r, k)].re, want[r][k]);
            }
        }
        let w = hadamard_matrix(2, 4).unwrap();
        assert_eq!(w.entries()[(1, 3)].re, -1.0);
        assert!(hadamard_matrix(6, 12).is_err());
        assert!(hadamard_matrix(4, 6).is_err());
    }

    #[test]
    fn hadamard_gram_exact() {
        for m in [1usize, 2, 4, 8, 16] {
            let w = hadamard_matrix(m, 4 * m).unwrap();
            let g = w.entries().dot(&w.entries().t().mapv(|z| z.conj()));
            for i in 0..m {
                for j in 0..m {
                    let want = if i == j { (4 * m) as f64 } else { 0.0 };
                    assert_eq!(g[(i, j)], c(want, 0.0));
                }
            }
        }
    }

    #[test]
    fn empty_spectrum_examples() {
        let w = empty_spectrum_matrix(8, 16, 512, Coding::FirstBin).unwrap();
        assert_eq!(w.num_tx(), 8);
        for (m, f) in w.doppler_shifts().iter().enumerate() {
            assert_eq!(*f, m as f64 / 16.0);
        }
        let w = empty_spectrum_matrix(1, 2, 4, Coding::FirstBin).unwrap();
        assert!(w.entries().iter().all(|&z| z == c(1.0, 0.0)));
        assert!(empty_spectrum_matrix(8, 8, 512, Coding::FirstBin).is_err());
        assert!(empty_spectrum_matrix(8, 16, 520, Coding::FirstBin).is_err());
    }

    #[test]
    fn virtual_beam_examples() {
        assert_eq!(virtual_beam_directions(4).directions, vec![-0.5, 0.0, 0.5, 1.0]);
        assert_eq!(
            virtual_beam_directions(5).directions,
            vec![-0.8, -0.4, 0.0, 0.4, 0.8]
        );
        assert_eq!(virtual_beam_directions(1).directions, vec![0.0]);
    }

    #[test]
    fn tb_ddma_examples() {
        let w = tb_ddma_matrix(4, 20, 256, &[1, 2, 3, 4], Coding::FirstBin).unwrap();
        let sel = w.pulse_selection().unwrap();
        assert_eq!(sel.len(), 256);
        assert_eq!(&sel[..8], &[0, 1, 2, 3, 20, 21, 22, 23]);
        assert_eq!(*sel.last().unwrap(), 63 * 20 + 3);
        let w = tb_ddma_matrix(8, 16, 512, &[1, 2, 3, 4, 13, 14, 15, 16], Coding::FirstBin)
            .unwrap();
        assert_eq!(&w.pulse_selection().unwrap()[..9], &[0, 1, 2, 3, 12, 13, 14, 15, 16]);
        assert_eq!(w.scheme(), Scheme::TbDdma);
        assert!(tb_ddma_matrix(4, 20, 256, &[1, 2, 3], Coding::FirstBin).is_err());
        assert!(tb_ddma_matrix(4, 20, 256, &[0, 1, 2, 3], Coding::FirstBin).is_err());
        assert!(tb_ddma_matrix(4, 20, 256, &[1, 2, 3, 21], Coding::FirstBin).is_err());
        assert!(tb_ddma_matrix(4, 20, 256, &[1, 2, 3, 3], Coding::FirstBin).is_err());
    }

    #[test]
    fn tb_ddma_physical_shifts() {
        let w = tb_ddma_matrix(8, 16, 512, &[1, 2, 3, 4, 13, 14, 15, 16], Coding::FirstBin)
            .unwrap();
        let want: Vec<f64> = (0..8).map(|m| (m as f64 * 2.0 / 16.0) % 1.0).collect();
        assert_eq!(w.doppler_shifts(), &want[..]);
    }

    #[test]
    fn tb_ddma_trivial_selection_is_ddma() {
        for coding in [Coding::FirstBin, Coding::Centered] {
            for m in 1..9 {
                let idx: Vec<usize> = (1..=m).collect();
                let tb = tb_ddma_matrix(m, m, 8 * m, &idx, coding).unwrap();
                let dd = ddma_matrix(m, 8 * m, coding).unwrap();
                assert_eq!(tb.entries(), dd.entries());
                assert_eq!(tb.doppler_shifts(), dd.doppler_shifts());
            }
        }
    }

    #[test]
    fn trajectory_examples() {
        let w = ddma_matrix(4, 16, Coding::FirstBin).unwrap();
        assert!(phase_trajectory(&w, 0).unwrap().iter().all(|&p| p == 0.0));
        let ph = phase_trajectory(&w, 1).unwrap();
        for (k, p) in ph.iter().enumerate() {
            assert!((p + FRAC_PI_2 * k as f64).abs() < 1e-9);
        }
        assert!(phase_trajectory(&w, 4).is_err());
    }

    #[test]
    fn tb_trajectory_has_cyclic_jump() {
        let w = tb_ddma_matrix(8, 16, 64, &[1, 2, 3, 4, 13, 14, 15, 16], Coding::FirstBin)
            .unwrap();
        let ph = phase_trajectory(&w, 1).unwrap();
        let steps: Vec<f64> = ph.windows(2).map(|s| s[1] - s[0]).collect();
        // row 1 advances π/8 per virtual pulse; skipping 9 virtual pulses shows up
        // as a larger step at in-period positions 3 → 4
        let small = -PI / 8.0;
        assert!((steps[0] - small).abs() < 1e-9);
        assert!((steps[3] - small).abs() > 0.1);
    }

    fn one_period(w: &PhaseModulationMatrix) -> Array2<Complex64> {
        w.entries().slice(ndarray::s![.., ..w.period()]).to_owned()
    }

    proptest! {
        #[test]
        fn ddma_block_orthogonal(m in 1usize..12, centered in any::<bool>()) {
            let coding = if centered { Coding::Centered } else { Coding::FirstBin };
            let w = ddma_matrix(m, 4 * m, coding).unwrap();
            let om = one_period(&w);
            let g = om.t().mapv(|z| z.conj()).dot(&om);
            for i in 0..m {
                for j in 0..m {
                    let want = if i == j { m as f64 } else { 0.0 };
                    prop_assert!((g[(i, j)] - want).norm() < 1e-10);
                }
            }
        }

        #[test]
        fn ddma_rows_are_ramps(m in 1usize..10, reps in 1usize..6) {
            let w = ddma_matrix(m, m * reps, Coding::FirstBin).unwrap();
            for r in 0..m {
                for q in 0..m * reps {
                    let want = Complex64::from_polar(1.0, -TAU * r as f64 * q as f64 / m as f64);
                    prop_assert!((w.entries()[(r, q)] - want).norm() < 1e-9);
                    prop_assert!((w.entries()[(r, q)].norm() - 1.0).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn pulses_steer_orthogonal_beams(m in 1usize..12) {
            let w = ddma_matrix(m, m, Coding::FirstBin).unwrap();
            let beams = virtual_beam_directions(m).directions;
            for q in 0..m {
                let col = w.column(q);
                let own = beam_direction(q, m);
                for &s in &beams {
                    let a = steering_entries(m, 0.5, s);
                    let g: Complex64 = a.iter().zip(&col).map(|(x, y)| x.conj() * y).sum();
                    if s == own {
                        prop_assert!((g.norm() - m as f64).abs() < 1e-10);
                    } else {
                        prop_assert!(g.norm() < 1e-10);
                    }
                }
            }
        }

        #[test]
        fn centered_is_scaled_first_bin(m in 1usize..12, reps in 1usize..4) {
            let q = m * reps;
            let fb = ddma_matrix(m, q, Coding::FirstBin).unwrap();
            let ce = ddma_matrix(m, q, Coding::Centered).unwrap();
            for k in 0..q {
                let xi = Complex64::from_polar(1.0, PI * k as f64 * (1.0 - 1.0 / m as f64));
                for r in 0..m {
                    prop_assert!((ce.entries()[(r, k)] - xi * fb.entries()[(r, k)]).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn periodic_columns(m in 1usize..8, extra in 1usize..8, reps in 2usize..4) {
            let mv = m + extra;
            let w = empty_spectrum_matrix(m, mv, mv * reps, Coding::FirstBin).unwrap();
            for k in mv..mv * reps {
                for r in 0..m {
                    prop_assert_eq!(w.entries()[(r, k)], w.entries()[(r, k - mv)]);
                }
            }
        }
    }
}
