use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Taylor taper of `length` coefficients with `nbar` nearly constant-level
/// sidelobes at `sidelobe_db` (negative, relative to the mainlobe peak).
/// Coefficients are normalized to a maximum of 1.
pub fn taylor_window(length: usize, nbar: usize, sidelobe_db: f64) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::param("length", "must be at least 1"));
    }
    if nbar == 0 {
        return Err(Error::param("nbar", "must be at least 1"));
    }
    if !(sidelobe_db.is_finite() && sidelobe_db < 0.0) {
        return Err(Error::param(
            "sidelobe_db",
            format!("must be a finite negative level, got {sidelobe_db}"),
        ));
    }
    if length == 1 {
        return Ok(vec![1.0]);
    }
    let b = 10f64.powf(-sidelobe_db / 20.0);
    let a = b.acosh() / PI;
    let a2 = a * a;
    let nb = nbar as f64;
    let s2 = nb * nb / (a2 + (nb - 0.5).powi(2));
    let ms: Vec<f64> = (1..nbar).map(|m| m as f64).collect();
    let fm: Vec<f64> = ms
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let numer: f64 = ms
                .iter()
                .map(|&mj| 1.0 - m * m / s2 / (a2 + (mj - 0.5).powi(2)))
                .product();
            let denom: f64 = ms
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &mj)| 1.0 - m * m / (mj * mj))
                .product();
            sign * numer / (2.0 * denom)
        })
        .collect();
    let len = length as f64;
    let w: Vec<f64> = (0..length)
        .map(|n| {
            let x = n as f64 - len / 2.0 + 0.5;
            1.0 + 2.0
                * ms.iter()
                    .zip(&fm)
                    .map(|(&m, &f)| f * (2.0 * PI * m * x / len).cos())
                    .sum::<f64>()
        })
        .collect();
    let peak = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(w.into_iter().map(|v| v / peak).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::steering_entries;
    use num_complex::Complex64;

    #[test]
    fn matches_reference_values() {
        // reference coefficients from an independent implementation
        let want16 = [
            0.253881838267684, 0.324244411374622, 0.446344388069445, 0.592433218498834,
            0.736783576349914, 0.860807308857103, 0.951702524815262, 1.0,
        ];
        let w = taylor_window(16, 4, -30.0).unwrap();
        for (i, v) in want16.iter().enumerate() {
            assert!((w[i] - v).abs() < 1e-12);
            assert!((w[15 - i] - v).abs() < 1e-12);
        }
        let want7 = [
            0.290095312727147, 0.578212601109221, 0.878008224865283, 1.0, 0.878008224865283,
            0.578212601109221, 0.290095312727147,
        ];
        let w = taylor_window(7, 4, -30.0).unwrap();
        for (a, b) in w.iter().zip(want7) {
            assert!((a - b).abs() < 1e-12);
        }
        let w = taylor_window(10, 5, -35.0).unwrap();
        assert!((w[0] - 0.1926249082927681).abs() < 1e-12);
        assert!((w[3] - 0.8607123450759196).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(taylor_window(1, 4, -30.0).unwrap(), vec![1.0]);
        assert!(taylor_window(8, 4, f64::NEG_INFINITY).is_err());
        assert!(taylor_window(8, 4, 0.0).is_err());
        assert!(taylor_window(8, 4, f64::NAN).is_err());
        assert!(taylor_window(0, 4, -30.0).is_err());
        assert!(taylor_window(8, 0, -30.0).is_err());
        assert_eq!(taylor_window(5, 1, -30.0).unwrap(), vec![1.0; 5]);
    }

    #[test]
    fn first_sidelobe_below_target() {
        let w = taylor_window(16, 4, -30.0).unwrap();
        let grid: Vec<f64> = (0..=20000).map(|i| -1.0 + i as f64 / 10000.0).collect();
        let pat: Vec<f64> = grid
            .iter()
            .map(|&s| {
                steering_entries(16, 0.5, s)
                    .iter()
                    .zip(&w)
                    .map(|(a, &x)| a.conj() * x)
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .collect();
        let peak = pat.iter().cloned().fold(0.0, f64::max);
        let mut lobes: Vec<f64> = (1..pat.len() - 1)
            .filter(|&i| pat[i] > pat[i - 1] && pat[i] >= pat[i + 1])
            .map(|i| 10.0 * (pat[i] / peak).log10())
            .filter(|&db| db < -1.0)
            .collect();
        lobes.sort_by(f64::total_cmp);
        let highest = *lobes.last().unwrap();
        assert!(highest <= -29.0, "{highest}");
    }
}
