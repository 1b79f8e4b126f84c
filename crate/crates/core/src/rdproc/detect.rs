use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{doppler_offset, range_doppler_map, RangeDopplerMap, Window};
use crate::error::{Error, Result};
use crate::modmat::Scheme;
use crate::scene::DataCube;

/// Fused detection mask G with the threshold that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMatrix {
    pub data: Array2<bool>,
    pub threshold: f64,
}

impl BinaryMatrix {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn row(&self, p: usize) -> Vec<bool> {
        self.data.row(p).to_vec()
    }

    /// (range bin, column) of every set cell, row-major.
    pub fn ones(&self) -> Vec<(usize, usize)> {
        self.data
            .indexed_iter()
            .filter_map(|(ix, &b)| b.then_some(ix))
            .collect()
    }
}

/// Detection threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `scale` × median magnitude pooled over all receivers.
    MedianScale(f64),
    /// Absolute magnitude.
    Fixed(f64),
    /// Level in dB below the strongest cell of all maps.
    PeakRelativeDb(f64),
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::MedianScale(12.0)
    }
}

impl ThresholdRule {
    pub fn evaluate(&self, maps: &[RangeDopplerMap]) -> Result<f64> {
        match *self {
            ThresholdRule::MedianScale(s) => estimate_threshold(maps, s),
            ThresholdRule::Fixed(t) => {
                if maps.is_empty() {
                    return Err(Error::param("maps", "at least one map is required"));
                }
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::param("threshold", "must be finite and >= 0"));
                }
                Ok(t)
            }
            ThresholdRule::PeakRelativeDb(db) => {
                if maps.is_empty() {
                    return Err(Error::param("maps", "at least one map is required"));
                }
                if !db.is_finite() {
                    return Err(Error::param("threshold", "dB level must be finite"));
                }
                let peak = maps
                    .iter()
                    .flat_map(|m| m.data.iter())
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                Ok(peak * 10f64.powf(-db.abs() / 20.0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub threshold: ThresholdRule,
    /// Thin G to comb-consistent peaks before the sequence test.
    #[serde(default = "yes")]
    pub thinning: bool,
}

fn yes() -> bool {
    true
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            window: Window::Hann,
            threshold: ThresholdRule::default(),
            thinning: true,
        }
    }
}

/// One accepted start of the sequence test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub range_bin: usize,
    pub range_m: f64,
    /// Column of the first comb tooth.
    pub start_bin: usize,
    /// Observed normalized Doppler of the first tooth.
    pub observed_doppler: f64,
    /// Unambiguous normalized Doppler in (-0.5, 0.5].
    pub recovered_doppler: f64,
    pub velocity_mps: f64,
    /// Receivers whose own mask holds every tooth of this comb.
    pub confidence: usize,
    /// First start in its range row.
    pub first_in_row: bool,
    /// Last start in its range row.
    pub last_in_row: bool,
}

/// Local maximum of the combined power over a 3×3 neighbourhood, Doppler cyclic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub range_bin: usize,
    pub doppler_col: usize,
    pub range_m: f64,
    pub doppler_norm: f64,
    /// Σ_n |Z|² in dB.
    pub power_db: f64,
}

/// Intermediate products of the empty-spectrum pipeline.
#[derive(Debug, Clone)]
pub struct DetectionProducts {
    pub maps: Vec<RangeDopplerMap>,
    pub binary: BinaryMatrix,
    pub thinned: BinaryMatrix,
    pub detections: Vec<Detection>,
}

/// The one or two middle order statistics of `v`.
fn middle(v: &mut [f64]) -> (f64, f64) {
    let n = v.len();
    let mid = n / 2;
    let (lo, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        (upper, upper)
    } else {
        (lo.iter().cloned().fold(f64::NEG_INFINITY, f64::max), upper)
    }
}

/// `scale` × median of |Z| pooled over all maps.
pub fn estimate_threshold(maps: &[RangeDopplerMap], scale: f64) -> Result<f64> {
    if maps.is_empty() || maps.iter().all(|m| m.data.is_empty()) {
        return Err(Error::param("maps", "at least one non-empty map is required"));
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::param("scale_factor", "must be finite and >= 0"));
    }
    // order statistics of |Z|² give those of |Z| without a square root per cell
    let mut pow: Vec<f64> = maps
        .iter()
        .flat_map(|m| m.data.iter())
        .map(|z| z.norm_sqr())
        .collect();
    let (a, b) = middle(&mut pow);
    Ok(scale * 0.5 * (a.sqrt() + b.sqrt()))
}

fn check_same_dims(maps: &[RangeDopplerMap]) -> Result<(usize, usize)> {
    let first = maps
        .first()
        .ok_or_else(|| Error::param("maps", "at least one map is required"))?;
    let dim = first.data.dim();
    if let Some(m) = maps.iter().find(|m| m.data.dim() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "maps of shape {:?} and {:?}",
            dim,
            m.data.dim()
        )));
    }
    Ok(dim)
}

/// `G = AND_n [ |Z_n| >= T ]`.
pub fn binary_detection(maps: &[RangeDopplerMap], threshold: f64) -> Result<BinaryMatrix> {
    let dim = check_same_dims(maps)?;
    let mut g = Array2::from_elem(dim, true);
    let t2 = threshold * threshold;
    for m in maps {
        g.zip_mut_with(&m.data, |b, z| *b &= z.norm_sqr() >= t2);
    }
    Ok(BinaryMatrix { data: g, threshold })
}

fn combined_power(maps: &[RangeDopplerMap]) -> Array2<f64> {
    let mut s = Array2::<f64>::zeros(maps[0].data.dim());
    for m in maps {
        s.zip_mut_with(&m.data, |a, z| *a += z.norm_sqr());
    }
    s
}

/// Keeps the cells of `g` consistent with a comb of teeth spaced `spacing`
/// Doppler bins: the cell's residue must be a cyclic local maximum of the row's
/// power folded modulo `spacing`, and the folded power must peak in range.
pub fn comb_thin(g: &BinaryMatrix, maps: &[RangeDopplerMap], spacing: usize) -> Result<BinaryMatrix> {
    let (np, nq) = check_same_dims(maps)?;
    if g.data.dim() != (np, nq) {
        return Err(Error::DimensionMismatch("binary matrix and maps differ".into()));
    }
    if spacing == 0 || nq % spacing != 0 {
        return Err(Error::param(
            "spacing",
            format!("{spacing} does not divide {nq} Doppler bins"),
        ));
    }
    let s = combined_power(maps);
    let mut folded = Array2::<f64>::zeros((np, spacing));
    for ((p, c), v) in s.indexed_iter() {
        folded[(p, c % spacing)] += v;
    }
    let mut out = Array2::from_elem((np, nq), false);
    for ((p, c), &set) in g.data.indexed_iter() {
        if !set {
            continue;
        }
        let r = c % spacing;
        let f = folded[(p, r)];
        let left = folded[(p, (r + spacing - 1) % spacing)];
        let right = folded[(p, (r + 1) % spacing)];
        let doppler_peak = spacing == 1 || (f >= left && f > right);
        let up = p == 0 || f >= folded[(p - 1, r)];
        let down = p + 1 == np || f > folded[(p + 1, r)];
        out[(p, c)] = doppler_peak && up && down;
    }
    Ok(BinaryMatrix {
        data: out,
        threshold: g.threshold,
    })
}

/// Starts q at which the cyclic window of length `Q·M/M_v` equals M copies of
/// one set bin followed by `Q/M_v - 1` clear bins.
pub fn sequence_test(g_row: &[bool], m: usize, mv: usize) -> Result<Vec<usize>> {
    let q = g_row.len();
    if m == 0 || mv == 0 {
        return Err(Error::param("num_tx", "M and M_v must be positive"));
    }
    if m > mv {
        return Err(Error::param(
            "virtual_tx",
            format!("M = {m} exceeds M_v = {mv}"),
        ));
    }
    if q == 0 || q % mv != 0 {
        return Err(Error::param(
            "virtual_tx",
            format!("M_v = {mv} does not divide the row length {q}"),
        ));
    }
    let s = q / mv;
    let len = s * m;
    Ok((0..q)
        .filter(|&start| (0..len).all(|i| g_row[(start + i) % q] == (i % s == 0)))
        .collect())
}

/// Wraps a normalized Doppler value into (-0.5, 0.5].
pub fn wrap_half(x: f64) -> f64 {
    let mut d = x;
    if d.abs() > 4.0 {
        d -= d.round();
    }
    while d > 0.5 {
        d -= 1.0;
    }
    while d <= -0.5 {
        d += 1.0;
    }
    d
}

/// Unambiguous Doppler `ψ(f_ob - f_1)`.
pub fn recover_doppler(f_ob: f64, f_1: f64) -> f64 {
    wrap_half(f_ob - f_1)
}

/// Local maxima of Σ_n|Z|² among the set cells of `g`, 3×3 neighbourhood with
/// cyclic Doppler; ties go to the earlier cell.
pub fn find_peaks(maps: &[RangeDopplerMap], g: &BinaryMatrix) -> Result<Vec<Peak>> {
    let (np, nq) = check_same_dims(maps)?;
    if g.data.dim() != (np, nq) {
        return Err(Error::DimensionMismatch("binary matrix and maps differ".into()));
    }
    let s = combined_power(maps);
    let mut peaks = Vec::new();
    for ((p, c), &set) in g.data.indexed_iter() {
        if !set {
            continue;
        }
        let v = s[(p, c)];
        let mut is_peak = true;
        'nb: for dp in -1i64..=1 {
            let pp = p as i64 + dp;
            if pp < 0 || pp >= np as i64 {
                continue;
            }
            for dc in -1i64..=1 {
                if dp == 0 && dc == 0 {
                    continue;
                }
                let cc = (c as i64 + dc).rem_euclid(nq as i64) as usize;
                let u = s[(pp as usize, cc)];
                let later = (dp, dc) > (0, 0);
                if (later && u > v) || (!later && u >= v) {
                    is_peak = false;
                    break 'nb;
                }
            }
        }
        if is_peak {
            peaks.push(Peak {
                range_bin: p,
                doppler_col: c,
                range_m: maps[0].range_axis_m[p],
                doppler_norm: maps[0].doppler_axis[c],
                power_db: 10.0 * v.max(f64::MIN_POSITIVE).log10(),
            });
        }
    }
    Ok(peaks)
}

/// Full empty-spectrum pipeline, returning every intermediate product.
pub fn process_empty_spectrum(cube: &DataCube, cfg: &DetectConfig) -> Result<DetectionProducts> {
    let w = &cube.modulation;
    match w.scheme() {
        Scheme::EmptySpectrumDdma => {}
        Scheme::TbDdma => {
            return Err(Error::Unsupported(
                "TB-DDMA data occupies the whole Doppler band; run detection on the \
                 empty-spectrum cube before pulse resampling"
                    .into(),
            ))
        }
        other => {
            return Err(Error::Unsupported(format!(
                "ambiguity recovery needs an empty-spectrum DDMA cube, got {other:?}"
            )))
        }
    }
    let (m, mv) = (w.num_tx(), w.virtual_tx());
    let maps = range_doppler_map(cube, cfg.window)?;
    let threshold = cfg.threshold.evaluate(&maps)?;
    let binary = binary_detection(&maps, threshold)?;
    let (np, nq) = binary.data.dim();
    let spacing = nq / mv;
    let thinned = if cfg.thinning {
        comb_thin(&binary, &maps, spacing)?
    } else {
        binary.clone()
    };
    let f1 = w.doppler_shifts()[0];
    let off = doppler_offset(nq) as i64;
    let mut detections = Vec::new();
    for p in 0..np {
        let row = thinned.row(p);
        if !row.iter().any(|&b| b) {
            continue;
        }
        let starts = sequence_test(&row, m, mv)?;
        let last = starts.len().saturating_sub(1);
        for (i, &start) in starts.iter().enumerate() {
            let f_ob = (start as i64 - off) as f64 / nq as f64;
            let recovered = recover_doppler(f_ob, f1);
            let confidence = maps
                .iter()
                .filter(|z| {
                    (0..m).all(|k| z.data[(p, (start + k * spacing) % nq)].norm() >= threshold)
                })
                .count();
            detections.push(Detection {
                range_bin: p,
                range_m: maps[0].range_axis_m[p],
                start_bin: start,
                observed_doppler: f_ob,
                recovered_doppler: recovered,
                velocity_mps: cube.params.velocity_from_doppler(recovered),
                confidence,
                first_in_row: i == 0,
                last_in_row: i == last,
            });
        }
    }
    Ok(DetectionProducts {
        maps,
        binary,
        thinned,
        detections,
    })
}

/// Range-Doppler map, threshold, fused mask, sequence test and Doppler recovery.
pub fn detect_and_estimate(cube: &DataCube, cfg: &DetectConfig) -> Result<Vec<Detection>> {
    Ok(process_empty_spectrum(cube, cfg)?.detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modmat::{empty_spectrum_matrix, tdma_matrix, Coding};
    use crate::params::RadarParams;
    use crate::rdproc::column_of_bin;
    use crate::scene::{simulate_rx, NoiseConfig, Target};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn map_of(data: Array2<Complex64>) -> RangeDopplerMap {
        let (p, q) = data.dim();
        RangeDopplerMap {
            data,
            range_axis_m: (0..p).map(|x| x as f64).collect(),
            doppler_axis: (0..q).map(|c| super::super::bin_of_column(c, q) as f64 / q as f64).collect(),
        }
    }

    fn real_map(v: Array2<f64>) -> RangeDopplerMap {
        map_of(v.mapv(|x| Complex64::new(x, 0.0)))
    }

    #[test]
    fn zero_map_zero_threshold() {
        let m = real_map(Array2::zeros((4, 4)));
        assert_eq!(estimate_threshold(&[m], 12.0).unwrap(), 0.0);
        assert!(estimate_threshold(&[], 12.0).is_err());
    }

    #[test]
    fn rayleigh_threshold() {
        // oracle: median of a Rayleigh(σ=1) magnitude is sqrt(2 ln 2)
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data = Array2::from_shape_fn((1000, 1000), |_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(a, b)
        });
        let t = estimate_threshold(&[map_of(data)], 12.0).unwrap();
        let want = 12.0 * (2.0 * 2f64.ln()).sqrt();
        assert!((t - want).abs() < 0.05, "{t} vs {want}");
    }

    #[test]
    fn strong_peak_moves_median_one_order_statistic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let base = Array2::from_shape_fn((16, 17), |_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            a.abs()
        });
        let mut sorted: Vec<f64> = base.iter().cloned().collect();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let mut peaked = base.clone();
        peaked[(3, 3)] = 1e9;
        let t = estimate_threshold(&[real_map(peaked)], 1.0).unwrap();
        assert!(t >= sorted[mid - 1] && t <= sorted[mid + 1]);
    }

    #[test]
    fn binary_fusion() {
        let a = real_map(Array2::from_shape_vec((1, 4), vec![5., 0., 5., 0.]).unwrap());
        let b = real_map(Array2::from_shape_vec((1, 4), vec![0., 5., 0., 5.]).unwrap());
        assert_eq!(binary_detection(&[a.clone()], 10.0).unwrap().count_ones(), 0);
        assert_eq!(binary_detection(&[a.clone()], 5.0).unwrap().count_ones(), 2);
        assert_eq!(binary_detection(&[a, b], 1.0).unwrap().count_ones(), 0);
        let c = real_map(Array2::zeros((2, 4)));
        let d = real_map(Array2::zeros((1, 4)));
        assert!(binary_detection(&[c, d], 1.0).is_err());
    }

    #[test]
    fn sequence_test_examples() {
        assert!(sequence_test(&[false; 32], 8, 16).unwrap().is_empty());
        let mut row = [false; 32];
        for k in (0..16).step_by(2) {
            row[k] = true;
        }
        assert_eq!(sequence_test(&row, 8, 16).unwrap(), vec![0]);
        assert!(sequence_test(&row, 8, 12).is_err());
        assert!(sequence_test(&row, 17, 16).is_err());
        assert!(sequence_test(&row, 0, 16).is_err());
    }

    #[test]
    fn interleaved_combs_give_extra_starts() {
        // two combs three slots apart: 11 consecutive teeth, starts 0..=3
        let mut row = [false; 64];
        for k in 0..8 {
            row[4 * k] = true;
            row[4 * (k + 3)] = true;
        }
        let starts = sequence_test(&row, 8, 16).unwrap();
        assert_eq!(starts, vec![0, 4, 8, 12]);
    }

    #[test]
    fn psi_examples() {
        assert!((wrap_half(0.9) + 0.1).abs() < 1e-15);
        assert_eq!(wrap_half(0.3), 0.3);
        assert_eq!(wrap_half(0.5), 0.5);
        assert_eq!(wrap_half(-0.5), 0.5);
        assert_eq!(recover_doppler(-9.0 / 40.0, 0.0), -9.0 / 40.0);
        let p = RadarParams::automotive(12e-6, 1024);
        assert!((p.velocity_from_doppler(-9.0 / 40.0) + 35.0).abs() < 0.7);
        assert!((wrap_half(1e6 + 0.25) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn find_peaks_cyclic() {
        let mut v = Array2::zeros((3, 8));
        v[(1, 0)] = 5.0;
        v[(1, 7)] = 4.0;
        v[(1, 4)] = 3.0;
        v[(1, 5)] = 3.0;
        let m = real_map(v);
        let g = binary_detection(&[m.clone()], 1.0).unwrap();
        let peaks = find_peaks(&[m], &g).unwrap();
        let cols: Vec<usize> = peaks.iter().map(|p| p.doppler_col).collect();
        assert_eq!(cols, vec![0, 4]);
    }

    #[test]
    fn comb_thin_keeps_folded_peak() {
        let mut v = Array2::zeros((3, 8));
        for c in [1usize, 5] {
            v[(1, c)] = 10.0;
            v[(1, c + 1)] = 6.0;
            v[(0, c)] = 5.0;
        }
        let m = real_map(v);
        let g = binary_detection(&[m.clone()], 1.0).unwrap();
        let t = comb_thin(&g, &[m], 4).unwrap();
        assert_eq!(t.ones(), vec![(1, 1), (1, 5)]);
    }

    fn es_params(q: usize, p: usize, n: usize) -> RadarParams {
        let mut r = RadarParams::automotive(12e-6, p);
        r.num_pulses = q;
        r.num_rx = n;
        r
    }

    #[test]
    fn rejects_non_empty_spectrum() {
        let p = es_params(64, 16, 1);
        let c = simulate_rx(&p, &tdma_matrix(8, 64).unwrap(), &[], &NoiseConfig::default()).unwrap();
        assert!(detect_and_estimate(&c, &DetectConfig::default()).is_err());
    }

    #[test]
    fn noise_only_scene_is_empty() {
        let p = es_params(64, 32, 2);
        let w = empty_spectrum_matrix(8, 16, 64, Coding::FirstBin).unwrap();
        let c = simulate_rx(&p, &w, &[], &NoiseConfig::with_snr(0.0, 3)).unwrap();
        assert!(detect_and_estimate(&c, &DetectConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn centered_coding_recovers_doppler() {
        let (q, np) = (128, 32);
        let p = es_params(q, np, 2);
        let w = empty_spectrum_matrix(8, 16, q, Coding::Centered).unwrap();
        let nu = -37.0 / q as f64;
        let v = p.velocity_from_doppler(nu);
        let c = simulate_rx(&p, &w, &[Target::new(4.0, v)], &NoiseConfig::default()).unwrap();
        let cfg = DetectConfig {
            threshold: ThresholdRule::PeakRelativeDb(20.0),
            ..DetectConfig::default()
        };
        let d = detect_and_estimate(&c, &cfg).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0].recovered_doppler - nu).abs() < 1e-12);
        assert_eq!(d[0].confidence, 2);
        assert!(d[0].first_in_row && d[0].last_in_row);
    }

    proptest! {
        #[test]
        fn psi_periodic_and_in_range(x in -50.0f64..50.0) {
            let y = wrap_half(x);
            prop_assert!(y > -0.5 && y <= 0.5);
            prop_assert!((wrap_half(x + 1.0) - y).abs() < 1e-9 || (wrap_half(x + 1.0) - y).abs() > 1.0 - 1e-9);
            prop_assert!(((x - y) - (x - y).round()).abs() < 1e-9);
        }

        #[test]
        fn sequence_test_rotation_covariant(
            bits in proptest::collection::vec(any::<bool>(), 64), k in 0usize..16, m in 1usize..16
        ) {
            let (q, mv) = (64usize, 16usize);
            let s = q / mv;
            let base = sequence_test(&bits, m, mv).unwrap();
            let rot: Vec<bool> = (0..q).map(|i| bits[(i + k * s) % q]).collect();
            let mut got = sequence_test(&rot, m, mv).unwrap();
            let mut want: Vec<usize> = base.iter().map(|&b| (b + q - k * s) % q).collect();
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn and_fusion_monotone(
            a in proptest::collection::vec(0.0f64..2.0, 12),
            b in proptest::collection::vec(0.0f64..2.0, 12),
            t in 0.0f64..2.0,
        ) {
            let ma = real_map(Array2::from_shape_vec((3, 4), a).unwrap());
            let mb = real_map(Array2::from_shape_vec((3, 4), b).unwrap());
            let one = binary_detection(&[ma.clone()], t).unwrap();
            let two = binary_detection(&[ma, mb], t).unwrap();
            for (x, y) in one.data.iter().zip(two.data.iter()) {
                prop_assert!(!(*y && !*x));
            }
        }
    }

    #[test]
    fn single_target_bin_sweep_small() {
        let (q, np) = (64, 16);
        let p = es_params(q, np, 1);
        let w = empty_spectrum_matrix(8, 16, q, Coding::FirstBin).unwrap();
        let cfg = DetectConfig {
            threshold: ThresholdRule::PeakRelativeDb(20.0),
            ..DetectConfig::default()
        };
        for k in -(q as i64) / 2 + 1..=(q as i64) / 2 {
            let nu = k as f64 / q as f64;
            let t = Target::new(3.0, p.velocity_from_doppler(nu));
            let c = simulate_rx(&p, &w, &[t], &NoiseConfig::default()).unwrap();
            let d = detect_and_estimate(&c, &cfg).unwrap();
            assert_eq!(d.len(), 1, "bin {k}");
            assert_eq!(d[0].start_bin, column_of_bin(k, q));
            assert!((d[0].recovered_doppler - nu).abs() < 1e-12, "bin {k}");
        }
    }
}
