//! Built-in reproductions of the four simulation examples.
//!
//! Common setup: 79 GHz carrier, 300 MHz sweep, Q = 512, M = 8, N = 12,
//! d_t = λ/2, d_r = M·d_t, Swerling I targets at -10 dB input SNR.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::export;
use crate::modmat::{tb_ddma_matrix, Coding};
use crate::params::{derive_metrics, RadarParams};
use crate::rdproc::{binary_detection, demultiplex, range_doppler_map, DetectConfig, Peak};
use crate::scenario::{process_and_export, write_pattern, ModulationSpec, ResultBundle, RunOptions};
use crate::scene::{simulate_rx, Fading, NoiseConfig, Target};
use crate::tbdesign::{design_tb, slow_time_tb_pattern, taylor_window, uniform_grid, TbDesignConfig};

pub const DESK_FAST_TIME_SAMPLES: usize = 1024;
pub const DEFAULT_SEED: u64 = 1;
pub const INPUT_SNR_DB: f64 = -10.0;
pub const SHORT_CHIRP_S: f64 = 1.5e-6;
/// M·t_p, the TDMA per-element interval and the empty-spectrum chirp time.
pub const LONG_CHIRP_S: f64 = 12e-6;
pub const VIRTUAL_TX: usize = 16;
pub const EXAMPLE3_BEAMS: [usize; 8] = [1, 2, 3, 4, 13, 14, 15, 16];
pub const EXAMPLE4_VIRTUAL_TX: usize = 24;
pub const EXAMPLE4_BEAMS: [usize; 8] = [1, 2, 3, 4, 5, 22, 23, 24];

fn swerling(list: &[(f64, f64)]) -> Vec<Target> {
    list.iter()
        .map(|&(r, v)| Target::new(r, v).with_fading(Fading::SwerlingI))
        .collect()
}

pub fn example1_ddma_targets() -> Vec<Target> {
    swerling(&[(50.0, 0.0), (100.0, 40.0), (150.0, -40.0)])
}

pub fn example1_tdma_targets() -> Vec<Target> {
    swerling(&[(400.0, 0.0), (800.0, 40.0), (1200.0, -40.0)])
}

pub fn example2_targets() -> Vec<Target> {
    swerling(&[(400.0, 40.0), (800.0, -35.0), (1200.0, -15.0)])
}

/// Range bin a target lands on, including the fast-time Doppler shift.
pub fn expected_range_bin(params: &RadarParams, t: &Target) -> usize {
    let p = params.fast_time_samples as i64;
    let x = t.range_m / params.range_resolution_m() + params.normalized_doppler(t.velocity_mps);
    (x.round() as i64).rem_euclid(p) as usize
}

fn resolve(opts: &RunOptions, id: u8) -> (u64, usize, std::path::PathBuf) {
    (
        opts.seed.unwrap_or(DEFAULT_SEED),
        opts.fast_time_samples.unwrap_or(DESK_FAST_TIME_SAMPLES),
        opts.out_dir
            .clone()
            .unwrap_or_else(|| std::path::PathBuf::from(format!("{}/example{id}", crate::scenario::DEFAULT_OUT_DIR))),
    )
}

/// Runs one example and writes its data files and `summary.json`.
pub fn reproduce(example_id: u8, opts: &RunOptions) -> Result<ResultBundle> {
    let (seed, p, out) = resolve(opts, example_id);
    let mut bundle = ResultBundle::new(format!("example {example_id}"), seed, &out);
    match example_id {
        1 => example1(&mut bundle, seed, p, opts.plot)?,
        2 => example2(&mut bundle, seed, p, opts.plot)?,
        3 => example3(&mut bundle, seed, p, opts.plot)?,
        4 => example4(&mut bundle, seed, opts.plot)?,
        other => {
            return Err(Error::param(
                "example_id",
                format!("must be 1, 2, 3 or 4, got {other}"),
            ))
        }
    }
    bundle.write_summary()?;
    Ok(bundle)
}

/// Peaks whose range row is within ±`tol` rows of `row` (cyclic in P).
pub fn peaks_near(peaks: &[Peak], row: usize, tol: usize, p: usize) -> Vec<Peak> {
    peaks
        .iter()
        .filter(|k| {
            let d = (k.range_bin as i64 - row as i64).rem_euclid(p as i64) as usize;
            d.min(p - d) <= tol
        })
        .cloned()
        .collect()
}

fn example1(b: &mut ResultBundle, seed: u64, p: usize, plot: bool) -> Result<()> {
    let cfg = DetectConfig::default();
    let noise = NoiseConfig::with_snr(INPUT_SNR_DB, seed);

    let ddma = RadarParams::automotive(SHORT_CHIRP_S, p);
    let spec = ModulationSpec::Ddma { coding: Coding::FirstBin };
    let w = spec.build(&ddma)?;
    let targets = example1_ddma_targets();
    let cube = simulate_rx(&ddma, &w, &targets, &noise)?;
    let metrics = derive_metrics(&ddma)?;
    b.metrics = Some(metrics);
    b.set("ddma_r_max_m", metrics.max_unambiguous_range_m);
    b.set("ddma_v_max_mps", metrics.max_unambiguous_velocity_mps);
    process_and_export(&cube, &cfg, "ddma_", plot, b)?;
    let peaks = b.peak_sets["ddma_peaks"].clone();
    let q = ddma.num_pulses;
    let spacing = q / ddma.num_tx;
    for (i, t) in targets.iter().enumerate() {
        let near = peaks_near(&peaks, expected_range_bin(&ddma, t), 1, p);
        let mut cols: Vec<usize> = near.iter().map(|k| k.doppler_col).collect();
        cols.sort_unstable();
        let spaced = !cols.is_empty()
            && (0..cols.len()).all(|j| {
                let next = cols[(j + 1) % cols.len()];
                (next as i64 - cols[j] as i64).rem_euclid(q as i64) as usize == spacing
            });
        let db: Vec<f64> = near.iter().map(|k| k.power_db).collect();
        let spread = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - db.iter().cloned().fold(f64::INFINITY, f64::min);
        let n = i + 1;
        b.set(format!("ddma_target{n}_peaks"), near.len() as f64);
        b.set(format!("ddma_target{n}_spacing_ok"), spaced as u8 as f64);
        b.set(format!("ddma_target{n}_spread_db"), if near.is_empty() { f64::NAN } else { spread });
    }

    let tdma = RadarParams::automotive(LONG_CHIRP_S, p);
    let w = ModulationSpec::Tdma.build(&tdma)?;
    let targets = example1_tdma_targets();
    let cube = simulate_rx(&tdma, &w, &targets, &noise)?;
    process_and_export(&cube, &cfg, "tdma_", plot, b)?;
    let peaks = b.peak_sets["tdma_peaks"].clone();
    for (i, t) in targets.iter().enumerate() {
        let want = expected_range_bin(&tdma, t);
        let best = peaks_near(&peaks, want, 2, p)
            .into_iter()
            .max_by(|a, c| a.power_db.total_cmp(&c.power_db));
        let n = i + 1;
        b.set(format!("tdma_target{n}_expected_bin"), want as f64);
        b.set(
            format!("tdma_target{n}_bin"),
            best.map_or(f64::NAN, |k| k.range_bin as f64),
        );
    }
    Ok(())
}

fn example2(b: &mut ResultBundle, seed: u64, p: usize, plot: bool) -> Result<()> {
    let radar = RadarParams::automotive(LONG_CHIRP_S, p);
    let spec = ModulationSpec::EmptySpectrum {
        virtual_tx: VIRTUAL_TX,
        coding: Coding::FirstBin,
    };
    let w = spec.build(&radar)?;
    let targets = example2_targets();
    let cube = simulate_rx(&radar, &w, &targets, &NoiseConfig::with_snr(INPUT_SNR_DB, seed))?;
    b.metrics = Some(derive_metrics(&radar)?);
    process_and_export(&cube, &DetectConfig::default(), "", plot, b)?;
    record_velocity_errors(b, &radar, &targets, "");
    Ok(())
}

fn record_velocity_errors(b: &mut ResultBundle, radar: &RadarParams, targets: &[Target], prefix: &str) {
    b.set(format!("{prefix}detections"), b.detections.len() as f64);
    for (i, t) in targets.iter().enumerate() {
        let row = expected_range_bin(radar, t);
        let err = b
            .detections
            .iter()
            .filter(|d| d.range_bin.abs_diff(row) <= 1)
            .map(|d| (d.velocity_mps - t.velocity_mps).abs())
            .fold(f64::INFINITY, f64::min);
        b.set(format!("{prefix}target{}_velocity_error_mps", i + 1), err);
    }
}

/// Column of the strongest cell in `row` of a combined power map.
fn strongest_col(power: &Array2<f64>, row: usize) -> usize {
    power
        .row(row)
        .iter()
        .enumerate()
        .max_by(|a, c| a.1.total_cmp(c.1))
        .map_or(0, |(c, _)| c)
}

fn slices_csv(power: &Array2<f64>, rows: &[usize], axis: &[f64]) -> Result<String> {
    let names: Vec<String> = (1..=rows.len()).map(|i| format!("target{i}_db")).collect();
    let data: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| power.row(r).iter().map(|v| 10.0 * v.max(1e-30).log10()).collect())
        .collect();
    let series: Vec<(&str, &[f64])> = names.iter().map(|n| n.as_str()).zip(data.iter().map(|d| d.as_slice())).collect();
    export::series_csv("doppler_norm", axis, &series)
}

fn example3(b: &mut ResultBundle, seed: u64, p: usize, plot: bool) -> Result<()> {
    let cfg = DetectConfig::default();
    let targets = example2_targets();
    let noise = NoiseConfig::with_snr(INPUT_SNR_DB, seed);

    // TB-DDMA transmission: Q physical pulses drawn from the M_v-element code.
    let radar = RadarParams::automotive(LONG_CHIRP_S, p);
    let w = tb_ddma_matrix(radar.num_tx, VIRTUAL_TX, radar.num_pulses, &EXAMPLE3_BEAMS, Coding::FirstBin)?;
    let cube = simulate_rx(&radar, &w, &targets, &noise)?;
    b.metrics = Some(derive_metrics(&radar)?);
    let maps = range_doppler_map(&cube, cfg.window)?;
    let t = cfg.threshold.evaluate(&maps)?;
    let binary = binary_detection(&maps, t)?;
    crate::scenario::export_products(&maps, &binary, "tb_", plot, b)?;

    let q = radar.num_pulses as i64;
    let rows: Vec<usize> = targets.iter().map(|t| expected_range_bin(&radar, t)).collect();
    let power = export::combined_power(&maps)?;
    let cols: Vec<usize> = rows.iter().map(|&r| strongest_col(&power, r)).collect();
    for (i, c) in cols.iter().enumerate() {
        b.set(format!("tb_target{}_col", i + 1), *c as f64);
    }
    let mut diff = (cols[2] as i64 - cols[1] as i64).rem_euclid(q);
    if diff > q / 2 {
        diff -= q;
    }
    b.set("tb_col_difference_3_2", diff as f64);
    let csv = slices_csv(&power, &rows, &maps[0].doppler_axis)?;
    export::write_bytes(&b.path("tb_doppler_slices.csv"), csv.as_bytes())?;
    b.record("doppler_slices", "tb_doppler_slices.csv");

    let slabs: Vec<_> = maps
        .iter()
        .map(|m| demultiplex(m, &w).map(|mut s| s.swap_remove(0)))
        .collect::<Result<_>>()?;
    let slab_power = export::combined_power(&slabs)?;
    for (i, &r) in rows.iter().enumerate() {
        b.set(format!("tx1_target{}_col", i + 1), strongest_col(&slab_power, r) as f64);
    }
    let csv = slices_csv(&slab_power, &rows, &slabs[0].doppler_axis)?;
    export::write_bytes(&b.path("tb_tx1_slices.csv"), csv.as_bytes())?;
    b.record("doppler_slices", "tb_tx1_slices.csv");

    // Ambiguity recovery on the empty-spectrum cube before pulse resampling.
    let mut virt = radar;
    virt.num_pulses = radar.num_pulses * VIRTUAL_TX / radar.num_tx;
    let spec = ModulationSpec::EmptySpectrum {
        virtual_tx: VIRTUAL_TX,
        coding: Coding::FirstBin,
    };
    let wv = spec.build(&virt)?;
    let cube = simulate_rx(&virt, &wv, &targets, &noise)?;
    let tb_threshold = b.threshold;
    process_and_export(&cube, &cfg, "es_", plot, b)?;
    b.threshold = tb_threshold;
    record_velocity_errors(b, &virt, &targets, "es_");
    Ok(())
}

fn example4(b: &mut ResultBundle, seed: u64, plot: bool) -> Result<()> {
    let grid = uniform_grid(721);
    let mut cfg = TbDesignConfig::symmetric(8, 4, 0.5);
    cfg.seed = seed;
    let tb = design_tb(&cfg)?;
    b.set("fast_ripple", tb.ripple);
    b.set("fast_relaxation_bound", tb.relaxation_bound);
    b.set("fast_rank_one_residual", tb.rank_one_residual);
    export::write_rdmx(&b.path("tb_matrix.rdmx"), &export::to_single(&tb.matrix))?;
    b.record("tb_matrix", "tb_matrix.rdmx");
    let fast = crate::tbdesign::beampattern(&tb.columns(), cfg.spacing_wavelengths, &grid)?.normalize();
    write_pattern(b, "fast_time_pattern", "fast-time TB (M = 8, K = 4)", &fast, plot)?;

    let w = tb_ddma_matrix(8, EXAMPLE4_VIRTUAL_TX, 512, &EXAMPLE4_BEAMS, Coding::FirstBin)?;
    let taper = taylor_window(8, 4, -30.0)?;
    let slow = slow_time_tb_pattern(&w, Some(&taper), 0.5, &grid)?.normalize();
    write_pattern(b, "slow_time_pattern", "slow-time DFT TB (M_v = 24)", &slow, plot)?;
    let db = slow.values_db();
    let inside: Vec<f64> = grid.iter().zip(&db).filter(|(s, _)| s.abs() <= 0.25).map(|(_, v)| *v).collect();
    let outside = grid.iter().zip(&db).filter(|(s, _)| s.abs() >= 0.6).map(|(_, v)| *v);
    b.set("slow_min_db_inside", inside.iter().cloned().fold(f64::INFINITY, f64::min));
    b.set("slow_max_db_outside", outside.fold(f64::NEG_INFINITY, f64::max));
    Ok(())
}
