//! JSON scenarios, run bundles and the file-level simulate/detect/design steps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Ix2, Ix3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export;
use crate::modmat::{
    ddma_matrix, empty_spectrum_matrix, hadamard_matrix, tb_ddma_matrix, tdma_matrix, Coding,
    PhaseModulationMatrix, Scheme,
};
use crate::params::{derive_metrics, Metrics, RadarParams};
use crate::rdproc::{
    binary_detection, find_peaks, process_empty_spectrum, range_doppler_map, BinaryMatrix,
    DetectConfig, Detection, Peak, RangeDopplerMap,
};
use crate::scene::{simulate_rx, DataCube, NoiseConfig, Target};
use crate::tbdesign::{beampattern, design_tb, uniform_grid, TbDesignConfig};

/// Output directory used when neither the caller nor the scenario names one.
pub const DEFAULT_OUT_DIR: &str = "tbddma-out";

/// Slow-time code; transmitter and pulse counts come from the radar block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulationSpec {
    Tdma,
    Ddma {
        #[serde(default)]
        coding: Coding,
    },
    EmptySpectrum {
        virtual_tx: usize,
        #[serde(default)]
        coding: Coding,
    },
    TbDdma {
        virtual_tx: usize,
        /// 1-based in-period virtual pulse indices.
        beam_indices: Vec<usize>,
        #[serde(default)]
        coding: Coding,
    },
    Hadamard,
}

impl ModulationSpec {
    pub fn build(&self, radar: &RadarParams) -> Result<PhaseModulationMatrix> {
        let (m, q) = (radar.num_tx, radar.num_pulses);
        match self {
            ModulationSpec::Tdma => tdma_matrix(m, q),
            ModulationSpec::Ddma { coding } => ddma_matrix(m, q, *coding),
            ModulationSpec::EmptySpectrum { virtual_tx, coding } => {
                empty_spectrum_matrix(m, *virtual_tx, q, *coding)
            }
            ModulationSpec::TbDdma {
                virtual_tx,
                beam_indices,
                coding,
            } => tb_ddma_matrix(m, *virtual_tx, q, beam_indices, *coding),
            ModulationSpec::Hadamard => hadamard_matrix(m, q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub radar: RadarParams,
    pub modulation: ModulationSpec,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub processing: DetectConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Also write the receive cube (RDMX plus JSON sidecar) for `detect`.
    #[serde(default)]
    pub write_cube: bool,
}

/// Description stored next to an exported cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeSidecar {
    pub radar: RadarParams,
    pub modulation: ModulationSpec,
    #[serde(default)]
    pub processing: DetectConfig,
}

/// Overrides shared by every subcommand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub fast_time_samples: Option<usize>,
    pub plot: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: String,
    /// Relative to the output directory.
    pub path: PathBuf,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub label: String,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub threshold: Option<f64>,
    pub detections: Vec<Detection>,
    pub peak_sets: BTreeMap<String, Vec<Peak>>,
    pub values: BTreeMap<String, f64>,
    pub files: Vec<ManifestEntry>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl ResultBundle {
    pub fn new(label: impl Into<String>, seed: u64, out_dir: &Path) -> Self {
        ResultBundle {
            label: label.into(),
            seed,
            metrics: None,
            threshold: None,
            detections: Vec::new(),
            peak_sets: BTreeMap::new(),
            values: BTreeMap::new(),
            files: Vec::new(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub(crate) fn record(&mut self, kind: &str, name: &str) {
        self.files.push(ManifestEntry {
            kind: kind.into(),
            path: PathBuf::from(name),
        });
    }

    pub(crate) fn set(&mut self, key: impl Into<String>, v: f64) {
        self.values.insert(key.into(), v);
    }

    /// Writes `summary.json` into the output directory.
    pub fn write_summary(&self) -> Result<PathBuf> {
        let p = self.path("summary.json");
        export::write_json(&p, self)?;
        Ok(p)
    }

    /// Human-readable table of metrics, detections and files.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run: {}  (seed {})", self.label, self.seed);
        if let Some(m) = &self.metrics {
            let _ = writeln!(
                s,
                "range res {:.4} m | R_max {:.2} m | velocity res {:.4} m/s | v_max {:.4} m/s",
                m.range_resolution_m,
                m.max_unambiguous_range_m,
                m.velocity_resolution_mps,
                m.max_unambiguous_velocity_mps
            );
        }
        if let Some(t) = self.threshold {
            let _ = writeln!(s, "threshold {t:.6e}");
        }
        if !self.detections.is_empty() {
            let _ = writeln!(
                s,
                "{:>5} {:>10} {:>6} {:>10} {:>10} {:>5} {:>6}",
                "#", "range_m", "start", "f_recov", "v_mps", "conf", "flags"
            );
            for (i, d) in self.detections.iter().enumerate() {
                let flags = match (d.first_in_row, d.last_in_row) {
                    (true, true) => "F L",
                    (true, false) => "F",
                    (false, true) => "L",
                    _ => "",
                };
                let _ = writeln!(
                    s,
                    "{:>5} {:>10.2} {:>6} {:>10.5} {:>10.3} {:>5} {:>6}",
                    i, d.range_m, d.start_bin, d.recovered_doppler, d.velocity_mps, d.confidence, flags
                );
            }
        } else {
            let _ = writeln!(s, "detections: 0");
        }
        for (k, v) in &self.peak_sets {
            let _ = writeln!(s, "peaks[{k}]: {}", v.len());
        }
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v:.6}");
        }
        for f in &self.files {
            let _ = writeln!(s, "[{}] {}", f.kind, self.out_dir.join(&f.path).display());
        }
        s
    }
}

/// Deserializes JSON, naming the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        let inner = e.into_inner();
        Error::Format {
            path: origin.to_path_buf(),
            reason: if at.is_empty() || at == "." {
                inner.to_string()
            } else {
                format!("field `{at}`: {inner}")
            },
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, path)
}

/// Maps, threshold, mask and either detections (empty-spectrum codes) or
/// peaks; writes the map CSV, receiver-0 map, mask and optional heatmaps
/// under names starting with `prefix`.
pub fn process_and_export(
    cube: &DataCube,
    cfg: &DetectConfig,
    prefix: &str,
    plot: bool,
    bundle: &mut ResultBundle,
) -> Result<()> {
    let (maps, binary, detections) = if cube.modulation.scheme() == Scheme::EmptySpectrumDdma {
        let out = process_empty_spectrum(cube, cfg)?;
        (out.maps, out.binary, Some(out.detections))
    } else {
        let maps = range_doppler_map(cube, cfg.window)?;
        let t = cfg.threshold.evaluate(&maps)?;
        let binary = binary_detection(&maps, t)?;
        (maps, binary, None)
    };
    bundle.threshold = Some(binary.threshold);
    match detections {
        Some(d) => bundle.detections.extend(d),
        None => {
            let peaks = find_peaks(&maps, &binary)?;
            bundle.peak_sets.insert(format!("{prefix}peaks"), peaks);
        }
    }
    export_products(&maps, &binary, prefix, plot, bundle)
}

/// Writes the map CSV, receiver-0 map, mask and optional heatmaps.
pub(crate) fn export_products(
    maps: &[RangeDopplerMap],
    binary: &BinaryMatrix,
    prefix: &str,
    plot: bool,
    bundle: &mut ResultBundle,
) -> Result<()> {
    bundle.set(format!("{prefix}binary_ones"), binary.count_ones() as f64);
    let name = format!("{prefix}rd_map.csv");
    export::write_map_csv(&bundle.path(&name), maps)?;
    bundle.record("range_doppler_csv", &name);
    let name = format!("{prefix}rd_map_rx0.rdmx");
    export::write_rdmx(&bundle.path(&name), &export::to_single(&maps[0].data))?;
    bundle.record("range_doppler_matrix", &name);
    let name = format!("{prefix}binary.rdmx");
    export::write_rdmx(&bundle.path(&name), &export::binary_to_array(binary))?;
    bundle.record("binary_matrix", &name);
    if plot {
        let power = export::combined_power(&maps)?;
        let name = format!("{prefix}rd_map.png");
        export::heatmap_png(&bundle.path(&name), &power, 60.0)?;
        bundle.record("range_doppler_plot", &name);
        let mask = binary.data.mapv(|b| if b { 1.0 } else { 0.0 });
        let name = format!("{prefix}binary.png");
        export::heatmap_png(&bundle.path(&name), &mask, 1.0)?;
        bundle.record("binary_plot", &name);
    }
    Ok(())
}

fn out_dir_for(opts: &RunOptions, fallback: Option<&Path>) -> PathBuf {
    opts.out_dir
        .clone()
        .or_else(|| fallback.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Loads a scenario file, simulates, processes and writes every output.
pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<ResultBundle> {
    let mut sc: ScenarioFile = read_json(path)?;
    if let Some(p) = opts.fast_time_samples {
        sc.radar.fast_time_samples = p;
    }
    if let Some(s) = opts.seed {
        sc.noise.seed = s;
    }
    let out = out_dir_for(opts, sc.output_dir.as_deref());
    let label = sc.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into())
    });
    let mut bundle = ResultBundle::new(label, sc.noise.seed, &out);
    bundle.metrics = Some(derive_metrics(&sc.radar)?);
    let w = sc.modulation.build(&sc.radar)?;
    let cube = simulate_rx(&sc.radar, &w, &sc.targets, &sc.noise)?;
    if sc.write_cube {
        write_cube(&cube, &sc.modulation, &sc.processing, &mut bundle, "cube")?;
    }
    process_and_export(&cube, &sc.processing, "", opts.plot, &mut bundle)?;
    bundle.write_summary()?;
    Ok(bundle)
}

/// Writes `<stem>.rdmx` and its `<stem>.json` sidecar.
pub fn write_cube(
    cube: &DataCube,
    spec: &ModulationSpec,
    processing: &DetectConfig,
    bundle: &mut ResultBundle,
    stem: &str,
) -> Result<()> {
    let data = format!("{stem}.rdmx");
    export::write_rdmx(&bundle.path(&data), &export::to_single(&cube.samples))?;
    bundle.record("cube", &data);
    let side = format!("{stem}.json");
    let sidecar = CubeSidecar {
        radar: cube.params,
        modulation: spec.clone(),
        processing: *processing,
    };
    export::write_json(&bundle.path(&side), &sidecar)?;
    bundle.record("cube_sidecar", &side);
    Ok(())
}

/// Loads a cube written by [`write_cube`].
pub fn read_cube(path: &Path) -> Result<(DataCube, CubeSidecar)> {
    let side_path = path.with_extension("json");
    let side: CubeSidecar = read_json(&side_path)?;
    let raw = export::read_rdmx(path)?;
    let samples: Array3<_> = export::to_double(&raw)
        .into_dimensionality::<Ix3>()
        .map_err(|_| Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected a rank-3 cube, got rank {}", raw.ndim()),
        })?;
    let w = side.modulation.build(&side.radar)?;
    let cube = DataCube::new(side.radar, w, samples)?;
    Ok((cube, side))
}

/// Processes a stored cube.
pub fn run_detect(path: &Path, opts: &RunOptions) -> Result<ResultBundle> {
    let (cube, side) = read_cube(path)?;
    let out = out_dir_for(opts, None);
    let label = format!("detect {}", path.display());
    let mut bundle = ResultBundle::new(label, 0, &out);
    bundle.metrics = Some(derive_metrics(&cube.params)?);
    process_and_export(&cube, &side.processing, "", opts.plot, &mut bundle)?;
    bundle.write_summary()?;
    Ok(bundle)
}

/// Designs a fast-time beamspace matrix from a JSON configuration.
pub fn run_design(path: &Path, opts: &RunOptions) -> Result<ResultBundle> {
    let mut cfg: TbDesignConfig = read_json(path)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let out = out_dir_for(opts, None);
    let mut bundle = ResultBundle::new("design-tb", cfg.seed, &out);
    let tb = design_tb(&cfg)?;
    bundle.set("ripple", tb.ripple);
    bundle.set("relaxation_bound", tb.relaxation_bound);
    bundle.set("rank_one_residual", tb.rank_one_residual);
    bundle.set("extracted_ripple", tb.extracted_ripple);
    bundle.set("solver_iterations", tb.solver_iterations as f64);
    export::write_rdmx(&bundle.path("tb_matrix.rdmx"), &export::to_single(&tb.matrix))?;
    bundle.record("tb_matrix", "tb_matrix.rdmx");
    let pattern = beampattern(&tb.columns(), cfg.spacing_wavelengths, &uniform_grid(721))?.normalize();
    write_pattern(&mut bundle, "tb_pattern", "fast-time beamspace pattern", &pattern, opts.plot)?;
    bundle.write_summary()?;
    Ok(bundle)
}

/// Evaluates the pattern of an M×K RDMX matrix (columns are beams).
pub fn run_beampattern(path: &Path, spacing_wavelengths: f64, opts: &RunOptions) -> Result<ResultBundle> {
    let raw = export::read_rdmx(path)?;
    let m: Array2<_> = export::to_double(&raw)
        .into_dimensionality::<Ix2>()
        .map_err(|_| Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected a rank-2 matrix, got rank {}", raw.ndim()),
        })?;
    let cols: Vec<Vec<_>> = m.columns().into_iter().map(|c| c.to_vec()).collect();
    let out = out_dir_for(opts, None);
    let mut bundle = ResultBundle::new(format!("beampattern {}", path.display()), 0, &out);
    let pattern = beampattern(&cols, spacing_wavelengths, &uniform_grid(721))?;
    bundle.set(
        "peak",
        pattern.values.iter().cloned().fold(0.0, f64::max),
    );
    let pattern = pattern.normalize();
    write_pattern(&mut bundle, "pattern", "beampattern", &pattern, opts.plot)?;
    bundle.write_summary()?;
    Ok(bundle)
}

pub(crate) fn write_pattern(
    bundle: &mut ResultBundle,
    stem: &str,
    title: &str,
    pattern: &crate::tbdesign::Beampattern,
    plot: bool,
) -> Result<()> {
    let csv = format!("{stem}.csv");
    export::write_pattern_csv(&bundle.path(&csv), pattern)?;
    bundle.record("pattern_csv", &csv);
    if plot {
        let svg = format!("{stem}.svg");
        let body = export::pattern_svg(title, &[(stem, pattern)], -40.0)?;
        export::write_bytes(&bundle.path(&svg), body.as_bytes())?;
        bundle.record("pattern_plot", &svg);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modulation_spec_parses() {
        let s: ModulationSpec =
            parse_json(r#"{"scheme":"tb_ddma","virtual_tx":16,"beam_indices":[1,2]}"#, Path::new("t")).unwrap();
        assert_eq!(
            s,
            ModulationSpec::TbDdma {
                virtual_tx: 16,
                beam_indices: vec![1, 2],
                coding: Coding::FirstBin
            }
        );
        let s: ModulationSpec = parse_json(r#"{"scheme":"ddma","coding":"centered"}"#, Path::new("t")).unwrap();
        assert_eq!(s, ModulationSpec::Ddma { coding: Coding::Centered });
    }

    #[test]
    fn error_names_field() {
        let text = r#"{"radar":{"carrier_freq_hz":79e9,"bandwidth_hz":"wide"},"modulation":{"scheme":"tdma"}}"#;
        let e = parse_json::<ScenarioFile>(text, Path::new("s.json")).unwrap_err();
        assert!(e.to_string().contains("radar.bandwidth_hz"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let text = r#"{"radar":{},"modulation":{"scheme":"tdma","extra":1}}"#;
        assert!(parse_json::<ScenarioFile>(text, Path::new("s.json")).is_err());
    }

    #[test]
    fn cube_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut radar = RadarParams::automotive(12e-6, 32);
        radar.num_pulses = 32;
        radar.num_tx = 2;
        radar.num_rx = 2;
        let spec = ModulationSpec::EmptySpectrum {
            virtual_tx: 4,
            coding: Coding::FirstBin,
        };
        let w = spec.build(&radar).unwrap();
        let cube = simulate_rx(&radar, &w, &[Target::new(20.0, 5.0)], &NoiseConfig::noiseless(0)).unwrap();
        let mut b = ResultBundle::new("t", 0, dir.path());
        write_cube(&cube, &spec, &DetectConfig::default(), &mut b, "cube").unwrap();
        let (back, side) = read_cube(&dir.path().join("cube.rdmx")).unwrap();
        assert_eq!(side.modulation, spec);
        assert_eq!(back.modulation, cube.modulation);
        for (a, c) in back.samples.iter().zip(cube.samples.iter()) {
            assert!((a - c).norm() < 1e-5 * (1.0 + c.norm()));
        }
    }
}
