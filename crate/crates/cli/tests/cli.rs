use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tbddma"));
    c.env_remove("TBDDMA_OUT_DIR");
    c
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_scenario_detects_three_targets() {
    let out = tempfile::tempdir().unwrap();
    let sc = scenarios().join("example2.json");
    let o = run(&["simulate", s(&sc), "--out-dir", s(out.path()), "--no-plot"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = summary(out.path());
    let dets = v["detections"].as_array().unwrap();
    assert_eq!(dets.len(), 3);
    let mut got: Vec<f64> = dets.iter().map(|d| d["velocity_mps"].as_f64().unwrap()).collect();
    got.sort_by(f64::total_cmp);
    for (g, want) in got.iter().zip([-35.0, -15.0, 40.0]) {
        assert!((g - want).abs() < 0.31, "{g} vs {want}");
    }
    for f in v["files"].as_array().unwrap() {
        assert!(out.path().join(f["path"].as_str().unwrap()).exists());
    }
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("v_mps"));
}

#[test]
fn zero_targets_zero_detections() {
    let out = tempfile::tempdir().unwrap();
    let sc = scenarios().join("empty.json");
    let o = run(&["simulate", s(&sc), "--out-dir", s(out.path()), "--no-plot"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(out.path())["detections"].as_array().unwrap().len(), 0);
}

#[test]
fn malformed_scenario_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = fs::read_to_string(scenarios().join("example2.json"))
        .unwrap()
        .replace("\"num_rx\": 12", "\"num_rx\": \"twelve\"");
    fs::write(&bad, text).unwrap();
    let o = run(&["simulate", s(&bad), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("radar.num_rx"), "{err}");

    fs::write(&bad, "{\"radar\": ").unwrap();
    assert_eq!(run(&["simulate", s(&bad)]).status.code(), Some(2));
}

#[test]
fn inconsistent_dimensions_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("dims.json");
    let text = fs::read_to_string(scenarios().join("empty.json"))
        .unwrap()
        .replace("\"virtual_tx\": 16", "\"virtual_tx\": 6");
    fs::write(&bad, text).unwrap();
    let o = run(&["simulate", s(&bad), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("virtual_tx"));
}

#[test]
fn missing_file_is_io_error() {
    let o = run(&["simulate", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn invalid_example_id() {
    let o = run(&["reproduce", "5"]);
    assert!(!o.status.success());
}

#[test]
fn reproduce_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["reproduce", "2", "--seed", "7", "--out-dir", s(d.path())]);
        assert!(o.status.success());
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn env_var_sets_output_directory() {
    let d = tempfile::tempdir().unwrap();
    let o = bin()
        .env("TBDDMA_OUT_DIR", d.path())
        .args(["reproduce", "4", "--no-plot"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(d.path().join("fast_time_pattern.csv").exists());
    assert!(d.path().join("slow_time_pattern.csv").exists());
    assert!(!d.path().join("fast_time_pattern.svg").exists());
}

#[test]
fn design_then_beampattern() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("tb.json");
    fs::write(&cfg, r#"{"num_tx": 6, "num_waveforms": 2, "region": [-0.4, 0.4], "randomization_trials": 50}"#).unwrap();
    let o = run(&["design-tb", s(&cfg), "--out-dir", s(d.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("tb_pattern.svg").exists());
    let m = d.path().join("tb_matrix.rdmx");
    let pd = d.path().join("pattern");
    let o = run(&["beampattern", s(&m), "--out-dir", s(&pd)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(pd.join("pattern.csv")).unwrap();
    assert!(csv.starts_with("sin_theta,value_db\n"));

    fs::write(&cfg, r#"{"num_tx": 6, "num_waveforms": 3, "region": [-0.4, 0.4]}"#).unwrap();
    let o = run(&["design-tb", s(&cfg), "--out-dir", s(d.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_cube_then_detect() {
    let d = tempfile::tempdir().unwrap();
    let sc = d.path().join("sc.json");
    let text = fs::read_to_string(scenarios().join("example2.json"))
        .unwrap()
        .replace("\"fast_time_samples\": 1024", "\"fast_time_samples\": 128")
        .replace("\"targets\"", "\"write_cube\": true, \"targets\"");
    fs::write(&sc, text).unwrap();
    let first = d.path().join("sim");
    let o = run(&["simulate", s(&sc), "--out-dir", s(&first), "--no-plot"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let second = d.path().join("det");
    let o = run(&["detect", s(&first.join("cube.rdmx")), "--out-dir", s(&second), "--no-plot"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = summary(&first)["detections"].as_array().unwrap().len();
    let b = summary(&second)["detections"].as_array().unwrap().len();
    assert_eq!(a, b);
    assert!(a >= 1);
}
