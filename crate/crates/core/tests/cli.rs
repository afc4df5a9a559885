use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn spde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spde"))
        .args(args)
        .env_remove("SPDE_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

const SMALL_TEMPORAL: &str = r#"
[noise]
n_modes = 16

[discretization]
n_interior = 31
steps = [8, 16, 32]
reference_steps = 256

[study]
samples = 16
band_low = 0.0
band_high = 5.0
"#;

#[test]
fn convergence_is_reproducible_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TEMPORAL);
    let cfg = cfg.to_str().unwrap();
    let mut tables = Vec::new();
    // same output directory each time, since it is echoed into the header
    let out = tmp.path().join("out");
    for threads in ["1", "1", "3"] {
        let o = spde(&[
            "convergence",
            "--config",
            cfg,
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        tables.push(fs::read(out.join("error_table.csv")).unwrap());
        let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["pass"], true);
        assert_eq!(summary["config"]["study"]["samples"], 16);
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0], tables[2]);
}

#[test]
fn band_failure_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_TEMPORAL.replace("band_low = 0.0", "band_low = 4.0");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = spde(&[
        "convergence",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("summary.json").exists());
}

#[test]
fn invalid_configuration_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[noise]\nhurst = 0.3\n");
    let out = tmp.path().join("out");
    let o = spde(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise.hurst"));

    let cfg = write_config(tmp.path(), "[noise]\nhurts = 0.7\n");
    let o = spde(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hurts"));
}

#[test]
fn sample_override_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TEMPORAL);
    let out = tmp.path().join("out");
    let o = spde(&[
        "convergence",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--samples",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("study.samples"));
}

#[test]
fn simulate_writes_long_format_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("heat.toml");
    let o = spde(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "time,x,value");
    // three output times, 63 interior nodes plus two boundary nodes each
    assert_eq!(rows.len() - 1, 3 * 65);
    let peak: f64 = rows[1..66]
        .iter()
        .map(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!((peak - 1.0).abs() < 1e-3, "initial peak {peak}");
}

#[test]
fn deterministic_heat_study_is_floor_limited_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("heat.toml");
    let o = spde(&[
        "convergence",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["floor_limited"], true);
    assert!(summary["slope"].is_null());
}

#[test]
fn noise_validation_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("noise.toml");
    let o = spde(&[
        "validate-noise",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--samples",
        "20000",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("noise_report.json")).unwrap()).unwrap();
    assert_eq!(report["all_passed"], true);
    assert_eq!(report["config"]["validation"]["samples"], 20000);
}
