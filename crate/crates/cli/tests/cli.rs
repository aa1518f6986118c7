use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hom_lady(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hom-lady"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

const CONSTANT: &str = r#"{ "kind": "constant", "nu0": 0.02, "nu1": 0.01, "rho": 1.0, "p": 3.0 }"#;

#[test]
fn validates_shipped_configs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["laminate_study.json", "laminate_micro.json", "laminate_cell.json", "laminate_macro.json"] {
        let path = shipped(name);
        let out = hom_lady(&["validate", "--config", path.to_str().unwrap()], dir.path());
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("valid"));
    }
}

#[test]
fn malformed_and_unknown_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{ not json");
    let unknown = write(dir.path(), "unknown.json", r#"{ "schema": "nothing/9" }"#);
    let missing = dir.path().join("missing.json");
    for path in [bad, unknown, missing] {
        let out = hom_lady(&["validate", "--config", path.to_str().unwrap()], dir.path());
        assert_eq!(out.status.code(), Some(1), "{}", path.display());
    }
}

#[test]
fn invalid_study_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(shipped("laminate_study.json"))
        .unwrap()
        .replace("[0.25, 0.125, 0.0625]", "[0.125, 0.25]");
    let path = write(dir.path(), "study.json", &text);
    let out = hom_lady(&["validate", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn micro_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{ "schema": "ladymicro/1", "scenario": {CONSTANT}, "eps": 0.25, "resolution": 16,
             "t_end": 0.02, "snapshot_interval": 0.01 }}"#
    );
    let path = write(dir.path(), "micro.json", &cfg);
    let out = hom_lady(&["micro", "--config", path.to_str().unwrap(), "--out", "m"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = dir.path().join("m");
    assert!(m.join("diagnostics.csv").exists());
    assert!(m.join("snapshot_00002.bin").exists());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(m.join("summary.json")).unwrap()).unwrap();
    assert!(summary["energy_law_excess"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn cell_run_reproduces_constant_law() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{ "schema": "ladycell/1", "scenario": {CONSTANT}, "xi": [[[0.0, 0.0], [1.0, 0.0]]],
             "resolution": 16, "uniqueness_trials": 1, "monotonicity_pairs": 2 }}"#
    );
    let path = write(dir.path(), "cell.json", &cfg);
    let out = hom_lady(&["cell", "--config", path.to_str().unwrap(), "--out", "c"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cell: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("c/cell.json")).unwrap()).unwrap();
    // m(ξ) = ν₀ξ with ξ₂₁ = 1
    assert!((cell["rows"][0]["m"][1][0].as_f64().unwrap() - 0.02).abs() < 1e-12);
    let law = dir.path().join("c/law.json");
    let out = hom_lady(&["validate", "--config", law.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn macro_run_writes_law_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{ "schema": "ladymacro/1", "scenario": {CONSTANT}, "resolution": 16,
             "t_end": 0.02, "snapshot_interval": 0.01 }}"#
    );
    let path = write(dir.path(), "macro.json", &cfg);
    let out = hom_lady(&["macro", "--config", path.to_str().unwrap(), "--out", "h"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("h/law.json").exists());
    assert!(dir.path().join("h/snapshot_00002.bin").exists());
}

#[test]
fn study_without_decrease_exits_two() {
    // Constant coefficients reproduce the homogenized flow exactly, so no
    // decrease can be observed.
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{ "schema": "ladystudy/1", "name": "constant", "scenario": {CONSTANT},
             "eps_list": [0.26, 0.25],
             "grid": {{ "cells_per_eps": 4, "max_resolution": 64, "boundary": "periodic" }},
             "macro_resolution": 16, "t_end": 0.02, "snapshot_interval": 0.01,
             "norms": ["l2"], "ratio_threshold": 1.0 }}"#
    );
    let path = write(dir.path(), "study.json", &cfg);
    let out = hom_lady(&["study", "--config", path.to_str().unwrap(), "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["errors.csv", "sigma.csv", "report.json", "errors.dat"] {
        assert!(dir.path().join("s").join(f).exists(), "{f}");
    }
    let report = dir.path().join("s/report.json");
    let out = hom_lady(&["validate", "--config", report.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_thread_count_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = shipped("laminate_micro.json");
    let out = Command::new(env!("CARGO_BIN_EXE_hom-lady"))
        .args(["validate", "--config", path.to_str().unwrap()])
        .env("HOM_LADY_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
