use std::path::Path;
use std::process::{Command, Output};

use xxz_core::cli::{exit, Manifest};

fn xxz(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xxz"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("XXZ_WORKERS", "2")
        .output()
        .unwrap()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn sweep_grid_yields_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = xxz(
        &[
            "sweep", "--engine", "oat", "--dims", "2", "--size", "16", "--alpha", "3", "--jz-over-jperp", "-3:1:0.1",
            "--trajectories", "500", "--seed", "7", "--points", "51",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let slice = rows(&dir.path().join("slice_alpha3_N256.csv"));
    assert_eq!(slice.len(), 41);
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.command, "sweep");
    assert_eq!(manifest.config.jz_over_jperp.len(), 41);
    assert!(manifest.outputs.contains(&"boundaries.csv".to_string()));
    assert!(!manifest.build_id.is_empty());
}

#[test]
fn gap_uniform_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = xxz(&["gap", "--dims", "2", "--alpha", "0", "--sizes", "8,16,32"], dir.path());
    assert!(o.status.success());
    let r = rows(&dir.path().join("gap.csv"));
    assert_eq!(r.len(), 3);
    for row in r {
        let l: f64 = row[0].parse().unwrap();
        let g: f64 = row[5].parse().unwrap();
        assert!((g - l * l).abs() < 1e-9 * l * l);
    }
}

#[test]
fn simulate_writes_series_and_husimi() {
    let dir = tempfile::tempdir().unwrap();
    let o = xxz(
        &[
            "simulate", "--engine", "exact", "--dims", "1", "--size", "6", "--alpha", "1", "--jz-over-jperp", "-1",
            "--points", "41", "--husimi", "8,12",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&dir.path().join("series.csv")).len(), 41);
    assert_eq!(rows(&dir.path().join("summary.csv")).len(), 1);
    assert_eq!(rows(&dir.path().join("husimi.csv")).len(), 96);
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("series.json")).unwrap()).unwrap();
    assert_eq!(meta["integrator"], "lanczos");
}

#[test]
fn failures_report_json_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let usage = xxz(&["sweep", "--no-such-flag"], dir.path());
    assert_eq!(usage.status.code(), Some(exit::USAGE));
    assert_eq!(error_json(&usage)["error"]["kind"], "usage");

    let grid = xxz(&["sweep", "--size", "4", "--alpha", "3", "--jz-over-jperp", "0:1:-0.1"], dir.path());
    assert_eq!(grid.status.code(), Some(exit::INVALID));
    assert_eq!(error_json(&grid)["error"]["kind"], "parse");

    let cap = xxz(
        &["simulate", "--engine", "exact", "--dims", "2", "--size", "5", "--alpha", "3", "--jz-over-jperp", "0"],
        dir.path(),
    );
    assert_eq!(cap.status.code(), Some(exit::CAPACITY));
    assert_eq!(error_json(&cap)["error"]["kind"], "capacity-exceeded");

    let workers = Command::new(env!("CARGO_BIN_EXE_xxz"))
        .args(["gap", "--alpha", "0", "--sizes", "8"])
        .arg("--out")
        .arg(dir.path())
        .env("XXZ_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(workers.status.code(), Some(exit::INVALID));
}

#[test]
fn sweep_resumes_from_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--dims", "1", "--size", "8", "--alpha", "1.5", "--jz-over-jperp", "-1:0:0.25", "--trajectories", "30",
        "--seed", "1", "--points", "21",
    ];
    assert!(xxz(&args, dir.path()).status.success());
    let path = dir.path().join("slice_alpha1.5_N8.csv");
    let full = std::fs::read_to_string(&path).unwrap();
    let partial: Vec<&str> = full.lines().take(3).collect();
    std::fs::write(&path, partial.join("\n") + "\n").unwrap();
    assert!(xxz(&args, dir.path()).status.success());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), full);
}
