//! End-to-end checks of the command-line interface at tiny run sizes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pide-mc"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("pide-mc-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn solve_writes_error_report_and_solution() {
    let dir = tmp("solve");
    let out = bin()
        .args([
            "solve", "--problem", "example1", "--dim", "2", "--dt", "0.25", "--paths", "300",
            "--level", "3", "--seed", "1", "--eval-points", "2000",
        ])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("l2_error"));

    let errors = read(&dir.join("errors.csv"));
    let mut lines = errors.lines();
    assert!(lines.next().unwrap().starts_with("problem,dim,dt,"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("example1(d=2),2,0.25,4,300,3,1,1,777,2000,"));
    let l2: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(l2 > 0.0 && l2 < 1.0);

    assert!(dir.join("solution.bin").exists());
    let manifest = read(&dir.join("manifest.txt"));
    assert!(manifest.contains("seed = 1"));
    assert!(manifest.contains("grid_level = 3"));
}

#[test]
fn solve_is_reproducible_across_invocations() {
    let report = |dir: &Path| {
        let out = bin()
            .args([
                "solve", "--problem", "example1", "--dim", "2", "--dt", "0.25", "--paths", "200",
                "--level", "3", "--seed", "7", "--eval-points", "1000",
            ])
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        read(&dir.join("errors.csv"))
    };
    let a = report(&tmp("repro-a"));
    let b = report(&tmp("repro-b"));
    assert_eq!(a, b);
}

#[test]
fn sweep_emits_csv_with_rates() {
    let dir = tmp("sweep");
    let out = bin()
        .args([
            "sweep", "--problem", "example1", "--dim", "2", "--axis", "dt", "--values",
            "0.25,0.125,0.0625", "--dt", "0.25", "--paths", "300", "--level", "3", "--seed", "2",
            "--eval-points", "2000",
        ])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.join("sweep.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "dt,l2_error,rate");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].ends_with(','), "first row has no rate: {}", lines[1]);
    let rate: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
    assert!(rate.is_finite());
}

#[test]
fn reference_round_trip_feeds_sweep() {
    let ref_dir = tmp("ref");
    let out = bin()
        .args([
            "reference", "--problem", "example3-warm", "--dim", "4", "--alpha", "0.5", "--dt",
            "0.0625", "--paths", "2000", "--level", "2", "--seed", "3",
        ])
        .arg("--out")
        .arg(&ref_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(ref_dir.join("reference.bin").exists());
    assert!(read(&ref_dir.join("manifest.txt")).contains("example3-warm"));

    let sweep_dir = tmp("ref-sweep");
    let out = bin()
        .args([
            "sweep", "--problem", "example3-warm", "--dim", "4", "--alpha", "0.5", "--axis", "dt",
            "--values", "0.25,0.125,0.0625", "--dt", "0.25", "--paths", "500", "--level", "2",
            "--seed", "4", "--eval-points", "2000",
        ])
        .arg("--reference")
        .arg(&ref_dir)
        .arg("--out")
        .arg(&sweep_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&sweep_dir.join("sweep.csv"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tmp("config");
    let cfg_path = dir.join("run.toml");
    std::fs::write(
        &cfg_path,
        "seed = 5\n[solver]\ndt = 0.25\nm_paths = 150\n[grid]\nlevel = 2\n",
    )
    .unwrap();
    let out = bin()
        .args(["solve", "--problem", "example1", "--dim", "2", "--eval-points", "500"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let manifest = read(&dir.join("manifest.txt"));
    assert!(manifest.contains("seed = 5"));
    assert!(manifest.contains("m_paths = 150"));
    assert!(manifest.contains("grid_level = 2"));

    // flag overrides the file
    let out = bin()
        .args(["solve", "--problem", "example1", "--dim", "2", "--seed", "9", "--eval-points", "500"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(read(&dir.join("manifest.txt")).contains("seed = 9"));
}

#[test]
fn high_dimension_requires_long_flag() {
    let out = bin()
        .args(["solve", "--problem", "example2", "--dt", "0.25", "--paths", "10"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--long"));
}
