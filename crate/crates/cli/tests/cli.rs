use std::path::Path;
use std::process::{Command, Output};

use she_cli::manifest::RunManifest;

fn she(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_she"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> RunManifest {
    let text = std::fs::read_to_string(dir.join("manifest.ndjson")).unwrap();
    assert_eq!(text.lines().count(), 1);
    serde_json::from_str(text.trim()).unwrap()
}

const KERNEL: &str = r#"
schema_version = 1
experiment = "kernel"
seed = 3
out = "kernel-run"

[tolerances]
max_abs_diff = 1e-10

[params]
r_min = 1e-3
r_max = 10.0
n_samples = 300
"#;

const DIMENSION: &str = r#"
schema_version = 1
experiment = "dimension"
seed = 1
n_replicas = 2

[params]
p = 2
n_sites = 4096
kind = { kind = "fixed-time-spatial", t = 0.5, set = { kind = "cantor", depth = 8, ratio = 0.3333333333333333, lo = -1.0, hi = 1.0 } }
window = [2, 5]
"#;

#[test]
fn kernel_duality_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("kernel-duality.toml"), KERNEL).unwrap();
    let out = she(&["run", "kernel-duality.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir.path().join("kernel-run"));
    assert!(m.passed);
    assert_eq!(m.seed, 3);
    let check = m.checks.iter().find(|c| c.name == "max_abs_diff").unwrap();
    assert!(check.measured < 1e-10);
    let csv = std::fs::read_to_string(dir.path().join("kernel-run/kernel.csv")).unwrap();
    assert!(csv.starts_with("r,dist,image_sum,fourier,abs_diff\n"));
    assert_eq!(csv.lines().count(), 301);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("dim.toml"), DIMENSION).unwrap();
    for run in ["a", "b"] {
        let out = she(&["run", "dim.toml", "--seed", "7", "--out", run], dir.path());
        assert!(out.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (manifest(&dir.path().join("a")), manifest(&dir.path().join("b")));
    assert_eq!(a.seed, 7);
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.checks, b.checks);
    assert!(a.data_files.contains(&"counts.csv".to_string()));
    for f in &a.data_files {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    // A different seed changes the data.
    let out = she(&["run", "dim.toml", "--seed", "8", "--out", "c"], dir.path());
    assert!(out.status.code().is_some_and(|c| c <= 1));
    assert_ne!(
        std::fs::read(dir.path().join("a/summary.ndjson")).unwrap(),
        std::fs::read(dir.path().join("c/summary.ndjson")).unwrap()
    );
}

#[test]
fn subcommand_with_config_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("k.toml"), KERNEL).unwrap();
    let out = she(&["kernel", "--config", "k.toml", "--seed", "11", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(manifest(&dir.path().join("o")).seed, 11);
    let out = she(&["variance", "--config", "k.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("bad.toml"), "schema_version = 1\nexperiment = \"kernel\"\nseed = [\n").unwrap();
    let out = she(&["run", "bad.toml"], p);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config parse error") && err.contains("line"), "{err}");

    std::fs::write(p.join("field.toml"), "schema_version = 1\nexperiment = \"kernel\"\n[params]\nr_mn = 1.0\n").unwrap();
    let out = she(&["run", "field.toml"], p);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r_mn"));

    std::fs::write(p.join("unknown.toml"), "schema_version = 1\nexperiment = \"warp\"\n").unwrap();
    let out = she(&["run", "unknown.toml"], p);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown experiment"));
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let strict = KERNEL.replace("max_abs_diff = 1e-10", "max_abs_diff = 0.0");
    std::fs::write(dir.path().join("k.toml"), strict).unwrap();
    let out = she(&["run", "k.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!manifest(&dir.path().join("kernel-run")).passed);
}

#[test]
fn report_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let out = she(&["report", "--out", "empty"], p);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(p.join("empty/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);

    assert_eq!(she(&["variance", "--out", "v"], p).status.code(), Some(0));
    assert_eq!(she(&["kernel", "--out", "k"], p).status.code(), Some(0));
    let out = she(&["report", "v/manifest.ndjson", "k/manifest.ndjson", "--out", "two"], p);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(p.join("two/report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("kernel,") && rows[2].starts_with("variance,"));

    std::fs::write(p.join("k.toml"), KERNEL.replace("max_abs_diff = 1e-10", "max_abs_diff = 0.0")).unwrap();
    assert_eq!(she(&["run", "k.toml", "--out", "f"], p).status.code(), Some(1));
    let out = she(&["report", "k/manifest.ndjson", "f/manifest.ndjson"], p);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(p.join("junk.ndjson"), "{\"schema_version\": 1}\n").unwrap();
    let out = she(&["report", "junk.ndjson"], p);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}
