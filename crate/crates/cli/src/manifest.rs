//! Run manifests (one JSON object per line) and the `report` aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::output::fmt_f64;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// Human-readable acceptance region, e.g. `<= 1e-10` or `[0.4, 0.6]`.
    pub target: String,
}

impl CheckRecord {
    pub fn at_most(name: &str, measured: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured <= tol,
            measured,
            target: format!("<= {}", fmt_f64(tol)),
        }
    }

    pub fn at_least(name: &str, measured: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured >= tol,
            measured,
            target: format!(">= {}", fmt_f64(tol)),
        }
    }

    pub fn within(name: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            passed: (lo..=hi).contains(&measured),
            measured,
            target: format!("[{}, {}]", fmt_f64(lo), fmt_f64(hi)),
        }
    }

    /// A yes/no check; `measured` is 1 or 0.
    pub fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            passed: ok,
            measured: if ok { 1.0 } else { 0.0 },
            target: "1".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub checks: Vec<CheckRecord>,
    /// Informational measurements that are not asserted.
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    pub data_files: Vec<String>,
    pub passed: bool,
}

impl RunManifest {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("manifests serialize")
    }
}

/// Every manifest in an NDJSON file.
pub fn read_manifests(path: &Path) -> Result<Vec<RunManifest>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: RunManifest = serde_json::from_str(line)
            .map_err(|e| CliError::Schema(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema(format!(
                "{}:{}: schema_version {}",
                path.display(),
                i + 1,
                m.schema_version
            )));
        }
        let mut names: Vec<&str> = m.checks.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::Schema(format!("{}:{}: check `{}` appears twice", path.display(), i + 1, w[0])));
        }
        if m.passed != m.checks.iter().all(|c| c.passed) {
            return Err(CliError::Schema(format!(
                "{}:{}: `passed` disagrees with the checks",
                path.display(),
                i + 1
            )));
        }
        out.push(m);
    }
    Ok(out)
}

pub struct Report {
    /// One row per manifest, sorted by experiment name.
    pub summary_csv: String,
    /// One row per check.
    pub checks_csv: String,
    pub text: String,
    pub all_passed: bool,
}

pub fn build_report(mut manifests: Vec<RunManifest>) -> Result<Report, CliError> {
    manifests.sort_by(|a, b| a.experiment.cmp(&b.experiment));
    let mut summary = csv::Writer::from_writer(Vec::new());
    let mut checks = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Io(e.to_string());
    summary
        .write_record(["experiment", "seed", "config_hash", "n_checks", "n_failed", "passed"])
        .map_err(csv_err)?;
    checks
        .write_record(["experiment", "check", "measured", "target", "passed"])
        .map_err(csv_err)?;
    let mut text = String::new();
    for m in &manifests {
        let failed = m.checks.iter().filter(|c| !c.passed).count();
        summary
            .write_record([
                m.experiment.clone(),
                m.seed.to_string(),
                m.config_hash.clone(),
                m.checks.len().to_string(),
                failed.to_string(),
                m.passed.to_string(),
            ])
            .map_err(csv_err)?;
        let _ = writeln!(
            text,
            "{} {} (seed {}, {}/{} checks)",
            if m.passed { "PASS" } else { "FAIL" },
            m.experiment,
            m.seed,
            m.checks.len() - failed,
            m.checks.len()
        );
        for c in &m.checks {
            checks
                .write_record([
                    m.experiment.clone(),
                    c.name.clone(),
                    fmt_f64(c.measured),
                    c.target.clone(),
                    c.passed.to_string(),
                ])
                .map_err(csv_err)?;
            let _ = writeln!(
                text,
                "    {} {} = {} (target {})",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                fmt_f64(c.measured),
                c.target
            );
        }
    }
    let all_passed = manifests.iter().all(|m| m.passed);
    let _ = writeln!(
        text,
        "{} manifest(s), {} failed",
        manifests.len(),
        manifests.iter().filter(|m| !m.passed).count()
    );
    let finish = |w: csv::Writer<Vec<u8>>| String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8");
    Ok(Report {
        summary_csv: finish(summary),
        checks_csv: finish(checks),
        text,
        all_passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(name: &str, passed: bool) -> RunManifest {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            experiment: name.into(),
            config_hash: "00".into(),
            code_version: "0".into(),
            seed: 1,
            wall_time_secs: 0.5,
            checks: vec![CheckRecord::flag("ok", passed)],
            values: BTreeMap::new(),
            data_files: vec![],
            passed,
        }
    }

    #[test]
    fn sorted_rows_and_status() {
        let r = build_report(vec![manifest("slnd", true), manifest("kernel", true)]).unwrap();
        let rows: Vec<&str> = r.summary_csv.lines().collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].starts_with("kernel,") && rows[2].starts_with("slnd,"));
        assert!(r.all_passed);
        assert!(!build_report(vec![manifest("a", true), manifest("b", false)]).unwrap().all_passed);
        let empty = build_report(vec![]).unwrap();
        assert!(empty.all_passed);
        assert_eq!(empty.summary_csv.lines().count(), 1);
    }

    #[test]
    fn line_round_trip() {
        let m = manifest("kernel", true);
        let back: RunManifest = serde_json::from_str(&m.to_line()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn check_regions() {
        assert!(CheckRecord::at_most("a", 1.0, 1.0).passed);
        assert!(!CheckRecord::at_least("a", 0.5, 1.0).passed);
        assert!(CheckRecord::within("a", 0.5, 0.4, 0.6).passed);
        assert!(!CheckRecord::within("a", f64::NAN, 0.4, 0.6).passed);
    }
}
