//! CSV tables, JSON summaries and run reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lab::config::{ExperimentConfig, ExperimentKind};

/// Top-level keys of every JSON summary.
pub const SUMMARY_KEYS: [&str; 7] =
    ["config", "code_version", "summary", "measured_constants", "measured_constants_note", "pass_fail", "files"];

pub const MEASURED_NOTE: &str = "measured from data, not an analytic constant";

/// Outcome of one experiment.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub summary: BTreeMap<String, f64>,
    pub measured_constants: BTreeMap<String, f64>,
    pub pass_fail: BTreeMap<String, bool>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentReport {
            kind,
            summary: BTreeMap::new(),
            measured_constants: BTreeMap::new(),
            pass_fail: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.pass_fail.values().all(|&p| p)
    }

    pub fn scalar(&mut self, key: &str, value: f64) {
        self.summary.insert(key.to_string(), value);
    }

    pub fn constant(&mut self, key: &str, value: f64) {
        self.measured_constants.insert(key.to_string(), value);
    }

    pub fn check(&mut self, key: &str, pass: bool) {
        self.pass_fail.insert(key.to_string(), pass);
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes a numeric table with a header row.
pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header.iter().map(AsRef::as_ref)).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(f64::to_string)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes a table of preformatted cells.
pub fn write_text_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header.iter().map(AsRef::as_ref)).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => Error::InvalidConfig(format!("{}: {other:?}", path.display())),
    }
}

/// `git describe --always --dirty` of the source tree, or the crate version outside git.
pub fn code_version() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("dnls-core {}", env!("CARGO_PKG_VERSION")))
}

/// Writes `summary.json` into `dir` and adds it to the report's file list.
pub fn write_summary(dir: &Path, cfg: &ExperimentConfig, report: &mut ExperimentReport) -> Result<PathBuf> {
    let path = dir.join("summary.json");
    report.files.push(path.clone());
    let value = serde_json::json!({
        "config": cfg,
        "code_version": code_version(),
        "summary": report.summary,
        "measured_constants": report.measured_constants,
        "measured_constants_note": MEASURED_NOTE,
        "pass_fail": report.pass_fail,
        "files": report.files,
    });
    let text = serde_json::to_string_pretty(&value)?;
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_has_the_documented_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::preset(ExperimentKind::Single);
        let mut report = ExperimentReport::new(ExperimentKind::Single);
        report.scalar("x", 1.0);
        report.constant("C", 2.0);
        report.check("ok", true);
        let path = write_summary(dir.path(), &cfg, &mut report).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        let mut expected = SUMMARY_KEYS.to_vec();
        expected.sort_unstable();
        assert_eq!(keys, expected);
        assert_eq!(obj["measured_constants_note"], MEASURED_NOTE);
        let back: ExperimentConfig = serde_json::from_value(obj["config"].clone()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, &["a", "b"], &[vec![1.0, 0.1], vec![-2.5e-300, 3.0]]).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<Vec<f64>> =
            r.records().map(|rec| rec.unwrap().iter().map(|s| s.parse().unwrap()).collect()).collect();
        assert_eq!(rows, vec![vec![1.0, 0.1], vec![-2.5e-300, 3.0]]);
    }
}
