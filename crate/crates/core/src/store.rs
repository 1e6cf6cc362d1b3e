//! Run manifests, experiment reports and digest-checked persistence.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dla::Aggregate;
use crate::geometry::{Site, WedgeSpec};
use crate::oracle::{HitDistribution, SolveReport};
use crate::stats::LinearFit;

/// Version of the binary and of every file format it writes.
pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"), " format 1");

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const ATTACHMENTS_CSV: &str = "attachments.csv";
pub const HITS_JSON: &str = "hits.json";
pub const HITS_CSV: &str = "hits.csv";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}: digest mismatch (expected {expected}, found {actual})")]
    Digest { file: String, expected: String, actual: String },
    #[error("{0} is not listed in the manifest")]
    Unlisted(String),
    #[error("{file}: {message}")]
    Format { file: String, message: String },
    #[error("artifact version {found:?} differs from this binary's {expected:?}")]
    Version { found: String, expected: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn format_err(file: &str, message: impl ToString) -> StoreError {
    StoreError::Format { file: file.to_string(), message: message.to_string() }
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(name: &str, bytes: &[u8]) -> Self {
        FileDigest { name: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) }
    }
}

/// Writes `bytes` to `dir/name` and returns its digest.
pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileDigest, StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(FileDigest::of(name, bytes))
}

/// Reads `dir/name` and checks it against the digest listed for `name`.
pub fn read_verified(dir: &Path, name: &str, digests: &[FileDigest]) -> Result<Vec<u8>, StoreError> {
    let expected = digests.iter().find(|d| d.name == name).ok_or_else(|| StoreError::Unlisted(name.to_string()))?;
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let actual = sha256_hex(&bytes);
    if actual != expected.sha256 || bytes.len() as u64 != expected.bytes {
        return Err(StoreError::Digest { file: name.to_string(), expected: expected.sha256.clone(), actual });
    }
    Ok(bytes)
}

fn read_text(dir: &Path, name: &str, digests: &[FileDigest]) -> Result<String, StoreError> {
    String::from_utf8(read_verified(dir, name, digests)?).map_err(|e| format_err(name, e))
}

/// An invariant evaluated during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.to_string(), passed, detail: detail.into() }
    }
}

/// One parameter tuple and its estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub label: String,
    pub params: Vec<(String, String)>,
    pub estimate: f64,
    pub stderr: f64,
    /// Zero for exact oracle values.
    pub trials: u64,
    pub cap_hits: u64,
    /// Closed-form or theoretical value the estimate is compared with.
    pub reference: Option<f64>,
}

/// A fitted line; non-finite confidence data is stored as `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub label: String,
    pub x: String,
    pub y: String,
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: Option<f64>,
    pub slope_half_width: Option<f64>,
    pub theory_slope: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl FitSummary {
    pub fn from_linear(label: &str, x: &str, y: &str, fit: &LinearFit, theory_slope: Option<f64>) -> Self {
        FitSummary {
            label: label.to_string(),
            x: x.to_string(),
            y: y.to_string(),
            points: fit.points.clone(),
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            slope_stderr: finite(fit.slope_stderr),
            slope_half_width: finite(fit.slope_half_width),
            theory_slope,
        }
    }
}

/// Parameter grid, per-cell estimates and fits of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub command: String,
    pub cells: Vec<ReportCell>,
    pub fits: Vec<FitSummary>,
    pub checks: Vec<Check>,
    /// Interpretation notes, e.g. which truncation an experiment used.
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(command: &str) -> Self {
        ExperimentReport { command: command.to_string(), ..Default::default() }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    /// `cell,parameters,estimate,stderr,trials,cap_hits,reference`, with
    /// parameters joined as `k=v;k=v`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,parameters,estimate,stderr,trials,cap_hits,reference\n");
        for c in &self.cells {
            let params = c.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
            let reference = c.reference.map_or(String::new(), |r| format!("{r:?}"));
            out.push_str(&format!(
                "{},{},{:?},{:?},{},{},{}\n",
                c.label, params, c.estimate, c.stderr, c.trials, c.cap_hits, reference
            ));
        }
        out
    }
}

/// Provenance of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub theta1: String,
    pub theta2: String,
    pub phi: f64,
    /// Every parameter with defaults applied; parses back to the same run.
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    /// Random stream name to its 64-bit experiment id (hex).
    pub streams: BTreeMap<String, String>,
    pub workers: usize,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub checks_passed: bool,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        serde_json::from_str(text).map_err(|e| format_err(MANIFEST_FILE, e))
    }

    pub fn write(&self, dir: &Path) -> Result<(), StoreError> {
        write_file(dir, MANIFEST_FILE, self.to_json().as_bytes()).map(|_| ())
    }

    /// Reads `dir/manifest.json`, or the file itself when `path` is not a directory.
    pub fn read(path: &Path) -> Result<Self, StoreError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(io_err(&file))?;
        RunManifest::from_json(&text)
    }

    pub fn check_version(&self) -> Result<(), StoreError> {
        if self.artifact_version != ARTIFACT_VERSION {
            return Err(StoreError::Version { found: self.artifact_version.clone(), expected: ARTIFACT_VERSION.into() });
        }
        Ok(())
    }

    pub fn output(&self, name: &str) -> Option<&FileDigest> {
        self.outputs.iter().find(|d| d.name == name)
    }
}

pub fn persist_report(dir: &Path, report: &ExperimentReport) -> Result<Vec<FileDigest>, StoreError> {
    let json = serde_json::to_string_pretty(report).map_err(|e| format_err(REPORT_JSON, e))? + "\n";
    Ok(vec![write_file(dir, REPORT_JSON, json.as_bytes())?, write_file(dir, REPORT_CSV, report.to_csv().as_bytes())?])
}

pub fn load_report(dir: &Path, digests: &[FileDigest]) -> Result<ExperimentReport, StoreError> {
    let text = read_text(dir, REPORT_JSON, digests)?;
    serde_json::from_str(&text).map_err(|e| format_err(REPORT_JSON, e))
}

pub fn persist_aggregate(dir: &Path, agg: &Aggregate) -> Result<Vec<FileDigest>, StoreError> {
    Ok(vec![
        write_file(dir, AGGREGATE_CSV, agg.to_csv().as_bytes())?,
        write_file(dir, ATTACHMENTS_CSV, agg.records_to_csv().as_bytes())?,
    ])
}

pub fn load_aggregate(dir: &Path, spec: WedgeSpec, digests: &[FileDigest]) -> Result<Aggregate, StoreError> {
    let sites = read_text(dir, AGGREGATE_CSV, digests)?;
    let records = if digests.iter().any(|d| d.name == ATTACHMENTS_CSV) {
        Some(read_text(dir, ATTACHMENTS_CSV, digests)?)
    } else {
        None
    };
    Aggregate::from_csv(spec, &sites, records.as_deref()).map_err(|e| format_err(AGGREGATE_CSV, e))
}

/// JSON form of a hitting law; site-keyed maps become lists.
#[derive(Serialize, Deserialize)]
struct HitRecord {
    source: Site,
    labels: Vec<String>,
    probs: Vec<(Site, f64)>,
    by_label: Vec<f64>,
    expected_steps: f64,
    report: SolveReport,
}

pub fn hits_to_csv(dist: &HitDistribution) -> String {
    let mut out = String::from("x,y,probability\n");
    for (p, v) in &dist.probs {
        out.push_str(&format!("{},{},{v:?}\n", p.x, p.y));
    }
    out
}

pub fn persist_hits(dir: &Path, dist: &HitDistribution) -> Result<Vec<FileDigest>, StoreError> {
    let record = HitRecord {
        source: dist.source,
        labels: dist.labels.clone(),
        probs: dist.probs.iter().map(|(p, v)| (*p, *v)).collect(),
        by_label: dist.by_label.clone(),
        expected_steps: dist.expected_steps,
        report: dist.report,
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| format_err(HITS_JSON, e))? + "\n";
    Ok(vec![write_file(dir, HITS_JSON, json.as_bytes())?, write_file(dir, HITS_CSV, hits_to_csv(dist).as_bytes())?])
}

pub fn load_hits(dir: &Path, digests: &[FileDigest]) -> Result<HitDistribution, StoreError> {
    let text = read_text(dir, HITS_JSON, digests)?;
    let r: HitRecord = serde_json::from_str(&text).map_err(|e| format_err(HITS_JSON, e))?;
    Ok(HitDistribution {
        source: r.source,
        labels: r.labels,
        probs: r.probs.into_iter().collect(),
        by_label: r.by_label,
        expected_steps: r.expected_steps,
        report: r.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Slope;
    use crate::oracle::HarmonicProblem;

    fn sample_report() -> ExperimentReport {
        let mut r = ExperimentReport::new("escape");
        r.cells.push(ReportCell {
            label: "r=1/3".into(),
            params: vec![("r".into(), "64".into())],
            estimate: 1.0 / 3.0,
            stderr: 0.1f64.sqrt(),
            trials: 7,
            cap_hits: 0,
            reference: Some(std::f64::consts::PI),
        });
        r.check("unit", true, "");
        r
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for report in [ExperimentReport::default(), sample_report()] {
            let d = persist_report(dir.path(), &report).unwrap();
            assert_eq!(load_report(dir.path(), &d).unwrap(), report);
        }
        assert_eq!(ExperimentReport::default().to_csv().lines().count(), 1);
    }

    #[test]
    fn truncated_file_is_a_digest_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = persist_report(dir.path(), &sample_report()).unwrap();
        let path = dir.path().join(REPORT_JSON);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_report(dir.path(), &d), Err(StoreError::Digest { .. })));
    }

    #[test]
    fn hits_round_trip() {
        let spec = WedgeSpec::new(Slope::horizontal(), Slope::new(1, 1).unwrap()).unwrap();
        let domain = spec.ball_sector(6.0).unwrap();
        let target = spec.ring(6.0).unwrap();
        let problem = HarmonicProblem::new(&spec, &domain, vec![("ring".into(), target)], crate::oracle::OuterBoundary::Closed).unwrap();
        let dist = problem.hit_distribution(Site::new(2, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let d = persist_hits(dir.path(), &dist).unwrap();
        assert_eq!(load_hits(dir.path(), &d).unwrap(), dist);
    }

    #[test]
    fn unlisted_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "x.csv", b"a\n").unwrap();
        assert!(matches!(read_verified(dir.path(), "x.csv", &[]), Err(StoreError::Unlisted(_))));
    }
}
