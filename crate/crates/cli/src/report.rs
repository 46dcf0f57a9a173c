//! Result tables and on-disk artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Version of the `results.csv` / `diagnostics.csv` layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const RESULTS_COLUMNS: [&str; 10] = [
    "experiment",
    "fixture",
    "seed",
    "label",
    "t",
    "value",
    "reference",
    "se",
    "tolerance",
    "verdict",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        }
    }
}

/// One checked quantity.
///
/// `tolerance` is the allowed `|value - reference|` unless the label says
/// otherwise (slopes and counts compare against `reference` directly).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub label: String,
    pub t: f64,
    pub value: f64,
    pub reference: Option<f64>,
    pub se: Option<f64>,
    pub tolerance: Option<f64>,
    pub verdict: Verdict,
}

impl ResultRow {
    /// A row judged by `|value - reference| <= tolerance`.
    pub fn within(label: impl Into<String>, t: f64, value: f64, reference: f64, se: Option<f64>, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            t,
            value,
            reference: Some(reference),
            se,
            tolerance: Some(tolerance),
            verdict: Verdict::from_bool((value - reference).abs() <= tolerance),
        }
    }
}

/// Free-form `(label, key, value)` diagnostics in long format.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub label: String,
    pub key: String,
    pub value: String,
}

impl DiagnosticRow {
    pub fn new(label: impl Into<String>, key: impl Into<String>, value: impl ToString) -> Self {
        Self {
            label: label.into(),
            key: key.into(),
            value: value.to_string(),
        }
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    pub diagnostics: Vec<DiagnosticRow>,
    /// Extra plot-ready files, `(file name, contents)`.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.verdict == Verdict::Fail).count()
    }

    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.failures() == 0
    }

    pub fn diag(&mut self, label: impl Into<String>, key: impl Into<String>, value: impl ToString) {
        self.diagnostics.push(DiagnosticRow::new(label, key, value));
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `results.csv` bytes: a `# schema=N` comment line then the table.
pub fn results_csv(cfg: &ExperimentConfig, report: &Report) -> Result<Vec<u8>, CliError> {
    let mut out = format!("# schema={SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(RESULTS_COLUMNS)?;
        let seed = cfg.seed().to_string();
        for r in &report.rows {
            w.write_record([
                cfg.kind.as_str(),
                cfg.fixture.id,
                &seed,
                &r.label,
                &r.t.to_string(),
                &r.value.to_string(),
                &opt(r.reference),
                &opt(r.se),
                &opt(r.tolerance),
                r.verdict.as_str(),
            ])?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn diagnostics_csv(cfg: &ExperimentConfig, report: &Report) -> Result<Vec<u8>, CliError> {
    let mut out = format!("# schema={SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["experiment", "fixture", "label", "key", "value"])?;
        for d in &report.diagnostics {
            w.write_record([cfg.kind.as_str(), cfg.fixture.id, &d.label, &d.key, &d.value])?;
        }
        w.flush()?;
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema: u32,
    pub experiment: String,
    pub fixture: String,
    pub fixture_version: u32,
    pub catalogue_version: u32,
    pub seed: u64,
    /// SHA-256 of the effective config (file plus command-line overrides),
    /// excluding the output location.
    pub config_sha256: String,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub rows: usize,
    pub failures: usize,
    pub files: Vec<String>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.raw.output = Default::default();
    let digest = Sha256::digest(canonical.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Creates `dir` if needed and checks that it accepts files.
pub fn prepare_output_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".pathfk-write-probe");
    fs::write(&probe, b"").map_err(|e| CliError::Io(format!("{} is not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

/// Writes `results.csv`, `diagnostics.csv`, the extra artifacts and
/// `manifest.json` into `dir`, in that order.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    report: &Report,
    wall_time: Duration,
    threads: usize,
) -> Result<Manifest, CliError> {
    prepare_output_dir(dir)?;
    let mut files = vec!["results.csv".to_string(), "diagnostics.csv".to_string()];
    write_file(dir, "results.csv", &results_csv(cfg, report)?)?;
    write_file(dir, "diagnostics.csv", &diagnostics_csv(cfg, report)?)?;
    for (name, bytes) in &report.artifacts {
        write_file(dir, name, bytes)?;
        files.push(name.clone());
    }
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        experiment: cfg.kind.to_string(),
        fixture: cfg.fixture.id.to_string(),
        fixture_version: cfg.fixture.version,
        catalogue_version: pathfk::fixtures::CATALOGUE_VERSION,
        seed: cfg.seed(),
        config_sha256: config_hash(cfg),
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        threads,
        wall_time_seconds: wall_time.as_secs_f64(),
        rows: report.rows.len(),
        failures: report.failures(),
        files,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_file(dir, "manifest.json", &json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::parse("[experiment]\nkind = \"solve\"\nfixture = \"heat-quadratic\"\n", ".").unwrap()
    }

    #[test]
    fn results_layout() {
        let report = Report {
            rows: vec![
                ResultRow::within("y_root", 0.0, 1.01, 1.0, Some(0.01), 0.03),
                ResultRow {
                    label: "slope".into(),
                    t: 0.0,
                    value: 0.3,
                    reference: None,
                    se: None,
                    tolerance: None,
                    verdict: Verdict::Fail,
                },
            ],
            ..Default::default()
        };
        let text = String::from_utf8(results_csv(&cfg(), &report).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema=1");
        assert_eq!(lines[1], RESULTS_COLUMNS.join(","));
        assert_eq!(lines[2], "solve,heat-quadratic,1,y_root,0,1.01,1,0.01,0.03,PASS");
        assert_eq!(lines[3], "solve,heat-quadratic,1,slope,0,0.3,,,,FAIL");
        assert_eq!(report.failures(), 1);
        assert!(!report.passed());
    }

    #[test]
    fn hash_tracks_overrides() {
        let a = cfg();
        let mut b = cfg();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.set_output_dir("elsewhere".into());
        assert_eq!(config_hash(&a), config_hash(&b));
        b.set_seed(2);
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn outputs_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = Report::default();
        report.rows.push(ResultRow::within("x", 0.0, 1.0, 1.0, None, 0.0));
        report.diag("x", "k", 3);
        report.artifacts.push(("extra.csv".into(), b"a\n1\n".to_vec()));
        let m = write_outputs(dir.path(), &cfg(), &report, Duration::from_millis(5), 1).unwrap();
        assert_eq!(m.files, vec!["results.csv", "diagnostics.csv", "extra.csv"]);
        for f in ["results.csv", "diagnostics.csv", "extra.csv", "manifest.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
        assert_eq!(manifest["experiment"], "solve");
    }
}
