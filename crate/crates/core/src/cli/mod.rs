//! Scenario files, the experiment catalog and report emission.

pub mod catalog;
pub mod check;
pub mod scenario;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use catalog::{experiment, ExperimentParams, CATALOG};
pub use check::{run_check, CheckOutcome};
pub use scenario::{run_scenario, run_scenario_str, Scenario};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown experiment `{0}` (see `hoferlab list`)")]
    UnknownExperiment(String),
    #[error("io error at {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

/// Default tolerances. Scenario files may override any field; every report echoes the block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub ode: f64,
    /// Closure of a sampled orbit period against its prediction.
    pub period: f64,
    pub length: f64,
    pub shear_lift: f64,
    /// Relative gap between a disjoined area and its target.
    pub strip_area: f64,
    pub gluing: f64,
    pub gluing_identical: f64,
    pub compare_identity: f64,
    pub area_spread: f64,
    pub split_area: f64,
    pub trap_jacobian: f64,
    pub trap_domination: f64,
    /// Certified capacity as a fraction of the oscillation.
    pub ball_fraction: f64,
    /// `|ℒ − osc F|` relative to `osc F`.
    pub flatness_length: f64,
    pub swept_spread: f64,
    pub rigidity_period: f64,
    pub hz_witness_period: f64,
    pub moser_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ode: 1e-12,
            period: 1e-3,
            length: 1e-9,
            shear_lift: 1e-6,
            strip_area: 0.02,
            gluing: 1e-5,
            gluing_identical: 1e-10,
            compare_identity: 1e-5,
            area_spread: 1e-5,
            split_area: 1e-7,
            trap_jacobian: 1e-6,
            trap_domination: 1e-9,
            ball_fraction: 0.95,
            flatness_length: 1e-4,
            swept_spread: 1e-7,
            rigidity_period: 1e-3,
            hz_witness_period: 1e-4,
            moser_residual: 5e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "holds")]
    Holds,
}

/// One quantitative claim with its bound and what it was measured against.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub pass: bool,
    pub oracle: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64, oracle: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value,
            relation: Relation::AtMost,
            bound,
            pass: value <= bound,
            oracle: oracle.into(),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64, oracle: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value,
            relation: Relation::AtLeast,
            bound,
            pass: value >= bound,
            oracle: oracle.into(),
        }
    }

    /// A yes/no claim; `value` is 1 or 0.
    pub fn holds(name: impl Into<String>, ok: bool, oracle: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            relation: Relation::Holds,
            bound: 1.0,
            pass: ok,
            oracle: oracle.into(),
        }
    }
}

/// Named columns of numbers, written as one CSV file by the plotdata sink.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Curve {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record(&self.columns);
        for r in &self.rows {
            let _ = w.write_record(r.iter().map(|v| v.to_string()));
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).expect("utf-8 csv")
    }
}

/// Result of one experiment or scenario step. Wall-clock time is kept out of the
/// serialized form so that reports compare byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub id: String,
    pub version: String,
    pub inputs: Value,
    pub tolerances: Tolerances,
    pub results: Value,
    pub checks: Vec<Check>,
    /// Conclusions quoted rather than computed, each naming the evidence behind it.
    pub cited: Vec<String>,
    pub error: Option<String>,
    pub pass: bool,
    #[serde(skip)]
    pub curves: Vec<Curve>,
    #[serde(skip)]
    pub runtime_secs: f64,
    /// Wall-clock seconds per named stage, accumulated.
    #[serde(skip)]
    pub stages: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn new(id: impl Into<String>, inputs: Value, tolerances: &Tolerances) -> Self {
        ExperimentReport {
            id: id.into(),
            version: VERSION.into(),
            inputs,
            tolerances: tolerances.clone(),
            results: Value::Object(Default::default()),
            checks: Vec::new(),
            cited: Vec::new(),
            error: None,
            pass: false,
            curves: Vec::new(),
            runtime_secs: 0.0,
            stages: BTreeMap::new(),
        }
    }

    pub fn result(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).unwrap_or(Value::Null);
        if let Value::Object(m) = &mut self.results {
            m.insert(key.into(), v);
        }
    }

    /// Run `f`, adding its wall-clock time to `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        *self.stages.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn cite(&mut self, conclusion: &str, evidence: &str) {
        self.cited.push(format!("cited conclusion: {conclusion}; supported by {evidence}"));
    }

    /// Record an operation error; the report fails but later work continues.
    pub fn fail(&mut self, what: &str, e: impl std::fmt::Display) {
        let msg = format!("{what}: {e}");
        self.error = Some(match self.error.take() {
            Some(prev) => format!("{prev}; {msg}"),
            None => msg,
        });
    }

    pub fn finish(mut self) -> Self {
        self.pass = self.error.is_none() && self.checks.iter().all(|c| c.pass);
        self
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Plotdata,
}

pub const ALL_FORMATS: [Format; 3] = [Format::Json, Format::Csv, Format::Plotdata];

pub fn to_json(reports: &[ExperimentReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

fn checks_csv(reports: &[ExperimentReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["report", "check", "value", "relation", "bound", "pass"]);
    for r in reports {
        for c in &r.checks {
            let rel = serde_json::to_value(c.relation).unwrap();
            let row = [r.id.clone(), c.name.clone(), c.value.to_string(), rel.as_str().unwrap().to_string(), c.bound.to_string(), c.pass.to_string()];
            let _ = w.write_record(&row);
        }
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).expect("utf-8 csv")
}

fn safe_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

/// Write reports into `dir` in each requested format, plus `manifest.json`
/// listing every file written (relative to `dir`).
pub fn emit(reports: &[ExperimentReport], formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    let mut write = |rel: PathBuf, body: &str| -> Result<(), CliError> {
        let full = dir.join(&rel);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&full, body).map_err(|e| CliError::io(&full, e))?;
        files.push(rel);
        Ok(())
    };
    if !reports.is_empty() {
        for f in formats {
            match f {
                Format::Json => write("reports.json".into(), &to_json(reports))?,
                Format::Csv => write("checks.csv".into(), &checks_csv(reports))?,
                Format::Plotdata => {
                    for r in reports {
                        for c in &r.curves {
                            let rel = Path::new("plotdata").join(safe_name(&r.id)).join(format!("{}.csv", safe_name(&c.name)));
                            write(rel, &c.to_csv())?;
                        }
                    }
                }
            }
        }
    }
    let listed: Vec<String> = files.iter().map(|p| p.to_string_lossy().replace('\\', "/")).collect();
    let manifest = serde_json::to_string_pretty(&serde_json::json!({ "version": VERSION, "files": listed })).unwrap();
    let path = dir.join("manifest.json");
    fs::write(&path, manifest + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_gives_empty_manifest() {
        let dir = std::env::temp_dir().join(format!("hoferlab-emit-{}", std::process::id()));
        let files = emit(&[], &ALL_FORMATS, &dir).unwrap();
        assert!(files.is_empty());
        let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["files"], serde_json::json!([]));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn invalid_path_is_io_error() {
        let file = std::env::temp_dir().join(format!("hoferlab-emit-file-{}", std::process::id()));
        fs::write(&file, "x").unwrap();
        let r = ExperimentReport::new("a", Value::Null, &Tolerances::default()).finish();
        assert!(matches!(emit(&[r], &[Format::Json], &file.join("sub")), Err(CliError::Io { .. })));
        fs::remove_file(file).unwrap();
    }

    #[test]
    fn report_pass_needs_all_checks() {
        let mut r = ExperimentReport::new("a", Value::Null, &Tolerances::default());
        r.check(Check::at_most("x", 1.0, 2.0, "bound"));
        assert!(r.clone().finish().pass);
        r.check(Check::at_least("y", 1.0, 2.0, "bound"));
        assert!(!r.finish().pass);
    }

    #[test]
    fn check_names_with_commas_are_quoted() {
        let mut r = ExperimentReport::new("a", Value::Null, &Tolerances::default());
        r.check(Check::at_most("x, y", 1.0, 2.0, "bound"));
        let csv = checks_csv(&[r.finish()]);
        assert_eq!(csv.lines().nth(1).unwrap(), "a,\"x, y\",1,<=,2,true");
    }

    #[test]
    fn tolerances_accept_partial_override() {
        let t: Tolerances = serde_json::from_str(r#"{"period": 0.5}"#).unwrap();
        assert_eq!(t.period, 0.5);
        assert_eq!(t.length, Tolerances::default().length);
        assert!(serde_json::from_str::<Tolerances>(r#"{"nope": 1}"#).is_err());
    }
}
