use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hoferlab::cli::{experiment, run_scenario_str, ExperimentParams, Tolerances};
use serde_json::Value;

fn hoferlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoferlab")).args(args).output().expect("binary runs")
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("hoferlab-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn example_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/sphere-rotation.json")
}

#[test]
fn list_names_every_experiment() {
    let out = hoferlab(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["sphere-loop", "torus-shear", "glue-compare", "flatness", "hz-lower-bound", "linear-rigidity"] {
        assert!(text.lines().any(|l| l == name), "{name} missing from list");
    }
}

#[test]
fn run_writes_manifest_listing_existing_files() {
    let dir = scratch("run");
    let out = hoferlab(&["run", example_scenario().to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f == "reports.json"));
    for f in files {
        assert!(dir.join(f.as_str().unwrap()).is_file(), "{f} listed but missing");
    }
    let reports: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("reports.json")).unwrap()).unwrap();
    let ids: Vec<&str> = reports.as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["length", "period", "trajectory"]);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn scenario_period_matches_closed_form() {
    // F = c z on a sphere of area A rotates with period A / (2c)
    let (area, c) = (4.0, 2.0);
    let text = std::fs::read_to_string(example_scenario()).unwrap();
    let reports = run_scenario_str(&text, None).unwrap();
    let period = reports.iter().find(|r| r.id == "period").unwrap();
    let v = period.results["value"].as_f64().unwrap();
    assert!((v - area / (2.0 * c)).abs() < 1e-4, "period {v}");
    let length = reports.iter().find(|r| r.id == "length").unwrap();
    assert!((length.results["value"].as_f64().unwrap() - 2.0 * c).abs() < 1e-9);
}

#[test]
fn unknown_experiment_is_an_error() {
    let out = hoferlab(&["experiment", "no-such-thing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_scenario_is_an_error() {
    let dir = scratch("bad");
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("bad.json");
    std::fs::write(&f, r#"{"steps": [{"op": "length", "path": "missing"}]}"#).unwrap();
    let out = hoferlab(&["run", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn experiment_output_is_reproducible() {
    let params = ExperimentParams {
        grid: None,
        tol: None,
        tolerances: Tolerances::default(),
    };
    let a = experiment("trapezoid", &params).unwrap();
    let b = experiment("trapezoid", &params).unwrap();
    assert!(a.pass);
    assert_eq!(hoferlab::cli::to_json(&[a]), hoferlab::cli::to_json(&[b]));
}
