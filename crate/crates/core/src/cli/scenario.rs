//! Scenario files: a surface, named Hamiltonians and a list of operations.
//!
//! ```json
//! {"surface": {"kind": "plane"}, "support": {"lo": [-1, -1], "hi": [1, 1]},
//!  "defs": {"H": "bump(x^2+y^2; 1)"},
//!  "steps": [{"op": "length", "path": "H", "expect": 1.0, "tol": 1e-9}],
//!  "tolerances": {"period": 1e-4}}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::Result;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use super::catalog::{self, ExperimentParams};
use super::{Check, CliError, Curve, ExperimentReport, Format, Tolerances, ALL_FORMATS};
use crate::capacity::{self, BallOptions, Direction, HzOptions, LocalOptions};
use crate::flatness::{self, GeneratingFunction};
use crate::flow::integrate_flow_uniform;
use crate::hamiltonian::HamiltonianPath;
use crate::hofer::{self, shear, SearchConfig};
use crate::orbits::{self, PeriodOptions, SeedSpec};
use crate::quasicyl::{self, moser, Perturbation};
use crate::surface::{Rect, Surface};

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum PathDef {
    Source(String),
    Full {
        expr: String,
        #[serde(default)]
        support: Option<Rect>,
        #[serde(default)]
        interval: Option<[f64; 2]>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub dir: PathBuf,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

fn all_formats() -> Vec<Format> {
    ALL_FORMATS.to_vec()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default = "default_surface")]
    surface: Surface,
    /// Support box for plane definitions that do not give one.
    #[serde(default)]
    support: Option<Rect>,
    #[serde(default)]
    defs: BTreeMap<String, PathDef>,
    #[serde(default)]
    steps: Vec<Value>,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    outputs: Option<Outputs>,
}

fn default_surface() -> Surface {
    Surface::Plane
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
enum Step {
    Length {
        path: String,
    },
    Extrema {
        path: String,
        #[serde(default)]
        t: f64,
    },
    Calabi {
        path: String,
    },
    Geodesic {
        path: String,
        #[serde(default = "eight")]
        windows: usize,
    },
    Summary {
        path: String,
        #[serde(default = "thirty_two")]
        samples: usize,
    },
    Period {
        path: String,
        seed: Vec<f64>,
        #[serde(default = "two")]
        horizon: f64,
    },
    Trajectory {
        path: String,
        seed: Vec<f64>,
        #[serde(default = "one")]
        t1: f64,
        #[serde(default = "two_hundred")]
        samples: usize,
    },
    ShortOrbit {
        path: String,
        #[serde(default = "one")]
        horizon: f64,
        #[serde(default)]
        seeds: Option<SeedGrid>,
    },
    Rigidity {
        path: String,
        point: Vec<f64>,
        #[serde(default = "one")]
        horizon: f64,
        #[serde(default)]
        seeds: Option<SeedGrid>,
    },
    BallCertificate {
        path: String,
        #[serde(default)]
        epsilon: Option<f64>,
        #[serde(default)]
        grid: Option<usize>,
        #[serde(default)]
        levels: Option<usize>,
    },
    HzCertificate {
        path: String,
        #[serde(default)]
        nu: Option<f64>,
    },
    LocalBall {
        path: String,
        #[serde(default)]
        epsilon: Option<f64>,
    },
    Trapezoid {
        a: f64,
        epsilon: f64,
        direction: Direction,
        #[serde(default = "two_hundred")]
        grid: usize,
    },
    Glue {
        lower: String,
        upper: String,
        nu: f64,
        #[serde(default = "hundred")]
        samples: usize,
    },
    Compare {
        h: String,
        k: String,
        nu: f64,
    },
    Flatness {
        path: String,
    },
    ShearLift {
        path: String,
        t: f64,
        #[serde(default = "thirty")]
        grid: usize,
    },
    Disjoin {
        path: String,
        t: f64,
        #[serde(default = "milli")]
        margin: f64,
        #[serde(default = "hundred")]
        samples: usize,
    },
    Moser {
        #[serde(default = "twelve")]
        grid: usize,
        #[serde(default = "amplitude")]
        amplitude: f64,
        #[serde(default = "six")]
        samples: usize,
        /// Raw dump of the discrete form, relative to the output directory.
        #[serde(default)]
        dump: Option<PathBuf>,
    },
    Experiment {
        name: String,
        #[serde(default)]
        grid: Option<usize>,
        #[serde(default)]
        tol: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedGrid {
    grid: usize,
    #[serde(default)]
    random: usize,
}

impl From<SeedGrid> for SeedSpec {
    fn from(s: SeedGrid) -> Self {
        SeedSpec { grid: s.grid, random: s.random }
    }
}

fn two() -> f64 {
    2.0
}
fn milli() -> f64 {
    1e-3
}
fn amplitude() -> f64 {
    Perturbation::DEFAULT_AMPLITUDE
}
fn six() -> usize {
    6
}
fn eight() -> usize {
    8
}
fn twelve() -> usize {
    12
}
fn thirty() -> usize {
    30
}
fn thirty_two() -> usize {
    32
}
fn hundred() -> usize {
    100
}
fn two_hundred() -> usize {
    200
}

impl Step {
    fn paths(&self) -> Vec<&str> {
        use Step::*;
        match self {
            Length { path } | Extrema { path, .. } | Calabi { path } | Geodesic { path, .. } | Summary { path, .. } => vec![path],
            Period { path, .. } | Trajectory { path, .. } | ShortOrbit { path, .. } | Rigidity { path, .. } => vec![path],
            BallCertificate { path, .. } | HzCertificate { path, .. } | LocalBall { path, .. } | Flatness { path } => vec![path],
            ShearLift { path, .. } | Disjoin { path, .. } => vec![path],
            Glue { lower, upper, .. } => vec![lower, upper],
            Compare { h, k, .. } => vec![h, k],
            Trapezoid { .. } | Moser { .. } | Experiment { .. } => vec![],
        }
    }
}

struct Planned {
    id: String,
    step: Step,
    raw: Value,
    expect: Option<(f64, f64)>,
}

/// A validated scenario: every definition parsed and every reference resolved.
pub struct Scenario {
    pub surface: Surface,
    pub tolerances: Tolerances,
    pub outputs: Option<Outputs>,
    defs: BTreeMap<String, (HamiltonianPath, String)>,
    steps: Vec<Planned>,
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        let mut defs = BTreeMap::new();
        for (name, d) in raw.defs {
            let (src, support, interval) = match d {
                PathDef::Source(s) => (s, None, None),
                PathDef::Full { expr, support, interval } => (expr, support, interval),
            };
            let support = support.or(raw.support);
            let mut p = HamiltonianPath::parse(raw.surface, &src, support).map_err(|e| schema(format!("definition `{name}`: {e}")))?;
            if let Some([a, b]) = interval {
                p = p.with_interval(a, b).map_err(|e| schema(format!("definition `{name}`: {e}")))?;
            }
            defs.insert(name.clone(), (p.with_label(name), src));
        }
        let mut steps = Vec::with_capacity(raw.steps.len());
        for (i, v) in raw.steps.into_iter().enumerate() {
            let Value::Object(mut obj) = v.clone() else {
                return Err(schema(format!("step {} is not an object", i + 1)));
            };
            let id = match obj.remove("id") {
                Some(Value::String(s)) => Some(s),
                None => None,
                Some(_) => return Err(schema(format!("step {}: id must be a string", i + 1))),
            };
            let num = |obj: &mut serde_json::Map<String, Value>, key: &str| -> Result<Option<f64>, CliError> {
                match obj.remove(key) {
                    None => Ok(None),
                    Some(x) => x.as_f64().map(Some).ok_or_else(|| schema(format!("step {}: `{key}` must be a number", i + 1))),
                }
            };
            let expect = num(&mut obj, "expect")?;
            let tol = num(&mut obj, "tol")?;
            let step: Step = serde_json::from_value(Value::Object(obj)).map_err(|e| schema(format!("step {}: {e}", i + 1)))?;
            for name in step.paths() {
                if !defs.contains_key(name) {
                    return Err(schema(format!("step {}: `{name}` is not defined", i + 1)));
                }
            }
            if let Step::Experiment { name, .. } = &step {
                catalog::find(name)?;
            }
            let op = v.get("op").and_then(Value::as_str).unwrap_or("step").to_string();
            steps.push(Planned {
                id: id.unwrap_or_else(|| format!("{:02}-{op}", i + 1)),
                step,
                raw: v,
                expect: expect.map(|e| (e, tol.unwrap_or(1e-9))),
            });
        }
        Ok(Scenario {
            surface: raw.surface,
            tolerances: raw.tolerances,
            outputs: raw.outputs,
            defs,
            steps,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Run every step; independent steps run concurrently and the reports keep declaration order.
    /// `out` receives any raw dumps requested by steps.
    pub fn run(&self, out: Option<&Path>) -> Vec<ExperimentReport> {
        self.steps.par_iter().map(|s| self.run_step(s, out)).collect()
    }

    fn path(&self, name: &str) -> &HamiltonianPath {
        &self.defs[name].0
    }

    fn run_step(&self, s: &Planned, out: Option<&Path>) -> ExperimentReport {
        let used: BTreeMap<&str, &str> = s.step.paths().into_iter().map(|n| (n, self.defs[n].1.as_str())).collect();
        let inputs = json!({ "surface": self.surface, "step": s.raw, "defs": used });
        let mut r = ExperimentReport::new(s.id.clone(), inputs, &self.tolerances);
        let start = Instant::now();
        if let Err(e) = self.execute(&s.step, &mut r, out) {
            r.fail("step failed", format!("{e:#}"));
        }
        if let (Some((want, tol)), None) = (s.expect, &r.error) {
            let got = r.results.get("value").and_then(Value::as_f64).unwrap_or(f64::NAN);
            r.check(Check::at_most("|value - expected|", (got - want).abs(), tol, format!("declared value {want}")));
        }
        r.runtime_secs = start.elapsed().as_secs_f64();
        r.finish()
    }

    fn point(&self, v: &[f64]) -> Result<[f64; 3]> {
        match v.len() {
            2 if !self.surface.is_sphere() => Ok([v[0], v[1], 0.0]),
            3 => Ok(self.surface.project([v[0], v[1], v[2]])),
            _ => anyhow::bail!("point {v:?} has the wrong dimension for {}", self.surface.name()),
        }
    }

    fn execute(&self, step: &Step, r: &mut ExperimentReport, out: Option<&Path>) -> Result<()> {
        let tol = &self.tolerances;
        match step {
            Step::Length { path } => {
                let q = hofer::length_quad(self.path(path), &SearchConfig::default())?;
                r.result("value", q.value);
                r.result("error", q.error);
            }
            Step::Extrema { path, t } => {
                let e = hofer::checked_extrema(self.path(path), *t, &SearchConfig::default())?;
                r.result("value", e.oscillation());
                r.result("extrema", &e);
            }
            Step::Calabi { path } => {
                let q = hofer::calabi(self.path(path))?;
                r.result("value", q.value);
                r.result("error", q.error);
            }
            Step::Geodesic { path, windows } => {
                let v = hofer::geodesic_check(self.path(path), *windows)?;
                r.result("value", if v.satisfies_criterion { 1.0 } else { 0.0 });
                r.result("verdict", &v);
            }
            Step::Summary { path, samples } => {
                let s = hofer::summarize(self.path(path), *samples)?;
                let mut c = Curve::new("extrema", &["t", "max", "min"]);
                c.rows = s.track.iter().map(|e| vec![e.t, e.max, e.min]).collect();
                r.curves.push(c);
                r.result("value", s.length);
                r.result("summary", &s);
            }
            Step::Period { path, seed, horizon } => {
                let opts = PeriodOptions {
                    horizon: *horizon,
                    ode_tol: tol.ode,
                    ..Default::default()
                };
                let w = orbits::minimal_positive_period(self.path(path), self.point(seed)?, &opts)?;
                r.result("value", w.period);
                r.result("witness", w);
            }
            Step::Trajectory { path, seed, t1, samples } => {
                let p = self.path(path);
                let tr = integrate_flow_uniform(p, self.point(seed)?, (p.interval.0, *t1), *samples, tol.ode)?;
                let mut c = Curve::new("trajectory", &["t", "x", "y", "z"]);
                c.rows = tr.samples.iter().map(|s| vec![s.t, s.state[0], s.state[1], s.state[2]]).collect();
                r.curves.push(c);
                r.result("value", tr.max_drift);
                r.result("end", tr.end());
            }
            Step::ShortOrbit { path, horizon, seeds } => {
                let spec = seeds.map(SeedSpec::from).unwrap_or_default();
                let scan = orbits::has_short_orbit(self.path(path), *horizon, &spec)?;
                r.result("value", scan.witness.and_then(|w| w.period));
                r.result("scan", &scan);
            }
            Step::Rigidity { path, point, horizon, seeds } => {
                let spec = seeds.map(SeedSpec::from).unwrap_or(SeedSpec { grid: 10, random: 0 });
                let rep = orbits::rigidity_probe(self.path(path), self.point(point)?, *horizon, &spec)?;
                r.result("value", rep.witness.and_then(|w| w.period));
                r.result("probe", &rep);
            }
            Step::BallCertificate { path, epsilon, grid, levels } => {
                let d = BallOptions::default();
                let opts = BallOptions {
                    epsilon: epsilon.unwrap_or(d.epsilon),
                    grid: grid.unwrap_or(d.grid),
                    levels: levels.unwrap_or(d.levels),
                    ode_tol: tol.ode,
                    ..d
                };
                let c = capacity::cg_dim2_certificate(self.path(path), &opts)?;
                r.check(Check::holds("certificate residuals pass", c.all_pass(), "certificate tolerances"));
                r.result("value", c.value);
                r.result("certificate", &c);
            }
            Step::HzCertificate { path, nu } => {
                let d = HzOptions::default();
                let opts = HzOptions { nu: nu.unwrap_or(d.nu), ..d };
                let c = capacity::chz_certificate(self.path(path), &opts)?;
                r.check(Check::holds("certificate residuals pass", c.all_pass(), "certificate tolerances"));
                r.result("value", c.value);
                r.result("certificate", &c);
            }
            Step::LocalBall { path, epsilon } => {
                let d = LocalOptions::default();
                let opts = LocalOptions {
                    epsilon: epsilon.unwrap_or(d.epsilon),
                    ..d
                };
                let c = capacity::local_ball_certificate(self.path(path), &opts)?;
                r.check(Check::holds("certificate residuals pass", c.all_pass(), "certificate tolerances"));
                r.result("value", c.value);
                r.result("certificate", &c);
            }
            Step::Trapezoid { a, epsilon, direction, grid } => {
                let m = capacity::trapezoid_profile_map(*a, *epsilon, *direction, *grid)?;
                r.check(Check::at_most("Jacobian defect off the slit", m.jacobian_defect, tol.trap_jacobian, "det = 1"));
                r.check(Check::at_most("profile domination", m.domination_defect, tol.trap_domination, "target profile"));
                r.result("value", m.jacobian_defect);
                r.result("certificate", m.certificate());
            }
            Step::Glue { lower, upper, nu, samples } => {
                let q = quasicyl::glue(self.path(lower), self.path(upper), *nu)?;
                let s = q.verify_gluing_symplectic(*samples)?;
                let bound = if q.identical { tol.gluing_identical } else { tol.gluing };
                r.check(Check::at_most("symplecticity", s.max_residual, bound, "J^T Omega J = Omega"));
                let a = q.area()?;
                r.check(Check::at_most("fiber-area spread", a.deviation, tol.area_spread, "area independent of the fiber"));
                r.result("value", a.mean);
                r.result("area", &a);
                r.result("symplectic", &s);
            }
            Step::Compare { h, k, nu } => {
                let c = quasicyl::compare(self.path(h), self.path(k), *nu)?;
                r.check(Check::at_most("sum identity", c.identity_defect.abs(), tol.compare_identity, "length(H) + length(K) + 2 nu"));
                r.result("value", c.identity_defect);
                r.result("compare", &c);
            }
            Step::Flatness { path } => {
                let gen = Arc::new(GeneratingFunction::new(self.path(path).clone())?);
                let f = flatness::verify_flatness(&gen)?;
                r.check(Check::at_most("|length - osc F|", f.length_gap, tol.flatness_length * f.oscillation, "max F - min F"));
                r.check(Check::at_most("swept-area spread", f.swept_spread, tol.swept_spread, "independence of the arc"));
                r.check(Check::holds("extrema fixed", f.fixed_extrema, "critical points of F"));
                r.result("value", f.length);
                r.result("flatness", &f);
            }
            Step::ShearLift { path, t, grid } => {
                let l = shear::shear_lift_defect(self.path(path), *t, *grid)?;
                r.check(Check::at_most("lift defect", l.max_defect, tol.shear_lift, "(x, y - t f'(x)) on the cover"));
                r.result("value", l.max_defect);
                r.result("lift", &l);
            }
            Step::Disjoin { path, t, margin, samples } => {
                let d = shear::disjoined_strip(self.path(path), *t, *margin, *samples)?;
                r.check(Check::at_most("strip area gap", d.relative_gap, tol.strip_area, "area T"));
                r.check(Check::holds("strip disjoined", d.disjoint, "sampled images avoid the strip"));
                r.result("value", d.area);
                r.result("strip", &d);
            }
            Step::Moser { grid, amplitude, samples, dump } => {
                let form = Perturbation { amplitude: *amplitude }.grid(*grid);
                if let Some(rel) = dump {
                    let base = out.unwrap_or(Path::new("."));
                    let full = base.join(rel);
                    let f = fs::File::create(&full).map_err(|e| CliError::io(&full, e))?;
                    form.write_binary(std::io::BufWriter::new(f)).map_err(|e| CliError::io(&full, e))?;
                    r.result("dump", rel);
                }
                let rep = moser::moser_split(&form, *samples)?;
                r.check(Check::at_most("residual", rep.residual, tol.moser_residual, "pullback equals the product form"));
                r.result("value", rep.residual);
                r.result("moser", &rep);
            }
            Step::Experiment { name, grid, tol: t } => {
                let params = ExperimentParams {
                    grid: *grid,
                    tol: *t,
                    tolerances: tol.clone(),
                };
                let e = catalog::experiment(name, &params)?;
                r.checks = e.checks;
                r.cited = e.cited;
                r.curves = e.curves;
                r.results = e.results;
                if let Some(err) = e.error {
                    r.fail(name, err);
                }
            }
        }
        Ok(())
    }
}

/// Parse and run scenario text.
pub fn run_scenario_str(text: &str, out: Option<&Path>) -> Result<Vec<ExperimentReport>, CliError> {
    Ok(Scenario::parse(text)?.run(out))
}

/// Parse and run a scenario file. Raw dumps go to the scenario's output directory, if any.
pub fn run_scenario(file: &Path) -> Result<(Scenario, Vec<ExperimentReport>), CliError> {
    let text = fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
    let sc = Scenario::parse(&text)?;
    let out = sc.outputs.as_ref().map(|o| o.dir.clone());
    if let Some(d) = &out {
        fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    let reports = sc.run(out.as_deref());
    Ok((sc, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scenario_has_no_reports() {
        assert!(run_scenario_str("{}", None).unwrap().is_empty());
        assert!(run_scenario_str(r#"{"surface": {"kind": "torus"}, "steps": []}"#, None).unwrap().is_empty());
    }

    #[test]
    fn length_of_zero() {
        let r = run_scenario_str(
            r#"{"surface": {"kind": "torus"}, "defs": {"H": "0"}, "steps": [{"op": "length", "path": "H", "expect": 0}]}"#,
            None,
        )
        .unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].results["value"], json!(0.0));
        assert!(r[0].pass, "{:?}", r[0]);
    }

    #[test]
    fn schema_errors() {
        for bad in [
            "[",
            r#"{"steps": [{"op": "length", "path": "H"}]}"#,
            r#"{"steps": [{"op": "bogus"}]}"#,
            r#"{"defs": {"H": "x"}, "steps": [{"op": "length", "path": "H"}]}"#,
            r#"{"surface": {"kind": "torus"}, "defs": {"H": "x +"}}"#,
            r#"{"surface": {"kind": "torus"}, "defs": {"H": "x"}, "steps": [{"op": "length", "path": "H", "extra": 1}]}"#,
            r#"{"steps": [{"op": "experiment", "name": "nope"}]}"#,
            r#"{"unknown": 1}"#,
        ] {
            assert!(Scenario::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn failed_step_does_not_stop_others() {
        // a shear probe needs a torus; the length step still runs
        let r = run_scenario_str(
            r#"{"surface": {"kind": "sphere", "area": 4.0}, "defs": {"F": "2*z + 2"},
                "steps": [{"op": "shear-lift", "path": "F", "t": 1, "grid": 2},
                          {"id": "len", "op": "length", "path": "F", "expect": 4.0}]}"#,
            None,
        )
        .unwrap();
        assert_eq!(r.len(), 2);
        assert!(!r[0].pass && r[0].error.is_some());
        assert_eq!(r[1].id, "len");
        assert!(r[1].pass, "{:?}", r[1]);
    }
}
