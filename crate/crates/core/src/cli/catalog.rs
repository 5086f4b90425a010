//! Named experiments. Each builds its inputs, runs the relevant operations and
//! records every quantitative claim as a [`Check`].

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde_json::json;

use super::{Check, CliError, Curve, ExperimentReport, Tolerances};
use crate::capacity::{self, BallOptions, Direction, HzOptions, Side};
use crate::expr::bump_value;
use crate::flatness::{self, GeneratingFunction};
use crate::flow::integrate_flow_uniform;
use crate::hamiltonian::HamiltonianPath;
use crate::hofer::{self, shear, SearchConfig};
use crate::orbits::{self, OrbitClass, PeriodOptions, SeedSpec};
use crate::quasicyl::{self, moser, Perturbation, QuasiCylError};
use crate::surface::{star_region_area, Rect, Surface};
use crate::util::{golden_min, halton};

/// Overrides from the command line; `None` keeps the experiment's default.
#[derive(Clone, Debug, Default)]
pub struct ExperimentParams {
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub tolerances: Tolerances,
}

pub struct Entry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Meaning of `--grid` and `--tol` for this entry.
    pub grid: &'static str,
    pub tol: &'static str,
    run: fn(&ExperimentParams, &mut ExperimentReport) -> Result<()>,
}

pub const CATALOG: &[Entry] = &[
    Entry {
        name: "sphere-loop",
        summary: "height function on the sphere: unit periods, length A, fibered balls of capacity A - eps on both sides",
        grid: "number of sampled orbits (50)",
        tol: "period tolerance (1e-3)",
        run: sphere_loop,
    },
    Entry {
        name: "torus-shear",
        summary: "shear H = f(x) on the torus: lifted flow and disjoined strip areas for T = 1, 2, 4",
        grid: "lift lattice side (30)",
        tol: "lift defect tolerance (1e-6)",
        run: torus_shear,
    },
    Entry {
        name: "plateau-bump",
        summary: "plateau wider than its height: fibered-ball certificates, and short orbits past the edge-slope threshold",
        grid: "certificate residual grid (10)",
        tol: "epsilon of the certificate (0.05)",
        run: plateau_bump,
    },
    Entry {
        name: "geodesic-gallery",
        summary: "fixed-extremum criterion on an autonomous, a traveling and a concatenated path",
        grid: "number of windows (8)",
        tol: "unused",
        run: geodesic_gallery,
    },
    Entry {
        name: "glue-compare",
        summary: "glued quasi-cylinders of homotopic pairs: symplecticity, fiber areas, the sum identity",
        grid: "samples for the symplecticity residual (1000)",
        tol: "identity and spread tolerance (1e-5)",
        run: glue_compare,
    },
    Entry {
        name: "flatness",
        summary: "small generating functions: length equals oscillation, fixed extrema, swept areas",
        grid: "unused",
        tol: "relative length tolerance (1e-4)",
        run: flatness_corpus,
    },
    Entry {
        name: "linear-rigidity",
        summary: "linearized criterion at the origin of a quartic Hamiltonian, with a silent control",
        grid: "seed grid side (10)",
        tol: "period agreement with the radial formula (1e-3)",
        run: linear_rigidity,
    },
    Entry {
        name: "hz-lower-bound",
        summary: "HZ-admissible function built from a slow bump, and refusal of a fast rotation",
        grid: "base seed grid side (10)",
        tol: "witness period tolerance (1e-4)",
        run: hz_lower_bound,
    },
    Entry {
        name: "trapezoid",
        summary: "area-preserving profile maps between a disc and a trapezoid",
        grid: "measurement grid side (200)",
        tol: "Jacobian defect tolerance (1e-6)",
        run: trapezoid,
    },
    Entry {
        name: "moser-split",
        summary: "Moser isotopy splitting a perturbed product form on T2 x square, at two resolutions",
        grid: "single grid resolution instead of 12 and 16",
        tol: "residual limit (5e-2)",
        run: moser_splitting,
    },
];

pub fn find(name: &str) -> Result<&'static Entry, CliError> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| CliError::UnknownExperiment(name.into()))
}

/// Run a catalog entry. Operation errors are recorded in the report, not returned.
pub fn experiment(name: &str, params: &ExperimentParams) -> Result<ExperimentReport, CliError> {
    let entry = find(name)?;
    let mut report = ExperimentReport::new(name, json!({}), &params.tolerances);
    let start = Instant::now();
    if let Err(e) = (entry.run)(params, &mut report) {
        report.fail("experiment aborted", format!("{e:#}"));
    }
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report.finish())
}

fn plane(src: &str, half: f64) -> Result<HamiltonianPath> {
    Ok(HamiltonianPath::parse(Surface::Plane, src, Some(Rect::square(half)))?)
}

fn sphere_loop(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let area = 4.0;
    let surf = Surface::Sphere { area };
    let src = "2*z + 2";
    let n = p.grid.unwrap_or(50);
    let ptol = p.tol.unwrap_or(p.tolerances.period);
    let eps = 0.05 * area;
    r.inputs = json!({ "surface": surf, "F": src, "orbits": n, "epsilon": eps, "period_tol": ptol });
    let path = HamiltonianPath::parse(surf, src, None)?;

    let seeds: Vec<[f64; 3]> = (1..=n)
        .map(|k| {
            let z = -0.9 + 1.8 * halton(k, 2);
            let th = 2.0 * PI * halton(k, 3);
            let s = (1.0 - z * z).sqrt();
            [s * th.cos(), s * th.sin(), z]
        })
        .collect();
    let opts = PeriodOptions {
        ode_tol: p.tolerances.ode,
        ..Default::default()
    };
    let found: Result<Vec<_>, _> = seeds.par_iter().map(|x| orbits::minimal_positive_period(&path, *x, &opts)).collect();
    let found = found?;
    let mut curve = Curve::new("periods", &["seed", "z", "period"]);
    let mut worst = 0.0f64;
    let mut closed = 0;
    for (k, w) in found.iter().enumerate() {
        let per = w.period.unwrap_or(f64::NAN);
        curve.rows.push(vec![k as f64, w.seed[2], per]);
        if w.classification == OrbitClass::Periodic {
            closed += 1;
            worst = worst.max((per - 1.0).abs());
        }
    }
    r.curves.push(curve);
    r.check(Check::holds(format!("all {n} orbits close"), closed == n, "section return within horizon 2"));
    r.check(Check::at_most("max |period - 1|", worst, ptol, "rigid rotation with period 1"));
    r.result("orbits_closed", closed);
    r.result("max_period_deviation", worst);

    for (k, x) in seeds.iter().take(4).enumerate() {
        let tr = integrate_flow_uniform(&path, *x, (0.0, 1.0), 200, p.tolerances.ode)?;
        let mut c = Curve::new(format!("orbit-{k}"), &["t", "x", "y", "z"]);
        c.rows = tr.samples.iter().map(|s| vec![s.t, s.state[0], s.state[1], s.state[2]]).collect();
        r.curves.push(c);
    }

    let len = hofer::length_quad(&path, &SearchConfig::default())?;
    r.result("length", len.value);
    r.check(Check::at_most("|length - A|", (len.value - area).abs(), p.tolerances.length, "max F - min F = A"));

    let cert = capacity::cg_dim2_certificate(
        &path,
        &BallOptions {
            epsilon: eps,
            grid: 12,
            levels: 6,
            ode_tol: p.tolerances.ode,
            ..Default::default()
        },
    )?;
    r.check(Check::at_least("certified capacity", cert.value, area - eps - 1e-9, "A - epsilon"));
    r.check(Check::holds("certificate covers both sides", cert.side == Side::Both, "under and over regions"));
    r.check(Check::holds("certificate residuals pass", cert.all_pass(), "certificate tolerances"));
    let evidence = format!("the fibered-ball certificate of value {} on both sides", cert.value);
    r.cite("the loop of rotations has Hofer length at least A", &evidence);
    r.cite("the short-loop invariant of the sphere equals A", &evidence);
    r.result("certificate", &cert);
    Ok(())
}

/// `f(x) = (1 − cos 2πx)/2`: `f(0) = f′(0) = 0`, `f(1/2) = 1`.
pub fn shear_profile() -> String {
    format!("(1 - cos({} * x)) / 2", 2.0 * PI)
}

fn torus_shear(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let surf = Surface::Torus { area: 1.0 };
    let src = shear_profile();
    let grid = p.grid.unwrap_or(30);
    let ltol = p.tol.unwrap_or(p.tolerances.shear_lift);
    let times = [1.0, 2.0, 4.0];
    let margin = 1e-3;
    r.inputs = json!({ "surface": surf, "H": src, "grid": grid, "times": times, "margin": margin });
    let path = HamiltonianPath::parse(surf, &src, None)?;
    let mut areas = Curve::new("strip-area", &["T", "area", "target"]);
    for t in times {
        let lift = shear::shear_lift_defect(&path, t, grid)?;
        r.check(Check::at_most(format!("lift defect at t = {t}"), lift.max_defect, ltol, "(x, y - t f'(x)) on the cover"));
        let strip = shear::disjoined_strip(&path, t, margin, 100)?;
        r.check(Check::at_most(format!("strip area gap at T = {t}"), strip.relative_gap, p.tolerances.strip_area, "area T"));
        r.check(Check::holds(format!("strip disjoined at T = {t}"), strip.disjoint, "sampled images avoid the strip"));
        areas.rows.push(vec![t, strip.area, strip.target]);
        let len = hofer::length(&path.clone().with_interval(0.0, t)?)?;
        r.check(Check::at_most(format!("|length on [0, T] - T| at T = {t}"), (len - t).abs(), p.tolerances.length, "t (max f - min f)"));
        r.result(&format!("t{t}"), json!({ "lift": lift, "strip": strip, "length": len }));
    }
    r.curves.push(areas);
    r.cite(
        "the Hofer diameter of the torus is unbounded",
        "disjoined regions of area close to T for every sampled T, through the energy-capacity inequality",
    );
    Ok(())
}

/// Largest `|d/ds bump(s; 1)|`, found numerically.
fn bump_max_slope() -> f64 {
    -golden_min(|s| bump_value(s, 1.0, 1).abs() * -1.0, 0.0, 1.0, 1e-12).1
}

fn plateau_bump(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let r0: f64 = 0.8;
    let src = format!("bump(x^2+y^2-{}; 1)", r0 * r0);
    let eps = p.tol.unwrap_or(0.05);
    let grid = p.grid.unwrap_or(10);
    let path = plane(&src, 1.3)?;
    // period of the circle at s = r² is π/|d/ds H|; short orbits appear when the steepest slope passes π
    let threshold = bump_max_slope() / PI;
    let steep_width = 0.5;
    let gentle_width = 1.1 * threshold;
    r.inputs = json!({ "H": src, "support": Rect::square(1.3), "epsilon": eps, "grid": grid, "steep_width": steep_width, "gentle_width": gentle_width });

    // the plateau is the critical set at the top level; the value alone rounds to 1 just outside it
    let on_plateau = |q: [f64; 2]| {
        let s = [q[0], q[1], 0.0];
        let g = path.gradient(&s, 0.0).unwrap_or([1.0; 3]);
        path.value(&s, 0.0).map_or(false, |v| v >= 1.0) && g[0] == 0.0 && g[1] == 0.0
    };
    let plateau = star_region_area(on_plateau, [0.0, 0.0], 1.3, 1e-10);
    r.result("plateau_area", plateau.value);
    r.check(Check::at_most("|plateau area - pi r0^2|", (plateau.value - PI * r0 * r0).abs(), 1e-6, "disc of radius r0"));
    r.check(Check::at_least("plateau area over max H", plateau.value, 1.0, "max H = 1"));

    let cert = capacity::cg_dim2_certificate(
        &path,
        &BallOptions {
            epsilon: eps,
            grid,
            levels: 6,
            ode_tol: p.tolerances.ode,
            ..Default::default()
        },
    )?;
    r.check(Check::at_least("certified capacity", cert.value, p.tolerances.ball_fraction - 1e-12, "fraction of max H"));
    r.check(Check::holds("certificate covers both sides", cert.side == Side::Both, "under and over regions"));
    r.check(Check::holds("certificate residuals pass", cert.all_pass(), "certificate tolerances"));
    for side in ["under", "over"] {
        let per = cert.residual(&format!("{side}:min-level-period")).map_or(f64::NAN, |x| x.value);
        r.check(Check::at_least(format!("{side}: shortest level period"), per, 1.0 - 1e-6, "no short orbits"));
    }
    r.result("certificate", &cert);

    r.result("slope_threshold_width", threshold);
    let spec = SeedSpec { grid: 40, random: 0 };
    let mut curve = Curve::new("edge-periods", &["width", "r", "period", "radial"]);
    for (width, expect) in [(steep_width, true), (gentle_width, false)] {
        let h = plane(&format!("bump(x^2+y^2-{}; {width})", r0 * r0), 1.3)?;
        let scan = orbits::has_short_orbit(&h, 1.0, &spec)?;
        r.check(Check::holds(format!("short orbit found iff steeper than threshold (width {width:.4})"), scan.witness.is_some() == expect, "radial period integral"));
        if let Some(w) = scan.witness {
            let rad = w.seed[0].hypot(w.seed[1]);
            let radial = PI / bump_value(rad * rad - r0 * r0, width, 1).abs();
            let per = w.period.unwrap_or(f64::NAN);
            r.check(Check::at_most("witness period vs radial formula", (per - radial).abs(), p.tolerances.period, "pi / |H'(s)|"));
            curve.rows.push(vec![width, rad, per, radial]);
            r.result("steep_witness", w);
        }
    }
    r.curves.push(curve);
    r.cite(
        "both the region under and the region over the graph contain balls of capacity approaching max H",
        &format!("the fibered-ball certificate of value {} (epsilon {eps})", cert.value),
    );
    Ok(())
}

fn geodesic_gallery(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let windows = p.grid.unwrap_or(8);
    let wide = Rect::new([-2.0, -2.0], [3.0, 2.0]);
    let auto_src = "bump(x^2+y^2; 1)*(2 + x)";
    let travel_src = "exp(neg((x-t)^2+y^2))*bump((x-t)^2+y^2 - 1; 1)";
    // rests at x = 1 until t = 1/2, then travels back
    let concat_src = "exp(neg((x-c)^2+y^2))*bump((x-c)^2+y^2 - 1; 1)".replace('c', "(1 - bump(t - 0.5; 0.5))");
    r.inputs = json!({ "windows": windows, "autonomous": auto_src, "traveling": travel_src, "concatenated": concat_src });
    let paths = [
        ("autonomous", HamiltonianPath::parse(Surface::Plane, auto_src, Some(Rect::square(1.0)))?),
        ("traveling", HamiltonianPath::parse(Surface::Plane, travel_src, Some(wide))?),
        ("concatenated", HamiltonianPath::parse(Surface::Plane, &concat_src, Some(wide))?),
    ];
    let half = windows / 2;
    for (name, path) in &paths {
        let v = hofer::geodesic_check(path, windows)?;
        let verdicts: Vec<bool> = v.windows.iter().map(|w| w.quasi_autonomous).collect();
        let expected: Vec<bool> = (0..windows)
            .map(|k| match *name {
                "autonomous" => true,
                "traveling" => false,
                _ => k < half,
            })
            .collect();
        r.check(Check::holds(format!("{name}: window verdicts"), verdicts == expected, "fixed extrema where the bump rests"));
        // a passing window passes on both halves
        let coarse = hofer::geodesic_check(path, half.max(1))?;
        let monotone = coarse
            .windows
            .iter()
            .enumerate()
            .all(|(k, w)| !w.quasi_autonomous || (verdicts.get(2 * k) != Some(&false) && verdicts.get(2 * k + 1) != Some(&false)));
        r.check(Check::holds(format!("{name}: verdicts monotone under refinement"), monotone, "window shrinking"));
        let summary = hofer::summarize(path, 32)?;
        let mut c = Curve::new(format!("{name}-extrema"), &["t", "max", "min"]);
        c.rows = summary.track.iter().map(|e| vec![e.t, e.max, e.min]).collect();
        r.curves.push(c);
        r.result(name, json!({ "verdicts": verdicts, "satisfies_criterion": v.satisfies_criterion, "length": summary.length }));
    }
    r.result("note", hofer::GEODESIC_NOTE);
    Ok(())
}

/// `exp(−x² − 2y²)` with a cutoff: unit maximum at the origin.
pub const GLUE_BASE: &str = "exp(neg(x^2 + 2*y^2)) * bump(x^2+y^2-1; 1)";

/// Homotopic pairs `(H, K)` with equal time-1 maps, by name.
pub fn glue_pairs() -> Vec<(&'static str, String, String)> {
    let g = GLUE_BASE;
    let w = PI - 0.75f64.asin();
    // a(t) = 0.8 sin(ωt) rises to 0.8 and ends at 0.6
    let up_down = format!("{} * cos({w} * t) * {g}", 0.8 * w);
    let reparam = |c: f64| format!("{c} * (1 + 0.5*cos({} * t)) * {g}", 2.0 * PI);
    vec![
        ("reparametrized", g.to_string(), reparam(1.0)),
        ("up-down", up_down.clone(), format!("0.6 * {g}")),
        ("up-down-reparametrized", up_down, reparam(0.6)),
    ]
}

fn glue_compare(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let samples = p.grid.unwrap_or(1000);
    let tol = p.tol.unwrap_or(p.tolerances.compare_identity);
    let spread_tol = p.tol.unwrap_or(p.tolerances.area_spread);
    let nus = [0.02, 0.05, 0.1];
    let pairs = glue_pairs();
    r.inputs = json!({ "pairs": pairs, "nu": nus, "samples": samples, "support": Rect::square(1.5) });

    let base = plane(GLUE_BASE, 1.5)?;
    let q = quasicyl::glue(&base, &base, 0.1)?;
    let s = r.timed("gluing", || q.verify_gluing_symplectic(samples))?;
    r.check(Check::at_most("identical pair: symplecticity", s.max_residual, p.tolerances.gluing_identical, "identity gluing"));
    let a = q.area()?;
    let len = hofer::length(&base)?;
    r.check(Check::at_most("identical pair: |area - (length + nu)|", (a.mean - len - 0.1).abs(), p.tolerances.split_area, "split cylinder"));
    r.result("identical", json!({ "symplectic": s, "area": a.mean, "length": len }));

    let mut identity = Curve::new("compare-identity", &["pair", "nu", "defect"]);
    for (i, (name, hs, ks)) in pairs.iter().enumerate() {
        let h = plane(hs, 1.5)?;
        let k = plane(ks, 1.5)?;
        let q = r.timed("gluing", || quasicyl::glue(&h, &k, 0.05))?;
        let s = r.timed("gluing", || q.verify_gluing_symplectic(samples))?;
        r.check(Check::at_most(format!("{name}: symplecticity"), s.max_residual, p.tolerances.gluing, "J^T Omega J = Omega"));
        let a = r.timed("area", || q.area())?;
        r.check(Check::at_most(format!("{name}: fiber-area spread"), a.deviation, spread_tol, "area independent of the fiber"));
        let reverse = r.timed("compare", || quasicyl::glue(&k, &h, 0.05))?;
        let cmp = r.timed("compare", || quasicyl::compare_glued(&q, &reverse, &nus))?;
        for (&nu, c) in nus.iter().zip(&cmp) {
            r.check(Check::at_most(format!("{name}, nu = {nu}: sum identity"), c.identity_defect.abs(), tol, "length(H) + length(K) + 2 nu"));
            if c.gated {
                r.check(Check::holds(format!("{name}, nu = {nu}: a shorter side exists"), !c.below.is_empty(), "length(K) + 2 nu < length(H)"));
            }
            identity.rows.push(vec![i as f64, nu, c.identity_defect]);
        }
        r.result(name, json!({ "symplectic": s, "area": a, "compare": cmp }));
    }
    r.curves.push(identity);

    let low = plane(&format!("0.6 * {GLUE_BASE}"), 1.5)?;
    let high = plane(&format!("0.9 * {GLUE_BASE}"), 1.5)?;
    let injected = r.timed("area", || quasicyl::glue_unchecked(&low, &high, 0.05).and_then(|q| q.area()));
    r.check(Check::holds(
        "mismatched endpoints rejected",
        matches!(injected, Err(QuasiCylError::InconsistentArea { .. })),
        "fault injection",
    ));
    r.cite(
        "one of the two glued quasi-cylinders of a pair with a shorter side has area below length(H)",
        "the measured sum identity and fiber areas",
    );
    Ok(())
}

/// Generating functions of the flatness corpus at amplitude `delta`.
pub fn flatness_corpus_members(delta: f64) -> Vec<(String, Surface, String, Option<Rect>)> {
    // x e^{−x²} peaks at e^{−1/2}/√2
    let c = delta * 2f64.sqrt() * 0.5f64.exp();
    let w = 2.0 * PI;
    vec![
        (
            format!("plane-dipole-{delta}"),
            Surface::Plane,
            format!("{c} * x * exp(neg(x^2 + y^2)) * bump(x^2 + y^2 - 1.5; 1)^4"),
            Some(Rect::square(2.0)),
        ),
        (
            format!("torus-cell-{delta}"),
            Surface::Torus { area: 1.0 },
            format!("{delta} * sin({w} * x) * sin({w} * y)"),
            None,
        ),
    ]
}

fn flatness_corpus(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let rel = p.tol.unwrap_or(p.tolerances.flatness_length);
    let deltas = [1e-3, 1e-2];
    let members: Vec<_> = deltas.iter().flat_map(|d| flatness_corpus_members(*d).into_iter().map(move |m| (*d, m))).collect();
    r.inputs = json!({ "deltas": deltas, "members": members.iter().map(|(_, m)| json!({"name": m.0, "surface": m.1, "F": m.2})).collect::<Vec<_>>() });
    r.check(Check::at_most("midpoint chart symplecticity", flatness::chart_symplecticity_residual(), 1e-12, "exact linear algebra"));
    for (delta, (name, surf, src, support)) in members {
        let gen = Arc::new(GeneratingFunction::parse(surf, &src, support)?);
        let f = flatness::verify_flatness(&gen)?;
        r.check(Check::at_most(format!("{name}: |length - osc F|"), f.length_gap, rel * delta, "max F - min F"));
        r.check(Check::at_most(format!("{name}: swept-area spread"), f.swept_spread, p.tolerances.swept_spread, "independence of the arc"));
        r.check(Check::holds(format!("{name}: extrema fixed"), f.fixed_extrema, "critical points of F"));
        r.check(Check::at_most(format!("{name}: signed-area identity"), f.signed_identity_gap, 1e-6 * f.oscillation.max(1e-300), "F(q2) - F(q1)"));
        let sup_area = f.swept.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let agree = (sup_area - f.oscillation).abs().max(f.length_gap);
        r.check(Check::at_most(format!("{name}: osc, length and swept area agree"), agree, rel * f.oscillation, "pairwise agreement"));
        r.result(&name, &f);
    }
    r.cite(
        "the length of the generated isotopy realizes the Hofer norm of its endpoint",
        "the length and swept-area identities of this corpus",
    );
    Ok(())
}

/// `(λ/2)r² + r⁴` with a cutoff beyond `r = 1`.
pub fn quartic(lam: f64) -> String {
    format!("({} * (x^2+y^2) + (x^2+y^2)^2) * bump(x^2+y^2 - 1; 1)", lam / 2.0)
}

fn linear_rigidity(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let lam = 4.0 * PI;
    let spec = SeedSpec {
        grid: p.grid.unwrap_or(10),
        random: 0,
    };
    let tol = p.tol.unwrap_or(p.tolerances.rigidity_period);
    let src = quartic(lam);
    let control = format!("{} * (x^2+y^2) * bump(x^2+y^2 - 1; 1)", PI / 2.0);
    r.inputs = json!({ "H": src, "control": control, "point": [0.0, 0.0], "horizon": 1.0, "seeds": spec, "support": Rect::square(1.5) });

    let path = plane(&src, 1.5)?;
    let rep = orbits::rigidity_probe(&path, [0.0; 3], 1.0, &spec)?;
    let lin = rep.linear_period.unwrap_or(f64::NAN);
    r.check(Check::at_most("linear period vs 2 pi / lambda", (lin - 2.0 * PI / lam).abs(), 1e-8, "Hessian frequency"));
    r.check(Check::holds("nonlinear witness found", rep.verdict == orbits::WITNESS_FOUND, "closed orbit of period < 1"));
    if let Some(w) = rep.witness {
        let s = w.seed[0] * w.seed[0] + w.seed[1] * w.seed[1];
        // circle of radius ρ: |∇H| = ρ(λ + 4ρ²), so the period is 2π/(λ + 4ρ²)
        let radial = 2.0 * PI / (lam + 4.0 * s);
        r.check(Check::at_most("witness period vs radial formula", (w.period.unwrap_or(f64::NAN) - radial).abs(), tol, "2 pi / (lambda + 4 r^2)"));
        r.result("radial_prediction", radial);
    }
    r.result("probe", &rep);

    let ctl = orbits::rigidity_probe(&plane(&control, 1.5)?, [0.0; 3], 1.0, &spec)?;
    r.check(Check::holds("control (lambda = pi) is silent", ctl.verdict == orbits::CRITERION_SILENT, "linear period 2 > 1"));
    r.result("control", &ctl);
    Ok(())
}

fn hz_lower_bound(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let src = "bump(x^2+y^2; 4)";
    let opts = HzOptions {
        base_grid: p.grid.unwrap_or(10),
        ..Default::default()
    };
    let wtol = p.tol.unwrap_or(p.tolerances.hz_witness_period);
    let fast = format!("{}*(x^2+y^2)*bump(x^2+y^2-1; 1)", 2.0 * PI);
    r.inputs = json!({ "H": src, "support": Rect::square(2.0), "options": opts, "refused": fast });
    let path = plane(src, 2.0)?;
    let len = hofer::length(&path)?;
    let cert = capacity::chz_certificate(&path, &opts)?;
    r.check(Check::at_most("|certificate - length|", (cert.value - len).abs(), p.tolerances.length, "length of H"));
    r.check(Check::holds("certificate residuals pass", cert.all_pass(), "certificate tolerances"));
    let k_seeds = cert.residual("k-seeds").map_or(0.0, |x| x.value);
    r.check(Check::at_least("K seeds without a short orbit", k_seeds, 1000.0, "seed-grid scan"));
    r.result("length", len);
    r.result("certificate", &cert);

    match capacity::chz_certificate(&plane(&fast, 1.5)?, &HzOptions::default()) {
        Err(capacity::CapacityError::PreconditionFailed { witness: Some(w), .. }) => {
            let per = w.period.unwrap_or(f64::NAN);
            r.check(Check::at_most("fast rotation refused: |period - 1/2|", (per - 0.5).abs(), wtol, "rotation by 4 pi"));
            r.result("refusal_witness", w);
        }
        other => r.check(Check::holds(format!("fast rotation refused (got {other:?})"), false, "rotation by 4 pi")),
    }
    r.cite(
        "the Hofer-Zehnder capacity of the region under the graph is at least length(H)",
        &format!("the HZ-function certificate of value {}", cert.value),
    );
    Ok(())
}

fn trapezoid(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let grid = p.grid.unwrap_or(200);
    let jtol = p.tol.unwrap_or(p.tolerances.trap_jacobian);
    let (a, eps) = (2.0, 0.1);
    r.inputs = json!({ "a": a, "epsilon": eps, "grid": grid });
    for dir in [Direction::BallToTrapezoid, Direction::TrapezoidToBall] {
        let m = capacity::trapezoid_profile_map(a, eps, dir, grid)?;
        let name = format!("{dir:?}");
        r.check(Check::at_most(format!("{name}: Jacobian defect off the slit"), m.jacobian_defect, jtol, "det = 1"));
        r.check(Check::at_most(format!("{name}: profile domination"), m.domination_defect, p.tolerances.trap_domination, "target profile"));
        let cert = m.certificate();
        r.check(Check::holds(format!("{name}: certificate residuals pass"), cert.all_pass(), "certificate tolerances"));
        r.result(&name, &cert);
    }
    Ok(())
}

fn moser_splitting(p: &ExperimentParams, r: &mut ExperimentReport) -> Result<()> {
    let grids: Vec<usize> = p.grid.map_or(vec![12, 16], |g| vec![g]);
    let limit = p.tol.unwrap_or(p.tolerances.moser_residual);
    let pert = Perturbation {
        amplitude: Perturbation::DEFAULT_AMPLITUDE,
    };
    let samples = 6;
    r.inputs = json!({ "grids": grids, "amplitude": pert.amplitude, "sample_grid": samples, "limit": limit });
    let mut prev: Option<f64> = None;
    let mut curve = Curve::new("moser-residual", &["n", "residual"]);
    for n in grids {
        let rep = match moser::moser_split(&pert.grid(n), samples) {
            Ok(rep) => rep,
            Err(QuasiCylError::ResidualTooLarge { residual, .. }) => {
                r.check(Check::at_most(format!("residual at {n}^4"), residual, limit, "pullback equals the product form"));
                prev = Some(residual);
                continue;
            }
            Err(e) => return Err(anyhow!(e)),
        };
        r.check(Check::at_most(format!("residual at {n}^4"), rep.residual, limit, "pullback equals the product form"));
        if let Some(q) = prev {
            r.check(Check::holds(format!("residual decreases at {n}^4"), rep.residual < q, "grid refinement"));
        }
        prev = Some(rep.residual);
        curve.rows.push(vec![n as f64, rep.residual]);
        r.result(&format!("n{n}"), &rep);
    }
    r.curves.push(curve);
    Ok(())
}
