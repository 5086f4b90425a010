//! The cross-module invariant suite behind `hoferlab check`.
//!
//! Each probe is a small, fixed computation; the suite runs twice and the two
//! JSON serializations must agree byte for byte.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Result;
use serde_json::json;

use super::catalog::{flatness_corpus_members, glue_pairs, shear_profile, GLUE_BASE};
use super::{to_json, Check, ExperimentReport, Tolerances};
use crate::capacity::{self, BallOptions, Direction, HzOptions};
use crate::expr::{ScalarField, Var};
use crate::flatness::{self, GeneratingFunction};
use crate::flow::{flow_map, flow_to, integrate_flow, linearized_monodromy};
use crate::hamiltonian::HamiltonianPath;
use crate::hofer::{self, shear};
use crate::orbits::{self, PeriodOptions};
use crate::quasicyl::{self, moser, Perturbation};
use crate::surface::{Rect, Surface};
use crate::util::{dot3, halton};

type Probe = fn(&Tolerances, &mut ExperimentReport) -> Result<()>;

const PROBES: &[(&str, Probe)] = &[
    ("expr", expr_probe),
    ("surface", surface_probe),
    ("flow", flow_probe),
    ("hofer", hofer_probe),
    ("orbits", orbits_probe),
    ("capacity", capacity_probe),
    ("quasicyl", quasicyl_probe),
    ("moser", moser_probe),
    ("flatness", flatness_probe),
    ("shear", shear_probe),
];

pub struct CheckOutcome {
    pub reports: Vec<ExperimentReport>,
    /// The two runs serialized identically.
    pub deterministic: bool,
    pub pass: bool,
}

/// One pass over every probe.
pub fn run_suite(tol: &Tolerances) -> Vec<ExperimentReport> {
    PROBES
        .iter()
        .map(|(name, f)| {
            let mut r = ExperimentReport::new(format!("invariants-{name}"), json!({ "probe": name }), tol);
            let start = Instant::now();
            if let Err(e) = f(tol, &mut r) {
                r.fail("probe aborted", format!("{e:#}"));
            }
            r.runtime_secs = start.elapsed().as_secs_f64();
            r.finish()
        })
        .collect()
}

/// Run the suite twice and append a determinism report.
pub fn run_check(tol: &Tolerances) -> CheckOutcome {
    let first = run_suite(tol);
    let second = run_suite(tol);
    let (a, b) = (to_json(&first), to_json(&second));
    let deterministic = a == b;
    let mut reports = first;
    let mut det = ExperimentReport::new("determinism", json!({ "runs": 2 }), tol);
    det.check(Check::holds("byte-identical JSON across two runs", deterministic, "second run"));
    det.result("bytes", a.len());
    reports.push(det.finish());
    let pass = reports.iter().all(|r| r.pass);
    CheckOutcome {
        reports,
        deterministic,
        pass,
    }
}

fn plane(src: &str, half: f64) -> Result<HamiltonianPath> {
    Ok(HamiltonianPath::parse(Surface::Plane, src, Some(Rect::square(half)))?)
}

const EXPR_CORPUS: [&str; 6] = [
    "x^2*y + sin(x*y)",
    "exp(neg(x^2 + 2*y^2)) * bump(x^2+y^2-1; 1)",
    "cos(2*x)*t + y^3 - z",
    "bump(x^2+y^2 - 1; 0.5)",
    "sqrt(1 + x^2 + y^2) / (2 + cos(t))",
    "(1 - cos(6.283185307179586 * x)) / 2 * sin(y + t)",
];

fn expr_probe(_: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut fixpoint = true;
    for src in EXPR_CORPUS {
        let f = ScalarField::parse(src)?;
        let printed = f.ast().to_string();
        let again = ScalarField::parse(&printed)?;
        fixpoint &= again.ast().to_string() == printed;
        for i in 1..=200 {
            let p = [2.0 * halton(i, 2) - 1.0, 2.0 * halton(i, 3) - 1.0, 2.0 * halton(i, 5) - 1.0, halton(i, 7)];
            for v in Var::ALL {
                let sym = f.partial_at(v, &p)?;
                let mut a = p;
                let mut b = p;
                a[v.index()] += h;
                b[v.index()] -= h;
                let fd = (f.eval_at(&a)? - f.eval_at(&b)?) / (2.0 * h);
                worst = worst.max((sym - fd).abs() / sym.abs().max(1.0));
            }
        }
    }
    r.check(Check::at_most("symbolic vs central difference", worst, 1e-6, "central difference, step 1e-6"));
    r.check(Check::holds("print and re-parse is a fixpoint", fixpoint, "parser"));
    r.result("corpus", EXPR_CORPUS);
    Ok(())
}

fn surface_probe(_: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    let f = ScalarField::parse("sin(3*x)*cos(y) + x*y*z + bump(x^2+y^2; 2)")?;
    let mut worst = 0.0f64;
    for s in [Surface::Plane, Surface::Torus { area: 2.5 }, Surface::Sphere { area: 4.0 }] {
        for i in 1..=334 {
            let st = if s.is_sphere() {
                let z = 2.0 * halton(i, 2) - 1.0;
                let th = 2.0 * PI * halton(i, 3);
                let q = (1.0 - z * z).sqrt();
                [q * th.cos(), q * th.sin(), z]
            } else {
                [halton(i, 2), halton(i, 3), 0.0]
            };
            let g = f.gradient_at(&s.eval_point(&st, 0.0))?;
            let x = s.vector_field(&st, &g);
            for e in s.tangent_basis(&st) {
                worst = worst.max((s.omega(&st, &x, &e) - dot3(g, e)).abs());
            }
        }
    }
    r.check(Check::at_most("contraction identity i_X omega = dH", worst, 1e-9, "gradient pairing"));
    let bb = Some(Rect::square(2.0));
    let g = |p: &[f64; 3]| (-(p[0] * p[0] + p[1] * p[1])).exp();
    let left = Surface::Plane.area_integral(|p| if p[0] < 0.0 { g(p) } else { 0.0 }, bb, 1e-10)?;
    let right = Surface::Plane.area_integral(|p| if p[0] >= 0.0 { g(p) } else { 0.0 }, bb, 1e-10)?;
    let all = Surface::Plane.area_integral(g, bb, 1e-10)?;
    r.check(Check::at_most("area additive over disjoint pieces", (left.value + right.value - all.value).abs(), 1e-8, "whole integral"));
    Ok(())
}

fn flow_probe(tol: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    let path = plane("(1 + 0.5*sin(3*t)) * exp(neg(x^2 + 2*y^2)) * bump(x^2+y^2-1; 1)", 1.5)?;
    let pts: Vec<[f64; 3]> = (1..=40).map(|i| [2.0 * halton(i, 2) - 1.0, 2.0 * halton(i, 3) - 1.0, 0.0]).collect();
    let det = flow_map(&path, 1.0, &pts, tol.ode)?
        .iter()
        .map(|s| (s.det() - 1.0).abs())
        .fold(0.0, f64::max);
    r.check(Check::at_most("area preservation |det J - 1|", det, 1e-6, "symplectic flow"));
    let back = pts
        .iter()
        .map(|p| -> Result<f64> {
            let q = flow_to(&path, *p, 0.0, 1.0, 1e-12)?;
            let b = flow_to(&path, q, 1.0, 0.0, 1e-12)?;
            Ok((b[0] - p[0]).hypot(b[1] - p[1]))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    r.check(Check::at_most("forward then backward", back, 1e-7, "identity"));
    let auto = HamiltonianPath::parse(Surface::Sphere { area: 4.0 }, "x*z + 0.3*y", None)?;
    let tr = integrate_flow(&auto, [0.6, 0.0, 0.8], (0.0, 1.0), 1e-10)?;
    let drift = tr.max_drift.unwrap_or(f64::NAN);
    r.check(Check::at_most("energy drift of an autonomous flow", drift, 1e-7 * 2.0, "H constant along orbits"));
    Ok(())
}

fn hofer_probe(_: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    let g = "bump(x^2+y^2; 1)*(2 + x)";
    let h = plane(&format!("(1 + t) * {g}"), 1.0)?;
    // β(t) = t², β′·H∘β
    let reparam = plane(&format!("2*t*(1 + t^2) * {g}"), 1.0)?;
    let lh = hofer::length(&h)?;
    r.check(Check::at_most("length under reparametrization", (lh - hofer::length(&reparam)?).abs(), 1e-7, "same path"));
    let neg = plane(&format!("neg((1 + t) * {g})"), 1.0)?;
    r.check(Check::at_most("length under H -> -H", (lh - hofer::length(&neg)?).abs(), 1e-10, "same oscillation"));
    let whole = hofer::calabi(&h)?.value;
    let parts = hofer::calabi(&h.clone().with_interval(0.0, 0.5)?)?.value + hofer::calabi(&h.clone().with_interval(0.5, 1.0)?)?.value;
    r.check(Check::at_most("calabi additive under concatenation", (whole - parts).abs(), 1e-8, "whole interval"));
    let wide = Rect::new([-2.0, -2.0], [3.0, 2.0]);
    let concat = "exp(neg((x-c)^2+y^2))*bump((x-c)^2+y^2 - 1; 1)".replace('c', "(1 - bump(t - 0.5; 0.5))");
    let p = HamiltonianPath::parse(Surface::Plane, &concat, Some(wide))?;
    let fine = hofer::geodesic_check(&p, 8)?;
    let coarse = hofer::geodesic_check(&p, 4)?;
    let monotone = coarse
        .windows
        .iter()
        .enumerate()
        .all(|(k, w)| !w.quasi_autonomous || (fine.windows[2 * k].quasi_autonomous && fine.windows[2 * k + 1].quasi_autonomous));
    r.check(Check::holds("geodesic verdicts monotone under window shrinking", monotone, "sub-windows"));
    Ok(())
}

fn orbits_probe(tol: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    let g = "exp(neg(x^2 + 2*y^2)) * bump(x^2+y^2-1; 1)";
    let opts = PeriodOptions {
        horizon: 20.0,
        ode_tol: tol.ode,
        ..Default::default()
    };
    let h = plane(g, 1.5)?;
    let x0 = [0.4, 0.1, 0.0];
    let t0 = orbits::minimal_positive_period(&h, x0, &opts)?.period.unwrap_or(f64::NAN);
    let x1 = flow_to(&h, x0, 0.0, 0.37 * t0, tol.ode)?;
    let t1 = orbits::minimal_positive_period(&h, x1, &opts)?.period.unwrap_or(f64::NAN);
    r.check(Check::at_most("period invariant along the orbit", (t1 - t0).abs() / t0, 1e-6, "same orbit"));
    for c in [0.5, 2.0] {
        let hc = plane(&format!("{c} * {g}"), 1.5)?;
        let tc = orbits::minimal_positive_period(&hc, x0, &opts)?.period.unwrap_or(f64::NAN);
        r.check(Check::at_most(format!("period scaling by {c}"), (tc * c - t0).abs() / t0, 1e-5, "period / c"));
    }
    for lam in [4.0 * PI, 3.0 * PI] {
        let rot = plane(&format!("{}*(x^2+y^2)*bump(x^2+y^2-1; 1)", lam / 2.0), 1.5)?;
        let lf = linearized_monodromy(&rot, [0.0; 3], (0.0, 1.0), 400)?;
        let got = orbits::linearized_short_orbit(&lf, 1.0)?.unwrap_or(f64::NAN);
        r.check(Check::at_most(format!("linear period at lambda = {:.4}", lam), (got - 2.0 * PI / lam).abs(), 1e-8, "2 pi / lambda"));
    }
    Ok(())
}

fn capacity_probe(tol: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    let h = plane("bump(x^2+y^2-0.64; 1)", 1.3)?;
    let len = hofer::length(&h)?;
    let opts = BallOptions {
        grid: 8,
        levels: 4,
        ..Default::default()
    };
    let c = capacity::cg_dim2_certificate(&h, &opts)?;
    r.check(Check::at_most("certified capacity minus length", c.value - len, 1e-9, "capacity cannot exceed length"));
    let pull = c
        .residuals
        .iter()
        .filter(|x| x.name.contains("pullback") || x.name.ends_with("area-form"))
        .map(|x| x.value)
        .fold(0.0, f64::max);
    r.check(Check::at_most("pullback and area-form residuals", pull, 1e-6, "certificate grid"));
    let slow = plane("bump(x^2+y^2; 4)", 2.0)?;
    let hz = capacity::chz_certificate(&slow, &HzOptions::default())?;
    let boundary = hz.residual("boundary-constancy").map_or(f64::NAN, |x| x.value);
    r.check(Check::at_most("K constant on the boundary", boundary, 1e-9, "m + nu/4"));
    for dir in [Direction::BallToTrapezoid, Direction::TrapezoidToBall] {
        let m = capacity::trapezoid_profile_map(2.0, 0.1, dir, 100)?;
        r.check(Check::at_most(format!("{dir:?}: Jacobian off the slit"), m.jacobian_defect, tol.trap_jacobian, "det = 1"));
        r.check(Check::at_most(format!("{dir:?}: domination"), m.domination_defect, tol.trap_domination, "target profile"));
    }
    r.result("residual_names", c.residuals.iter().map(|x| x.name.clone()).collect::<Vec<_>>());
    Ok(())
}

fn quasicyl_probe(tol: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    let base = plane(GLUE_BASE, 1.5)?;
    let q = quasicyl::glue(&base, &base, 0.1)?;
    r.check(Check::at_most("identical pair symplecticity", q.verify_gluing_symplectic(100)?.max_residual, tol.gluing_identical, "identity"));
    let len = hofer::length(&base)?;
    r.check(Check::at_most("split cylinder area", (q.area()?.mean - len - 0.1).abs(), tol.split_area, "length + nu"));
    let (_, hs, ks) = &glue_pairs()[1];
    let (h, k) = (plane(hs, 1.5)?, plane(ks, 1.5)?);
    let q = quasicyl::glue(&h, &k, 0.05)?;
    r.check(Check::at_most("homotopic pair symplecticity", q.verify_gluing_symplectic(100)?.max_residual, tol.gluing, "J^T Omega J = Omega"));
    let a = q.area()?;
    if a.calabi_gap.map_or(true, |g| g < 1e-8) {
        r.check(Check::at_most("fiber-area spread", a.deviation, tol.area_spread, "independence of the fiber"));
    }
    let c = quasicyl::compare(&h, &k, 0.05)?;
    r.check(Check::at_most("sum identity", c.identity_defect.abs(), tol.compare_identity, "length(H) + length(K) + 2 nu"));
    Ok(())
}

fn moser_probe(tol: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    let p = Perturbation {
        amplitude: Perturbation::DEFAULT_AMPLITUDE,
    };
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for n in [12, 16, 24] {
        let rep = moser::moser_split(&p.grid(n), 6)?;
        // refinement may stall by up to 10%
        monotone &= rep.residual <= 1.1 * prev;
        prev = rep.residual;
        r.result(&format!("n{n}"), rep.residual);
        if n == 12 {
            r.check(Check::at_most("residual at 12^4", rep.residual, tol.moser_residual, "product form"));
        }
    }
    r.check(Check::holds("residual decreases under refinement", monotone, "12, 16, 24"));
    Ok(())
}

fn flatness_probe(tol: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    r.check(Check::at_most("chart symplecticity", flatness::chart_symplecticity_residual(), 1e-12, "exact"));
    let (_, surf, src, support) = flatness_corpus_members(1e-2).remove(0);
    let gen = Arc::new(GeneratingFunction::parse(surf, &src, support)?);
    let mut det = 0.0f64;
    for t in [0.25, 0.5, 1.0] {
        for i in 1..=100 {
            let z = [4.0 * halton(i, 2) - 2.0, 4.0 * halton(i, 3) - 2.0];
            let j = gen.psi_jacobian(z, t)?;
            det = det.max((j[0][0] * j[1][1] - j[0][1] * j[1][0] - 1.0).abs());
        }
    }
    r.check(Check::at_most("|det D psi_t - 1|", det, 1e-8, "symplectic isotopy"));
    let f = flatness::verify_flatness(&gen)?;
    r.check(Check::at_most("swept-area spread over three arcs", f.swept_spread, tol.swept_spread, "arc independence"));
    let sup_area = f.swept.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let agree = (sup_area - f.oscillation).abs().max(f.length_gap).max((sup_area - f.length).abs());
    r.check(Check::at_most("osc F, length and swept area agree", agree, tol.flatness_length * f.oscillation, "pairwise"));
    Ok(())
}

fn shear_probe(tol: &Tolerances, r: &mut ExperimentReport) -> Result<()> {
    let p = HamiltonianPath::parse(Surface::Torus { area: 1.0 }, &shear_profile(), None)?;
    let l = shear::shear_lift_defect(&p, 2.0, 12)?;
    r.check(Check::at_most("lift defect at t = 2", l.max_defect, tol.shear_lift, "(x, y - t f'(x))"));
    Ok(())
}
