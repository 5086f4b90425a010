//! Closed orbits of autonomous Hamiltonian flows: minimal periods by section
//! returns, sampled searches for short orbits, and the linearized criterion.

use std::f64::consts::PI;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::ExprError;
use crate::flow::{self, linearized_monodromy, solve, FlowError, LinearizedFlow, OdeOptions};
use crate::hamiltonian::{HamiltonianPath, Support};
use crate::hofer::{extrema_at, SearchConfig};
use crate::surface::Surface;
use crate::util::{dot3, golden_min, halton, norm3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("Hamiltonian depends on time")]
    NotAutonomous,
    #[error("flow is nearly tangent to every section tried at {0:?}")]
    SectionDegenerate([f64; 3]),
    #[error("Hamiltonian is not regular (constant)")]
    NotRegular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitClass {
    Constant,
    Periodic,
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrbitWitness {
    pub seed: [f64; 3],
    pub period: Option<f64>,
    /// Distance between seed and the refined return point.
    pub residual: f64,
    pub classification: OrbitClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeriodOptions {
    pub horizon: f64,
    /// Required closure at the return.
    pub closure_tol: f64,
    /// Bisection tolerance on the crossing time.
    pub time_tol: f64,
    pub ode_tol: f64,
}

impl Default for PeriodOptions {
    fn default() -> Self {
        PeriodOptions {
            horizon: 2.0,
            closure_tol: 1e-7,
            time_tol: 1e-9,
            ode_tol: 1e-12,
        }
    }
}

/// `|X_H|` below which a seed is a rest point.
pub const CONSTANT_SPEED: f64 = 1e-10;

/// Minimal positive period of the orbit through `x0`, if it closes within the horizon.
pub fn minimal_positive_period(path: &HamiltonianPath, x0: [f64; 3], opts: &PeriodOptions) -> Result<OrbitWitness, OrbitError> {
    if !path.is_autonomous() {
        return Err(OrbitError::NotAutonomous);
    }
    let surf = path.surface;
    let x0 = surf.project(x0);
    let v0 = path.field(&x0, 0.0)?;
    let speed = norm3(v0);
    if speed < CONSTANT_SPEED {
        return Ok(OrbitWitness {
            seed: x0,
            period: None,
            residual: 0.0,
            classification: OrbitClass::Constant,
        });
    }
    let n0 = v0.map(|c| c / speed);
    // in-plane direction orthogonal to the flow
    let perp = match surf {
        Surface::Sphere { .. } => crate::util::cross(x0, n0),
        _ => [-n0[1], n0[0], 0.0],
    };
    for attempt in 0..4 {
        let a = (attempt as f64) * PI / 6.0;
        let normal = [
            a.cos() * n0[0] + a.sin() * perp[0],
            a.cos() * n0[1] + a.sin() * perp[1],
            a.cos() * n0[2] + a.sin() * perp[2],
        ];
        match section_return(path, x0, normal, opts)? {
            SectionOutcome::Degenerate => continue,
            SectionOutcome::Closed(period, residual) => {
                return Ok(OrbitWitness {
                    seed: x0,
                    period: Some(period),
                    residual,
                    classification: OrbitClass::Periodic,
                })
            }
            SectionOutcome::NoReturn => {
                return Ok(OrbitWitness {
                    seed: x0,
                    period: None,
                    residual: f64::NAN,
                    classification: OrbitClass::Open,
                })
            }
        }
    }
    Err(OrbitError::SectionDegenerate(x0))
}

enum SectionOutcome {
    Closed(f64, f64),
    NoReturn,
    Degenerate,
}

fn section_return(path: &HamiltonianPath, x0: [f64; 3], normal: [f64; 3], opts: &PeriodOptions) -> Result<SectionOutcome, OrbitError> {
    let surf = path.surface;
    let g = |y: &[f64; 3]| dot3(normal, surf.displacement(&x0, y));
    let ode = OdeOptions::new(opts.ode_tol).max_step(opts.horizon / 64.0);
    let mut prev = (0.0, x0, 0.0);
    let mut found = None;
    let mut degenerate = false;
    let mut err = None;
    solve(
        flow::rhs(path),
        x0,
        0.0,
        opts.horizon,
        &ode,
        |y| surf.project(y),
        |t, y| {
            if t == 0.0 {
                return ControlFlow::Continue(());
            }
            let gy = g(y);
            let (tp, yp, gp) = prev;
            prev = (t, *y, gy);
            // upward crossing close to the seed
            if gp < 0.0 && gy >= 0.0 && surf.distance(&x0, y) < 0.25 {
                match refine_crossing(path, tp, yp, t, &g, opts) {
                    Ok((tc, yc)) => {
                        let residual = surf.distance(&x0, &yc);
                        if residual < opts.closure_tol {
                            let v = match path.field(&yc, 0.0) {
                                Ok(v) => v,
                                Err(e) => {
                                    err = Some(OrbitError::from(e));
                                    return ControlFlow::Break(());
                                }
                            };
                            if dot3(v, normal).abs() < 1e-3 * norm3(v) {
                                degenerate = true;
                                return ControlFlow::Break(());
                            }
                            found = Some((tc, residual));
                            return ControlFlow::Break(());
                        }
                    }
                    Err(e) => {
                        err = Some(e);
                        return ControlFlow::Break(());
                    }
                }
            }
            ControlFlow::Continue(())
        },
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(if degenerate {
        SectionOutcome::Degenerate
    } else if let Some((t, r)) = found {
        SectionOutcome::Closed(t, r)
    } else {
        SectionOutcome::NoReturn
    })
}

fn refine_crossing<G: Fn(&[f64; 3]) -> f64>(
    path: &HamiltonianPath,
    ta: f64,
    ya: [f64; 3],
    tb: f64,
    g: &G,
    opts: &PeriodOptions,
) -> Result<(f64, [f64; 3]), OrbitError> {
    let at = |t: f64| flow::flow_to(path, ya, ta, t, opts.ode_tol);
    let (mut lo, mut hi) = (ta, tb);
    let mut y_hi = at(tb)?;
    while hi - lo > opts.time_tol {
        let m = 0.5 * (lo + hi);
        let ym = at(m)?;
        if g(&ym) >= 0.0 {
            hi = m;
            y_hi = ym;
        } else {
            lo = m;
        }
    }
    Ok((hi, y_hi))
}

/// Seed layout for [`has_short_orbit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeedSpec {
    /// `grid × grid` regular seeds over the search region.
    pub grid: usize,
    /// Additional quasi-random seeds.
    pub random: usize,
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec { grid: 40, random: 200 }
    }
}

/// Seeds in a fixed order: the grid row by row, then Halton points; on the
/// plane the list is then stably sorted by distance from the support centre.
pub fn seeds(path: &HamiltonianPath, spec: &SeedSpec) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(spec.grid * spec.grid + spec.random);
    let n = spec.grid;
    let place = |a: f64, b: f64| -> [f64; 3] {
        match (path.surface, path.support) {
            (Surface::Sphere { .. }, _) => {
                let z = -1.0 + 2.0 * a;
                let th = 2.0 * PI * b;
                let r = (1.0 - z * z).max(0.0).sqrt();
                [r * th.cos(), r * th.sin(), z]
            }
            (_, Support::Rect(r)) => {
                let p = r.at(a, b);
                [p[0], p[1], 0.0]
            }
            _ => [a, b, 0.0],
        }
    };
    for i in 0..n {
        for j in 0..n {
            out.push(place((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64));
        }
    }
    for k in 0..spec.random {
        out.push(place(halton(k + 1, 2), halton(k + 1, 3)));
    }
    if let Support::Rect(r) = path.support {
        // plane seeds run outward from the centre of the support box
        let c = r.at(0.5, 0.5);
        let d = |p: &[f64; 3]| (p[0] - c[0]).hypot(p[1] - c[1]);
        out.sort_by(|a, b| d(a).total_cmp(&d(b)));
    }
    out
}

/// Result of a sampled short-orbit search; "none" is a sampled claim only.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShortOrbitScan {
    pub witness: Option<OrbitWitness>,
    pub seeds_checked: usize,
    pub seeds: SeedSpec,
    pub horizon: f64,
    pub sampled_claim: bool,
}

/// First seed (in order) whose orbit closes with period below `horizon`.
pub fn has_short_orbit(path: &HamiltonianPath, horizon: f64, spec: &SeedSpec) -> Result<ShortOrbitScan, OrbitError> {
    let pts = seeds(path, spec);
    short_orbit_among(path, &pts, horizon, *spec)
}

/// [`has_short_orbit`] over explicit seeds.
pub fn short_orbit_among(path: &HamiltonianPath, pts: &[[f64; 3]], horizon: f64, spec: SeedSpec) -> Result<ShortOrbitScan, OrbitError> {
    if !path.is_autonomous() {
        return Err(OrbitError::NotAutonomous);
    }
    let opts = PeriodOptions {
        horizon,
        ..Default::default()
    };
    let results: Vec<Result<OrbitWitness, OrbitError>> =
        pts.par_iter().map(|p| minimal_positive_period(path, *p, &opts)).collect();
    let mut witness = None;
    for r in results {
        match r {
            Ok(w) if w.classification == OrbitClass::Periodic && w.period.unwrap() < horizon - 1e-6 => {
                witness = Some(w);
                break;
            }
            Ok(_) | Err(OrbitError::SectionDegenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(ShortOrbitScan {
        witness,
        seeds_checked: pts.len(),
        seeds: spec,
        horizon,
        sampled_claim: true,
    })
}

/// Period `2πr / |H'(r)|` of the circle of radius `r` for a radial Hamiltonian on the plane.
pub fn radial_period(path: &HamiltonianPath, r: f64) -> Result<f64, OrbitError> {
    let g = path.gradient(&[r, 0.0, 0.0], 0.0)?;
    Ok(2.0 * PI * r / g[0].abs())
}

/// Smallest singular value of a 2×2 matrix.
fn sigma_min(m: [[f64; 2]; 2]) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s1 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s1 - disc)).max(0.0).sqrt()
}

fn minus_identity(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[m[0][0] - 1.0, m[0][1]], [m[1][0], m[1][1] - 1.0]]
}

/// Unit vector spanning (approximately) the kernel of a 2×2 matrix.
fn null_vector(m: [[f64; 2]; 2]) -> [f64; 2] {
    let r0 = [m[0][0], m[0][1]];
    let r1 = [m[1][0], m[1][1]];
    let r = if r0[0].hypot(r0[1]) >= r1[0].hypot(r1[1]) { r0 } else { r1 };
    let n = r[0].hypot(r[1]);
    if n == 0.0 {
        return [1.0, 0.0];
    }
    [-r[1] / n, r[0] / n]
}

/// Threshold on `σ_min(M(t) − I)` for a linear closed orbit.
pub const LINEAR_CLOSURE: f64 = 1e-6;

/// Smallest `t ∈ (0, horizon)` at which the linearized flow has a non-constant
/// closed trajectory.
pub fn linearized_short_orbit(lf: &LinearizedFlow, horizon: f64) -> Result<Option<f64>, FlowError> {
    let sig: Vec<f64> = lf.matrices.iter().map(|m| sigma_min(minus_identity(*m))).collect();
    for k in 1..lf.times.len().saturating_sub(1) {
        let t = lf.times[k];
        if t >= horizon {
            break;
        }
        if !(sig[k - 1] > sig[k] && sig[k] <= sig[k + 1]) {
            continue;
        }
        let mut failure = None;
        let (tm, smin) = golden_min(
            |s| match lf.at(s) {
                Ok(m) => sigma_min(minus_identity(m)),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            lf.times[k - 1],
            lf.times[k + 1],
            1e-11,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        if smin >= LINEAR_CLOSURE || tm <= 0.0 || tm >= horizon {
            continue;
        }
        // the fixed vector's linear orbit must move
        let xi = null_vector(minus_identity(lf.at(tm)?));
        let moving = lf
            .matrices
            .iter()
            .zip(&lf.times)
            .filter(|(_, s)| **s <= tm)
            .any(|(m, _)| {
                let v = [m[0][0] * xi[0] + m[0][1] * xi[1], m[1][0] * xi[0] + m[1][1] * xi[1]];
                (v[0] - xi[0]).hypot(v[1] - xi[1]) > 1e-6
            });
        if moving {
            return Ok(Some(tm));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RigidityReport {
    pub point: [f64; 3],
    pub linear_period: Option<f64>,
    pub witness: Option<OrbitWitness>,
    pub seeds_checked: usize,
    pub verdict: String,
}

pub const CRITERION_SILENT: &str = "criterion silent";
pub const WITNESS_FOUND: &str = "nonlinear witness found";
pub const SAMPLING_GAP: &str = "linear short orbit but no sampled nonlinear witness (sampling gap, not a refutation)";

/// Linearized criterion at a fixed extremum `p`, followed by a global sampled
/// search (seeds ordered by distance from `p`) when the criterion fires.
pub fn rigidity_probe(path: &HamiltonianPath, p: [f64; 3], horizon: f64, spec: &SeedSpec) -> Result<RigidityReport, OrbitError> {
    let e = extrema_at(path, path.interval.0, &SearchConfig::default())?;
    if e.oscillation() <= 1e-12 {
        return Err(OrbitError::NotRegular);
    }
    let lf = linearized_monodromy(path, p, (0.0, horizon), 400)?;
    let linear_period = linearized_short_orbit(&lf, horizon)?;
    let mut report = RigidityReport {
        point: p,
        linear_period,
        witness: None,
        seeds_checked: 0,
        verdict: CRITERION_SILENT.into(),
    };
    if linear_period.is_none() {
        return Ok(report);
    }
    let surf = path.surface;
    let mut pts = seeds(path, spec);
    pts.sort_by(|a, b| surf.distance(a, &p).total_cmp(&surf.distance(b, &p)));
    let scan = short_orbit_among(path, &pts, horizon, *spec)?;
    report.seeds_checked = scan.seeds_checked;
    report.witness = scan.witness;
    report.verdict = if scan.witness.is_some() { WITNESS_FOUND } else { SAMPLING_GAP }.into();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::Rect;

    fn plane(src: &str, half: f64) -> HamiltonianPath {
        HamiltonianPath::parse(Surface::Plane, src, Some(Rect::square(half))).unwrap()
    }

    fn rotation(lam: f64) -> HamiltonianPath {
        plane(&format!("{}*(x^2+y^2)*bump(x^2+y^2 - 1; 1)", lam / 2.0), 1.5)
    }

    #[test]
    fn rotation_period() {
        let w = minimal_positive_period(&rotation(4.0 * PI), [0.1, 0.0, 0.0], &PeriodOptions::default()).unwrap();
        assert_eq!(w.classification, OrbitClass::Periodic);
        assert!((w.period.unwrap() - 0.5).abs() < 1e-6, "{w:?}");
        assert!(w.residual < 1e-6);
    }

    #[test]
    fn sphere_period_one() {
        let s = Surface::Sphere { area: 4.0 };
        let p = HamiltonianPath::parse(s, "2*z + 2", None).unwrap();
        let w = minimal_positive_period(&p, [0.6, 0.0, 0.8], &PeriodOptions::default()).unwrap();
        assert!((w.period.unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn plateau_interior_is_constant() {
        let p = plane("bump(x^2+y^2 - 0.64; 1)", 2.0);
        let w = minimal_positive_period(&p, [0.2, 0.1, 0.0], &PeriodOptions::default()).unwrap();
        assert_eq!(w.classification, OrbitClass::Constant);
    }

    #[test]
    fn period_invariant_along_orbit_and_scaling() {
        let p = plane("bump(x^2 + 2*y^2; 2)", 1.5);
        let opts = PeriodOptions { horizon: 20.0, ..Default::default() };
        let w = minimal_positive_period(&p, [0.5, 0.0, 0.0], &opts).unwrap();
        let t = w.period.unwrap();
        let other = flow::flow_to(&p, [0.5, 0.0, 0.0], 0.0, 0.3 * t, 1e-12).unwrap();
        let w2 = minimal_positive_period(&p, other, &opts).unwrap();
        assert!((w2.period.unwrap() - t).abs() < 1e-6 * t);
        let doubled = p.affine(2.0, 0.0, "2H");
        let w3 = minimal_positive_period(&doubled, [0.5, 0.0, 0.0], &opts).unwrap();
        assert!((w3.period.unwrap() - t / 2.0).abs() < 1e-5 * t);
    }

    #[test]
    fn short_orbit_scan() {
        let z = plane("0", 1.0);
        let spec = SeedSpec { grid: 6, random: 10 };
        assert!(has_short_orbit(&z, 1.0, &spec).unwrap().witness.is_none());
        let r = has_short_orbit(&rotation(4.0 * PI), 1.0, &spec).unwrap();
        let w = r.witness.unwrap();
        assert!((w.period.unwrap() - 0.5).abs() < 1e-4, "{w:?}");
    }

    #[test]
    fn linearized_periods() {
        let z = LinearizedFlow::identity([0.0; 3], (0.0, 1.0), 100);
        assert_eq!(linearized_short_orbit(&z, 1.0).unwrap(), None);
        for (lam, expect) in [(4.0 * PI, Some(0.5)), (PI, None), (3.0 * PI, Some(2.0 / 3.0))] {
            let lf = linearized_monodromy(&rotation(lam), [0.0; 3], (0.0, 1.0), 400).unwrap();
            let got = linearized_short_orbit(&lf, 1.0).unwrap();
            match (got, expect) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-8, "{a} {b}"),
                (a, b) => assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn probe_control_and_degenerate() {
        let spec = SeedSpec { grid: 10, random: 0 };
        let r = rigidity_probe(&rotation(PI), [0.0; 3], 1.0, &spec).unwrap();
        assert_eq!(r.verdict, CRITERION_SILENT);
        assert!(matches!(
            rigidity_probe(&plane("0", 1.0), [0.0; 3], 1.0, &spec),
            Err(OrbitError::NotRegular)
        ));
    }
}
