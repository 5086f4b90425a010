//! Fibered ball embeddings into the regions under and over the graph of an
//! autonomous `H` on a surface.
//!
//! The base map is `f(u, v) = φ_G^v(β(u))` with `β` the normalized gradient
//! path of `G` (`G = H − min H` or `max H − H`) descending from level
//! `m − ε/2`; then `f*dG = −du` and `f*ω = du ∧ dv`. Over `f(u, v)` the fiber
//! disc of capacity `m − ε − u` is mapped onto the rectangle `[0, m − ε − u) × S¹`.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::Serialize;

use super::trap::{trapezoid_profile_map, Direction};
use super::{CapacityError, CertificateKind, EmbeddingCertificate, Residual, Side};
use crate::flow::{flow_to, solve, FlowError, OdeOptions};
use crate::hamiltonian::HamiltonianPath;
use crate::hofer::{checked_extrema, SearchConfig};
use crate::orbits::{has_short_orbit, minimal_positive_period, OrbitClass, PeriodOptions, SeedSpec};
use crate::surface::Surface;
use crate::util::{bisect, dot3, norm3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallOptions {
    pub epsilon: f64,
    /// Residual grid is `grid × grid` in `(u, v)`.
    pub grid: usize,
    /// Number of levels whose minimal period is checked.
    pub levels: usize,
    pub residual_tol: f64,
    pub ode_tol: f64,
    pub precondition_seeds: SeedSpec,
}

impl Default for BallOptions {
    fn default() -> Self {
        BallOptions {
            epsilon: 0.05,
            grid: 50,
            levels: 20,
            residual_tol: 1e-6,
            ode_tol: 1e-12,
            precondition_seeds: SeedSpec::default(),
        }
    }
}

/// Residuals below this floor of `ε` are not meaningful.
const MIN_EPSILON: f64 = 1e-9;
const FD_U: f64 = 1e-5;

/// Gradient path of `g` from level `top` downward, parametrized by level drop.
struct GradientPath<'a> {
    g: &'a HamiltonianPath,
    start: [f64; 3],
    top: f64,
    tol: f64,
}

impl GradientPath<'_> {
    fn descent(&self, s: &[f64; 3]) -> Result<[f64; 3], FlowError> {
        let gr = tangential(self.g, s)?;
        let n2 = dot3(gr, gr);
        if n2 < 1e-16 {
            return Err(FlowError::Singular(*s));
        }
        Ok(gr.map(|c| -c / n2))
    }

    /// Point on level `top − u`.
    fn at(&self, u: f64) -> Result<[f64; 3], CapacityError> {
        let surf = self.g.surface;
        let (mut y, _) = solve(
            |_, s: &[f64; 3]| self.descent(s),
            self.start,
            0.0,
            u,
            &OdeOptions::new(self.tol),
            |y| surf.project(y),
            |_, _| ControlFlow::Continue(()),
        )
        .map_err(|e| CapacityError::NoGradientPath(e.to_string()))?;
        // snap onto the level
        for _ in 0..2 {
            let gr = tangential(self.g, &y).map_err(FlowError::from)?;
            let n2 = dot3(gr, gr);
            let d = self.g.value(&y, 0.0)? - (self.top - u);
            y = surf.project([y[0] - d * gr[0] / n2, y[1] - d * gr[1] / n2, y[2] - d * gr[2] / n2]);
        }
        Ok(y)
    }
}

fn tangential(g: &HamiltonianPath, s: &[f64; 3]) -> Result<[f64; 3], crate::expr::ExprError> {
    let gr = g.gradient(s, 0.0)?;
    Ok(match g.surface {
        Surface::Sphere { .. } => {
            let n = dot3(gr, *s);
            [gr[0] - n * s[0], gr[1] - n * s[1], gr[2] - n * s[2]]
        }
        _ => [gr[0], gr[1], 0.0],
    })
}

/// Shortest arc from `p` toward `q` (great circle on the sphere), at fraction `s`.
fn arc(surf: &Surface, p: &[f64; 3], q: &[f64; 3], s: f64) -> [f64; 3] {
    match surf {
        Surface::Sphere { .. } => {
            let c = dot3(*p, *q).clamp(-1.0, 1.0);
            let mut w = [q[0] - c * p[0], q[1] - c * p[1], q[2] - c * p[2]];
            let n = norm3(w);
            w = if n < 1e-9 { surf.tangent_basis(p)[0] } else { w.map(|x| x / n) };
            let a = s * c.acos();
            surf.project([
                a.cos() * p[0] + a.sin() * w[0],
                a.cos() * p[1] + a.sin() * w[1],
                a.cos() * p[2] + a.sin() * w[2],
            ])
        }
        _ => {
            let d = surf.displacement(p, q);
            [p[0] + s * d[0], p[1] + s * d[1], 0.0]
        }
    }
}

struct SideReport {
    residuals: Vec<Residual>,
    min_period: f64,
    start: [f64; 3],
}

/// Build and measure the base map for `g ≥ 0` with `max g = m` at `top_pt`.
fn one_side(
    g: &HamiltonianPath,
    m: f64,
    top_pt: [f64; 3],
    bottom_pt: [f64; 3],
    opts: &BallOptions,
) -> Result<SideReport, CapacityError> {
    let surf = g.surface;
    let eps = opts.epsilon;
    let top = m - 0.5 * eps;
    let span = m - eps;
    let mut err = None;
    let s0 = bisect(
        |s| match g.value(&arc(&surf, &top_pt, &bottom_pt, s), 0.0) {
            Ok(v) => v - top,
            Err(e) => {
                err = Some(e);
                f64::NAN
            }
        },
        0.0,
        1.0,
        1e-15,
    );
    if let Some(e) = err {
        return Err(e.into());
    }
    let s0 = s0.ok_or_else(|| CapacityError::NoGradientPath("level m - eps/2 not crossed".into()))?;
    let beta = GradientPath {
        g,
        start: arc(&surf, &top_pt, &bottom_pt, s0),
        top,
        tol: opts.ode_tol,
    };
    let beta = GradientPath {
        start: beta.at(0.0)?,
        ..beta
    };

    let n = opts.grid;
    let us: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64 * span).collect();
    let vs: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
    type Row = (f64, f64, f64, f64, f64);
    let rows: Vec<Result<Row, CapacityError>> = us
        .par_iter()
        .map(|&u| {
            let (b, bp, bm) = (beta.at(u)?, beta.at(u + FD_U)?, beta.at(u - FD_U)?);
            let mut level = 0.0f64;
            let mut pull_u = 0.0f64;
            let mut pull_v = 0.0f64;
            let mut area = 0.0f64;
            let mut overflow = f64::NEG_INFINITY;
            for &v in &vs {
                let f = flow_to(g, b, 0.0, v, opts.ode_tol)?;
                let fp = flow_to(g, bp, 0.0, v, opts.ode_tol)?;
                let fm = flow_to(g, bm, 0.0, v, opts.ode_tol)?;
                let gf = g.value(&f, 0.0)?;
                level = level.max((gf - (top - u)).abs());
                let du = (g.value(&fp, 0.0)? - g.value(&fm, 0.0)?) / (2.0 * FD_U);
                pull_u = pull_u.max((du + 1.0).abs());
                let fvp = flow_to(g, f, v, v + FD_U, opts.ode_tol)?;
                let fvm = flow_to(g, f, v, v - FD_U, opts.ode_tol)?;
                let dv = (g.value(&fvp, 0.0)? - g.value(&fvm, 0.0)?) / (2.0 * FD_U);
                pull_v = pull_v.max(dv.abs());
                let d = surf.displacement(&fm, &fp).map(|c| c / (2.0 * FD_U));
                let x = g.field(&f, 0.0)?;
                area = area.max((surf.omega(&f, &d, &x) - 1.0).abs());
                // fiber rectangle of capacity span − u must fit under G(f)
                overflow = overflow.max((span - u) - gf);
            }
            Ok((level, pull_u, pull_v, area, overflow))
        })
        .collect();
    let mut worst = [0.0f64, 0.0, 0.0, 0.0, f64::NEG_INFINITY];
    for r in rows {
        let r = r?;
        for (w, x) in worst.iter_mut().zip([r.0, r.1, r.2, r.3, r.4]) {
            *w = w.max(x);
        }
    }

    let popts = PeriodOptions::default();
    let levels: Vec<f64> = (0..=opts.levels).map(|k| k as f64 / opts.levels as f64 * span).collect();
    let periods: Vec<Result<(f64, Option<f64>), CapacityError>> = levels
        .par_iter()
        .map(|&u| {
            let w = minimal_positive_period(g, beta.at(u)?, &popts)?;
            Ok((u, if w.classification == OrbitClass::Periodic { w.period } else { None }))
        })
        .collect();
    let mut min_period = f64::INFINITY;
    for p in periods {
        let (u, period) = p?;
        if let Some(t) = period {
            if t < 1.0 - 1e-6 {
                return Err(CapacityError::LevelTooShort { level: top - u, period: t });
            }
            min_period = min_period.min(t);
        }
    }
    let tol = opts.residual_tol;
    Ok(SideReport {
        residuals: vec![
            Residual::at_most("level", worst[0], tol),
            Residual::at_most("pullback-du", worst[1], tol),
            Residual::at_most("pullback-dv", worst[2], tol),
            Residual::at_most("area-form", worst[3], tol),
            Residual::at_most("fiber-overflow", worst[4], -0.25 * eps),
        ],
        min_period,
        start: beta.start,
    })
}

fn hessian_det(path: &HamiltonianPath, p: &[f64; 3]) -> Result<f64, CapacityError> {
    let e = path.surface.tangent_basis(p);
    let h = path.hamiltonian.hessian(p, 0.0)?;
    let q = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += a[i] * h[i][j] * b[j];
            }
        }
        s
    };
    Ok(q(&e[0], &e[0]) * q(&e[1], &e[1]) - q(&e[0], &e[1]).powi(2))
}

/// Certify `c(region) ≥ osc H − ε` on both sides of the graph of an autonomous `H`
/// whose nonconstant closed orbits all have period at least 1.
pub fn cg_dim2_certificate(path: &HamiltonianPath, opts: &BallOptions) -> Result<EmbeddingCertificate, CapacityError> {
    if !path.is_autonomous() {
        return Err(CapacityError::Unsupported("time-dependent Hamiltonian".into()));
    }
    let ext = checked_extrema(path, 0.0, &SearchConfig::default())?;
    let m = ext.oscillation();
    if m <= 1e-12 {
        return Err(CapacityError::NotRegular);
    }
    if !(opts.epsilon > MIN_EPSILON) || opts.epsilon >= m {
        return Err(CapacityError::InvalidParameter(format!("epsilon = {} with oscillation {m}", opts.epsilon)));
    }
    let scan = has_short_orbit(path, 1.0, &opts.precondition_seeds)?;
    if let Some(w) = scan.witness {
        return Err(CapacityError::ShortOrbit(w));
    }
    let under = path.affine(1.0, -ext.min, format!("{} - min", path.label));
    let over = path.affine(-1.0, ext.max, format!("max - {}", path.label));
    let lo = one_side(&under, m, ext.argmax, ext.argmin, opts)?;
    let hi = one_side(&over, m, ext.argmin, ext.argmax, opts)?;
    let fiber = trapezoid_profile_map(m - opts.epsilon, 0.5 * opts.epsilon, Direction::BallToTrapezoid, 100)?;

    let mut residuals = Vec::new();
    for (side, r) in [("under", &lo), ("over", &hi)] {
        for x in &r.residuals {
            residuals.push(Residual {
                name: format!("{side}:{}", x.name),
                ..x.clone()
            });
        }
        residuals.push(Residual {
            name: format!("{side}:min-level-period"),
            value: r.min_period,
            tol: 1.0 - 1e-6,
            pass: r.min_period >= 1.0 - 1e-6,
        });
    }
    residuals.push(Residual::at_most("fiber:jacobian", fiber.jacobian_defect, opts.residual_tol));
    residuals.push(Residual::at_most("fiber:domination", fiber.domination_defect, 1e-9));
    residuals.push(Residual::info("hessian-det-max", hessian_det(path, &ext.argmax)?));
    residuals.push(Residual::info("hessian-det-min", hessian_det(path, &ext.argmin)?));

    EmbeddingCertificate {
        kind: CertificateKind::FiberedBall,
        path_label: path.label.clone(),
        value: m - opts.epsilon,
        epsilon: opts.epsilon,
        side: Side::Both,
        residuals,
        maps: vec![
            format!("base: f(u, v) = flow of G for time v from beta(u); G(beta(u)) = {} - u", m - 0.5 * opts.epsilon),
            format!("under: G = {}, start {:?}", under.hamiltonian.describe(), lo.start),
            format!("over: G = {}, start {:?}", over.hamiltonian.describe(), hi.start),
            "fiber: (r, phi) -> (pi r^2, phi / 2pi)".into(),
        ],
        notes: vec![
            format!(
                "no closed orbit of period < 1 on {} seeds (sampled claim); level periods of >= 2 reported as infinite",
                scan.seeds_checked
            ),
            "nondegeneracy of the extrema is reported, not enforced".into(),
        ],
        degenerate: false,
    }
    .check()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::Rect;

    #[test]
    fn sphere_height_both_sides() {
        let p = HamiltonianPath::parse(Surface::Sphere { area: 4.0 }, "2*z + 2", None).unwrap();
        let opts = BallOptions {
            epsilon: 0.2,
            grid: 12,
            levels: 6,
            ..Default::default()
        };
        let c = cg_dim2_certificate(&p, &opts).unwrap();
        assert!(c.value >= 3.8 - 1e-9, "{}", c.value);
        let per = c.residual("under:min-level-period").unwrap().value;
        assert!((per - 1.0).abs() < 1e-6, "{per}");
    }

    #[test]
    fn plateau_bump_both_sides() {
        let p = HamiltonianPath::parse(Surface::Plane, "bump(x^2+y^2-0.64; 1)", Some(Rect::square(1.3))).unwrap();
        let opts = BallOptions {
            grid: 10,
            levels: 6,
            ..Default::default()
        };
        let c = cg_dim2_certificate(&p, &opts).unwrap();
        assert!(c.value >= 0.95 - 1e-12);
    }

    #[test]
    fn fast_rotation_is_rejected() {
        let p = HamiltonianPath::parse(
            Surface::Plane,
            &format!("{}*(x^2+y^2)*bump(x^2+y^2-1; 1)", 2.0 * std::f64::consts::PI),
            Some(Rect::square(1.5)),
        )
        .unwrap();
        assert!(matches!(
            cg_dim2_certificate(&p, &BallOptions::default()),
            Err(CapacityError::ShortOrbit(_))
        ));
    }
}
