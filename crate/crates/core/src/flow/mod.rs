//! Hamiltonian flows: trajectories, flow maps with Jacobians (finite-difference
//! or variational), and linearized flows at fixed points.

pub mod ode;

use std::fmt::Write as _;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::ExprError;
use crate::hamiltonian::HamiltonianPath;
use crate::surface::{Surface, SurfacePoint};
use crate::util::{cross, dot3, norm3};
pub use ode::{solve, OdeOptions, OdeStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("step size {h:e} underflowed at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("point is not fixed: |X_H| = {speed:e} at t = {t}")]
    NotFixed { t: f64, speed: f64 },
    #[error("vector field is singular at {0:?}")]
    Singular([f64; 3]),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: [f64; 3],
}

/// Sampled solution of the Hamiltonian ODE.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    #[serde(skip)]
    pub surface: Surface,
    pub samples: Vec<TrajectorySample>,
    pub tol: f64,
    /// `max |H(x(t)) − H(x(0))|` for autonomous Hamiltonians.
    pub max_drift: Option<f64>,
}

impl Trajectory {
    pub fn end(&self) -> [f64; 3] {
        self.samples.last().expect("trajectory has samples").state
    }

    pub fn points(&self) -> Vec<(f64, SurfacePoint)> {
        self.samples
            .iter()
            .map(|s| (s.t, self.surface.point(&s.state)))
            .collect()
    }

    /// CSV with columns `t,chart,c1,c2` (plus `ax,ay,az` on the sphere).
    pub fn to_csv(&self) -> String {
        let sphere = self.surface.is_sphere();
        let mut out = String::from(if sphere { "t,chart,c1,c2,ax,ay,az\n" } else { "t,chart,c1,c2\n" });
        for (t, p) in self.points() {
            let chart = serde_json::to_value(p.chart).unwrap();
            let _ = write!(out, "{t},{},{},{}", chart.as_str().unwrap(), p.coords[0], p.coords[1]);
            if let Some(a) = p.ambient {
                let _ = write!(out, ",{},{},{}", a[0], a[1], a[2]);
            }
            out.push('\n');
        }
        out
    }
}

/// Right-hand side `X_{H_t}` as an ODE closure.
pub fn rhs(path: &HamiltonianPath) -> impl Fn(f64, &[f64; 3]) -> Result<[f64; 3], FlowError> + '_ {
    move |t, s| Ok(path.field(s, t)?)
}

/// Flow `x0` from `t0` to `t1`.
pub fn flow_to(path: &HamiltonianPath, x0: [f64; 3], t0: f64, t1: f64, tol: f64) -> Result<[f64; 3], FlowError> {
    let surf = path.surface;
    let (y, _) = solve(
        rhs(path),
        x0,
        t0,
        t1,
        &OdeOptions::new(tol),
        |y| surf.project(y),
        |_, _| ControlFlow::Continue(()),
    )?;
    Ok(y)
}

/// Trajectory recording every accepted step.
pub fn integrate_flow(
    path: &HamiltonianPath,
    x0: [f64; 3],
    span: (f64, f64),
    tol: f64,
) -> Result<Trajectory, FlowError> {
    let surf = path.surface;
    let mut samples = Vec::new();
    let mut drift = DriftMonitor::new(path, &x0)?;
    solve(
        rhs(path),
        surf.project(x0),
        span.0,
        span.1,
        &OdeOptions::new(tol),
        |y| surf.project(y),
        |t, y| {
            samples.push(TrajectorySample { t, state: *y });
            drift.observe(y);
            ControlFlow::Continue(())
        },
    )?;
    Ok(Trajectory {
        surface: surf,
        samples,
        tol,
        max_drift: drift.value(),
    })
}

/// Trajectory sampled at `n + 1` equally spaced times.
pub fn integrate_flow_uniform(
    path: &HamiltonianPath,
    x0: [f64; 3],
    span: (f64, f64),
    n: usize,
    tol: f64,
) -> Result<Trajectory, FlowError> {
    let surf = path.surface;
    let mut drift = DriftMonitor::new(path, &x0)?;
    let mut y = surf.project(x0);
    let mut samples = vec![TrajectorySample { t: span.0, state: y }];
    for k in 1..=n {
        let ta = span.0 + (span.1 - span.0) * (k - 1) as f64 / n as f64;
        let tb = span.0 + (span.1 - span.0) * k as f64 / n as f64;
        y = flow_to(path, y, ta, tb, tol)?;
        drift.observe(&y);
        samples.push(TrajectorySample { t: tb, state: y });
    }
    Ok(Trajectory {
        surface: surf,
        samples,
        tol,
        max_drift: drift.value(),
    })
}

struct DriftMonitor<'a> {
    path: &'a HamiltonianPath,
    h0: Option<f64>,
    worst: f64,
}

impl<'a> DriftMonitor<'a> {
    fn new(path: &'a HamiltonianPath, x0: &[f64; 3]) -> Result<Self, FlowError> {
        let h0 = if path.is_autonomous() {
            Some(path.value(&path.surface.project(*x0), 0.0)?)
        } else {
            None
        };
        Ok(DriftMonitor { path, h0, worst: 0.0 })
    }

    fn observe(&mut self, y: &[f64; 3]) {
        if let Some(h0) = self.h0 {
            if let Ok(v) = self.path.value(y, 0.0) {
                self.worst = self.worst.max((v - h0).abs());
            }
        }
    }

    fn value(&self) -> Option<f64> {
        self.h0.map(|_| self.worst)
    }
}

/// Start/end pair of a flow map with its Jacobian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowMapSample {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub elapsed: f64,
    /// In the orthonormal tangent frames of the surface at start and end.
    pub jacobian: [[f64; 2]; 2],
}

impl FlowMapSample {
    pub fn det(&self) -> f64 {
        let j = &self.jacobian;
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }
}

/// Finite-difference step for flow-map Jacobians (chart units).
pub const JACOBIAN_STEP: f64 = 1e-5;

/// Time-`t` map (from the start of the path interval) at each point, in parallel.
pub fn flow_map(path: &HamiltonianPath, t: f64, points: &[[f64; 3]], tol: f64) -> Result<Vec<FlowMapSample>, FlowError> {
    let t0 = path.interval.0;
    points
        .par_iter()
        .map(|p| flow_with_jacobian(path, *p, t0, t0 + t, tol))
        .collect()
}

/// Map from time `ta` to `tb` at one point with its Jacobian.
pub fn flow_map_sample(path: &HamiltonianPath, x: [f64; 3], ta: f64, tb: f64, tol: f64) -> Result<FlowMapSample, FlowError> {
    let surf = path.surface;
    let x = surf.project(x);
    let end = flow_to(path, x, ta, tb, tol)?;
    let eb = surf.tangent_basis(&x);
    let ee = surf.tangent_basis(&end);
    let h = JACOBIAN_STEP;
    let mut jac = [[0.0; 2]; 2];
    for j in 0..2 {
        let shifted = |sgn: f64| {
            let s = [x[0] + sgn * h * eb[j][0], x[1] + sgn * h * eb[j][1], x[2] + sgn * h * eb[j][2]];
            flow_to(path, surf.project(s), ta, tb, tol)
        };
        let (p, m) = (shifted(1.0)?, shifted(-1.0)?);
        let d = [p[0] - m[0], p[1] - m[1], p[2] - m[2]];
        for i in 0..2 {
            jac[i][j] = dot3(ee[i], d) / (2.0 * h);
        }
    }
    Ok(FlowMapSample {
        start: x,
        end,
        elapsed: tb - ta,
        jacobian: jac,
    })
}

/// Map from `ta` to `tb` with its Jacobian from the variational equation
/// `M' = DX(x(t)) M`, integrated alongside the point (plane and torus only).
pub fn flow_with_jacobian(path: &HamiltonianPath, x: [f64; 3], ta: f64, tb: f64, tol: f64) -> Result<FlowMapSample, FlowError> {
    let surf = path.surface;
    if surf.is_sphere() {
        return flow_map_sample(path, x, ta, tb, tol);
    }
    let x = surf.project(x);
    let (y, _) = solve(
        |t, y: &[f64; 7]| {
            let p = [y[0], y[1], y[2]];
            let v = path.field(&p, t)?;
            let a = field_linearization(path, &p, t)?;
            Ok([
                v[0],
                v[1],
                0.0,
                a[0][0] * y[3] + a[0][1] * y[5],
                a[0][0] * y[4] + a[0][1] * y[6],
                a[1][0] * y[3] + a[1][1] * y[5],
                a[1][0] * y[4] + a[1][1] * y[6],
            ])
        },
        [x[0], x[1], x[2], 1.0, 0.0, 0.0, 1.0],
        ta,
        tb,
        &OdeOptions::new(tol),
        |y| {
            let p = surf.project([y[0], y[1], y[2]]);
            [p[0], p[1], p[2], y[3], y[4], y[5], y[6]]
        },
        |_, _| ControlFlow::Continue(()),
    )?;
    Ok(FlowMapSample {
        start: x,
        end: [y[0], y[1], y[2]],
        elapsed: tb - ta,
        jacobian: [[y[3], y[4]], [y[5], y[6]]],
    })
}

/// Derivative of `X_{H_t}` at `p` in the tangent frame of `p`.
pub fn field_linearization(path: &HamiltonianPath, p: &[f64; 3], t: f64) -> Result<[[f64; 2]; 2], FlowError> {
    let hs = path.hamiltonian.hessian(p, t)?;
    let g = path.gradient(p, t)?;
    let surf = path.surface;
    let e = surf.tangent_basis(p);
    let mut a = [[0.0; 2]; 2];
    match surf {
        Surface::Sphere { area } => {
            let c = 4.0 * std::f64::consts::PI / area;
            for j in 0..2 {
                let he = [dot3(hs[0], e[j]), dot3(hs[1], e[j]), dot3(hs[2], e[j])];
                let d1 = cross(he, *p);
                let d2 = cross(g, e[j]);
                let dx = [c * (d1[0] + d2[0]), c * (d1[1] + d2[1]), c * (d1[2] + d2[2])];
                for i in 0..2 {
                    a[i][j] = dot3(e[i], dx);
                }
            }
        }
        _ => {
            let k = surf.total_area().filter(|_| surf.is_torus()).unwrap_or(1.0);
            // X = (H_y, −H_x)/k
            a[0][0] = hs[1][0] / k;
            a[0][1] = hs[1][1] / k;
            a[1][0] = -hs[0][0] / k;
            a[1][1] = -hs[0][1] / k;
        }
    }
    Ok(a)
}

/// Solution `M(t)` of `M' = A(t) M`, `M(t0) = I`, along a fixed point.
#[derive(Clone, Debug, Serialize)]
pub struct LinearizedFlow {
    pub point: [f64; 3],
    pub times: Vec<f64>,
    pub matrices: Vec<[[f64; 2]; 2]>,
    #[serde(skip)]
    path: Option<HamiltonianPath>,
}

/// Fixed-point tolerance on `|X_H|`.
pub const FIXED_TOL: f64 = 1e-10;

/// Linearized flow at a fixed point `p` on `span`, tabulated at `n + 1` times.
pub fn linearized_monodromy(path: &HamiltonianPath, p: [f64; 3], span: (f64, f64), n: usize) -> Result<LinearizedFlow, FlowError> {
    let p = path.surface.project(p);
    for k in 0..=64 {
        let t = span.0 + (span.1 - span.0) * k as f64 / 64.0;
        let speed = norm3(path.field(&p, t)?);
        if speed >= FIXED_TOL {
            return Err(FlowError::NotFixed { t, speed });
        }
    }
    let mut lf = LinearizedFlow {
        point: p,
        times: Vec::with_capacity(n + 1),
        matrices: Vec::with_capacity(n + 1),
        path: Some(path.clone()),
    };
    let mut m = [1.0, 0.0, 0.0, 1.0];
    lf.times.push(span.0);
    lf.matrices.push([[1.0, 0.0], [0.0, 1.0]]);
    for k in 1..=n {
        let ta = span.0 + (span.1 - span.0) * (k - 1) as f64 / n as f64;
        let tb = span.0 + (span.1 - span.0) * k as f64 / n as f64;
        m = lf.advance(m, ta, tb)?;
        lf.times.push(tb);
        lf.matrices.push([[m[0], m[1]], [m[2], m[3]]]);
    }
    Ok(lf)
}

impl LinearizedFlow {
    /// The constant-identity linearization (for `H = 0`).
    pub fn identity(point: [f64; 3], span: (f64, f64), n: usize) -> Self {
        let times: Vec<f64> = (0..=n).map(|k| span.0 + (span.1 - span.0) * k as f64 / n as f64).collect();
        LinearizedFlow {
            point,
            matrices: vec![[[1.0, 0.0], [0.0, 1.0]]; times.len()],
            times,
            path: None,
        }
    }

    fn advance(&self, m: [f64; 4], ta: f64, tb: f64) -> Result<[f64; 4], FlowError> {
        let Some(path) = &self.path else {
            return Ok(m);
        };
        let p = self.point;
        let (y, _) = solve(
            |t, y: &[f64; 4]| {
                let a = field_linearization(path, &p, t)?;
                Ok([
                    a[0][0] * y[0] + a[0][1] * y[2],
                    a[0][0] * y[1] + a[0][1] * y[3],
                    a[1][0] * y[0] + a[1][1] * y[2],
                    a[1][0] * y[1] + a[1][1] * y[3],
                ])
            },
            m,
            ta,
            tb,
            &OdeOptions::new(1e-13),
            |y| y,
            |_, _| ControlFlow::Continue(()),
        )?;
        Ok(y)
    }

    /// `M(t)` recomputed from the nearest tabulated time.
    pub fn at(&self, t: f64) -> Result<[[f64; 2]; 2], FlowError> {
        let k = match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => return Ok(self.matrices[k]),
            Err(k) => k.saturating_sub(1).min(self.times.len() - 1),
        };
        let m0 = self.matrices[k];
        let m = self.advance([m0[0][0], m0[0][1], m0[1][0], m0[1][1]], self.times[k], t)?;
        Ok([[m[0], m[1]], [m[2], m[3]]])
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::Rect;
    use crate::util::halton;
    use std::f64::consts::PI;

    fn plane(src: &str) -> HamiltonianPath {
        HamiltonianPath::parse(Surface::Plane, src, Some(Rect::square(3.0))).unwrap()
    }

    #[test]
    fn variational_jacobian_matches_differences() {
        let h = plane("(1 + 0.5*sin(3*t)) * exp(neg(x^2 + 2*y^2)) * bump(x^2+y^2-4; 4)");
        for i in 1..=5 {
            let x = [halton(i, 2) - 0.5, halton(i, 3) - 0.5, 0.0];
            let v = flow_with_jacobian(&h, x, 0.2, 0.9, 1e-12).unwrap();
            let d = flow_map_sample(&h, x, 0.2, 0.9, 1e-12).unwrap();
            assert!((v.end[0] - d.end[0]).abs() + (v.end[1] - d.end[1]).abs() < 1e-10);
            for r in 0..2 {
                for c in 0..2 {
                    assert!((v.jacobian[r][c] - d.jacobian[r][c]).abs() < 1e-5, "{v:?} {d:?}");
                }
            }
            assert!((v.det() - 1.0).abs() < 1e-10, "{}", v.det());
        }
    }

    #[test]
    fn zero_hamiltonian_is_constant() {
        let tr = integrate_flow(&plane("0"), [0.3, -0.2, 0.0], (0.0, 1.0), 1e-10).unwrap();
        assert!(tr.samples.iter().all(|s| s.state == [0.3, -0.2, 0.0]));
    }

    #[test]
    fn full_rotation_returns() {
        // 2π r²/2 with a cutoff far outside the orbit
        let p = plane("3.141592653589793*(x^2+y^2)*bump(x^2+y^2 - 4; 4)");
        let end = flow_to(&p, [1.0, 0.0, 0.0], 0.0, 1.0, 1e-10).unwrap();
        assert!((end[0] - 1.0).abs() < 1e-6 && end[1].abs() < 1e-6, "{end:?}");
    }

    #[test]
    fn sphere_height_orbits_have_period_one() {
        let s = Surface::Sphere { area: 4.0 };
        let p = HamiltonianPath::parse(s, "2*z", None).unwrap();
        for i in 0..10 {
            let z = 2.0 * halton(i + 1, 2) - 1.0;
            let th = 2.0 * PI * halton(i + 1, 3);
            let r = (1.0f64 - z * z).sqrt();
            let x0 = [r * th.cos(), r * th.sin(), z];
            let end = flow_to(&p, x0, 0.0, 1.0, 1e-10).unwrap();
            assert!(s.distance(&x0, &end) < 1e-6);
        }
    }

    #[test]
    fn group_law_and_reversal() {
        let p = plane("bump((x-0.3)^2+y^2; 1)*(1 + x*y)");
        for i in 0..20 {
            let x0 = [halton(i + 1, 2) - 0.5, halton(i + 1, 3) - 0.5, 0.0];
            let a = flow_to(&p, x0, 0.0, 0.7, 1e-11).unwrap();
            let ab = flow_to(&p, a, 0.0, 0.4, 1e-11).unwrap();
            let direct = flow_to(&p, x0, 0.0, 1.1, 1e-11).unwrap();
            assert!(Surface::Plane.distance(&ab, &direct) < 1e-6);
            let back = flow_to(&p, direct, 1.1, 0.0, 1e-11).unwrap();
            assert!(Surface::Plane.distance(&back, &x0) < 1e-7);
        }
    }

    #[test]
    fn energy_drift_is_small() {
        let p = plane("bump(x^2+y^2; 2)*(x + 2*y^2)");
        let tr = integrate_flow(&p, [0.4, 0.3, 0.0], (0.0, 1.0), 1e-10).unwrap();
        assert!(tr.max_drift.unwrap() < 1e-7);
    }

    #[test]
    fn flow_map_identity_and_area() {
        let p = plane("bump(x^2+y^2; 2)*(x + 2*y^2)");
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [halton(i + 1, 2) - 0.5, halton(i + 1, 3) - 0.5, 0.0]).collect();
        let id = flow_map(&p, 0.0, &pts, 1e-10).unwrap();
        for s in &id {
            assert_eq!(s.start, s.end);
            assert!((s.jacobian[0][0] - 1.0).abs() < 1e-9 && s.jacobian[0][1].abs() < 1e-9);
        }
        for s in flow_map(&p, 1.0, &pts, 1e-11).unwrap() {
            assert!((s.det() - 1.0).abs() < 1e-6, "{}", s.det());
        }
    }

    #[test]
    fn shear_jacobian() {
        let t = Surface::Torus { area: 1.0 };
        let p = HamiltonianPath::parse(t, "(1 - cos(6.283185307179586*x))/2", None).unwrap();
        for x in [0.1, 0.37, 0.8] {
            let s = flow_map_sample(&p, [x, 0.2, 0.0], 0.0, 2.0, 1e-11).unwrap();
            // X = (0, −f'(x)) so the lift is (x, y − t f'(x)) and J = [[1,0],[−t f'',1]]
            let fpp = 2.0 * PI * PI * (2.0 * PI * x).cos();
            assert!((s.jacobian[1][0] + 2.0 * fpp).abs() < 1e-4);
            assert!((s.jacobian[0][0] - 1.0).abs() < 1e-6 && (s.jacobian[1][1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn linearized_rotation() {
        let lam = 3.0;
        let p = plane("1.5*(x^2+y^2)*bump(x^2+y^2 - 1; 1)");
        let lf = linearized_monodromy(&p, [0.0, 0.0, 0.0], (0.0, 1.0), 20).unwrap();
        for (t, m) in lf.times.iter().zip(&lf.matrices) {
            let (c, s) = ((lam * t).cos(), (lam * t).sin());
            // X = (H_y, −H_x) = λ(y, −x): clockwise rotation
            let exact = [[c, s], [-s, c]];
            for i in 0..2 {
                for j in 0..2 {
                    assert!((m[i][j] - exact[i][j]).abs() < 1e-8);
                }
            }
            assert!((m[0][0] * m[1][1] - m[0][1] * m[1][0] - 1.0).abs() < 1e-8);
        }
        let quartic = plane("(1.5*(x^2+y^2) + (x^2+y^2)^2)*bump(x^2+y^2 - 1; 1)");
        let lq = linearized_monodromy(&quartic, [0.0, 0.0, 0.0], (0.0, 1.0), 20).unwrap();
        for (a, b) in lq.matrices.iter().zip(&lf.matrices) {
            assert!((a[0][1] - b[0][1]).abs() < 1e-10);
        }
        assert!(matches!(
            linearized_monodromy(&p, [0.5, 0.0, 0.0], (0.0, 1.0), 4),
            Err(FlowError::NotFixed { .. })
        ));
        let mid = lf.at(0.525).unwrap();
        assert!((mid[0][0] - (lam * 0.525).cos()).abs() < 1e-9);
    }

    #[test]
    fn sphere_pole_linearization() {
        let s = Surface::Sphere { area: 4.0 };
        let p = HamiltonianPath::parse(s, "2*z", None).unwrap();
        let lf = linearized_monodromy(&p, [0.0, 0.0, 1.0], (0.0, 1.0), 8).unwrap();
        let m = lf.matrices[2];
        // rotation by 2π · 0.25
        assert!(m[0][0].abs() < 1e-8 && (m[0][1].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn csv_export() {
        let s = Surface::Sphere { area: 4.0 };
        let p = HamiltonianPath::parse(s, "2*z", None).unwrap();
        let tr = integrate_flow_uniform(&p, [1.0, 0.0, 0.0], (0.0, 1.0), 4, 1e-10).unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,chart,c1,c2,ax,ay,az\n"));
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.contains("cylindrical"));
    }
}
