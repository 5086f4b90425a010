//! Two-dimensional model surfaces: the plane, the flat torus and the round sphere.
//!
//! Every surface carries a fixed area form and the sign convention
//! `ι_{X_H} ω = dH` for Hamiltonian vector fields.
//!
//! Dynamics work on a three-component state: `[x, y, 0]` on the plane,
//! `[x, y, 0]` in the covering plane ℝ² on the torus, and the ambient unit
//! vector on the sphere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, ScalarField};
use crate::hamiltonian::Hamiltonian;
use crate::util::{self, cross, dot3, integrate, integrate2, Quad};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("lift is ambiguous between samples {index} and {next}", next = index + 1)]
    AmbiguousLift { index: usize },
    #[error("operation requires a {0} surface")]
    WrongSurface(&'static str),
    #[error("point outside chart: {0}")]
    Domain(String),
}

fn default_torus_area() -> f64 {
    1.0
}

fn default_sphere_area() -> f64 {
    4.0 * PI
}

/// A surface with its symplectic (area) form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Surface {
    /// ℝ² with `dx∧dy`.
    Plane,
    /// `ℝ²/ℤ²` with `A dx∧dy`.
    Torus {
        #[serde(default = "default_torus_area")]
        area: f64,
    },
    /// Unit sphere with `(A/4π)` times the outward solid-angle form.
    Sphere {
        #[serde(default = "default_sphere_area")]
        area: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    Plane,
    /// Fundamental domain `[0,1)²`.
    Torus,
    /// Sphere, `(z, θ)` with θ ∈ [0, 2π).
    Cylindrical,
    /// Sphere, orthographic `(x, y)` on `z > 0`.
    NorthCap,
    /// Sphere, orthographic `(x, y)` on `z < 0`.
    SouthCap,
}

/// A point in a chart; sphere points also cache the ambient unit vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub chart: Chart,
    pub coords: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambient: Option<[f64; 3]>,
}

/// Tangent vector in state components (`[vx, vy, 0]`, or ambient on the sphere).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TangentVector {
    pub base: SurfacePoint,
    pub components: [f64; 3],
}

/// Axis-aligned box in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Rect { lo, hi }
    }

    pub fn square(half: f64) -> Self {
        Rect::new([-half, -half], [half, half])
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.lo[i] && p[i] <= self.hi[i])
    }

    pub fn grow(&self, frac: f64) -> Rect {
        let w = [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]];
        Rect::new(
            [self.lo[0] - frac * w[0], self.lo[1] - frac * w[1]],
            [self.hi[0] + frac * w[0], self.hi[1] + frac * w[1]],
        )
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    /// Point at fractional coordinates `(a, b)` in `[0,1]²`.
    pub fn at(&self, a: f64, b: f64) -> [f64; 2] {
        [
            self.lo[0] + a * (self.hi[0] - self.lo[0]),
            self.lo[1] + b * (self.hi[1] - self.lo[1]),
        ]
    }
}

/// Value and absolute error estimate of an area integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AreaIntegral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl From<Quad> for AreaIntegral {
    fn from(q: Quad) -> Self {
        AreaIntegral {
            value: q.value,
            error: q.error,
            converged: q.converged,
        }
    }
}

impl Surface {
    pub fn name(&self) -> &'static str {
        match self {
            Surface::Plane => "plane",
            Surface::Torus { .. } => "torus",
            Surface::Sphere { .. } => "sphere",
        }
    }

    /// Declared total area; `None` for the plane.
    pub fn total_area(&self) -> Option<f64> {
        match *self {
            Surface::Plane => None,
            Surface::Torus { area } | Surface::Sphere { area } => Some(area),
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Surface::Sphere { .. })
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Surface::Torus { .. })
    }

    /// `ω(u, v)` at state `s` for state-component tangent vectors.
    pub fn omega(&self, s: &[f64; 3], u: &[f64; 3], v: &[f64; 3]) -> f64 {
        match *self {
            Surface::Plane => u[0] * v[1] - u[1] * v[0],
            Surface::Torus { area } => area * (u[0] * v[1] - u[1] * v[0]),
            Surface::Sphere { area } => area / (4.0 * PI) * dot3(*s, cross(*u, *v)),
        }
    }

    /// Hamiltonian vector field from the state-space gradient of `H`.
    pub fn vector_field(&self, s: &[f64; 3], grad: &[f64; 3]) -> [f64; 3] {
        match *self {
            Surface::Plane => [grad[1], -grad[0], 0.0],
            Surface::Torus { area } => [grad[1] / area, -grad[0] / area, 0.0],
            Surface::Sphere { area } => {
                let c = 4.0 * PI / area;
                let w = cross(*grad, *s);
                [c * w[0], c * w[1], c * w[2]]
            }
        }
    }

    /// Map a state back onto the surface (renormalizes on the sphere).
    pub fn project(&self, s: [f64; 3]) -> [f64; 3] {
        match self {
            Surface::Sphere { .. } => {
                let n = util::norm3(s);
                [s[0] / n, s[1] / n, s[2] / n]
            }
            _ => [s[0], s[1], 0.0],
        }
    }

    /// Distance between two states: Euclidean, torus-wrapped, or ambient chord.
    pub fn distance(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        match self {
            Surface::Plane => (a[0] - b[0]).hypot(a[1] - b[1]),
            Surface::Torus { .. } => {
                util::wrap_half(a[0] - b[0]).hypot(util::wrap_half(a[1] - b[1]))
            }
            Surface::Sphere { .. } => util::norm3([a[0] - b[0], a[1] - b[1], a[2] - b[2]]),
        }
    }

    /// Difference `b − a` as a tangent-ish vector (wrapped on the torus).
    pub fn displacement(&self, a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
        match self {
            Surface::Torus { .. } => [util::wrap_half(b[0] - a[0]), util::wrap_half(b[1] - a[1]), 0.0],
            _ => [b[0] - a[0], b[1] - a[1], b[2] - a[2]],
        }
    }

    /// Orthonormal basis of the tangent space at `s` (state components).
    pub fn tangent_basis(&self, s: &[f64; 3]) -> [[f64; 3]; 2] {
        match self {
            Surface::Sphere { .. } => {
                let helper = if s[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
                let e1 = cross(helper, *s);
                let n1 = util::norm3(e1);
                let e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
                let e2 = cross(*s, e1);
                [e1, e2]
            }
            _ => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    /// Chart point for a state. Sphere states use the cylindrical chart for
    /// `|z| ≤ 0.9` and the polar caps otherwise; torus states are reduced to `[0,1)²`.
    pub fn point(&self, s: &[f64; 3]) -> SurfacePoint {
        match self {
            Surface::Plane => SurfacePoint {
                chart: Chart::Plane,
                coords: [s[0], s[1]],
                ambient: None,
            },
            Surface::Torus { .. } => SurfacePoint {
                chart: Chart::Torus,
                coords: [s[0].rem_euclid(1.0), s[1].rem_euclid(1.0)],
                ambient: None,
            },
            Surface::Sphere { .. } => {
                let a = self.project(*s);
                let chart = if a[2].abs() <= 0.9 {
                    Chart::Cylindrical
                } else if a[2] > 0.0 {
                    Chart::NorthCap
                } else {
                    Chart::SouthCap
                };
                SurfacePoint {
                    chart,
                    coords: ambient_to_chart(chart, &a).expect("chart chosen to contain point"),
                    ambient: Some(a),
                }
            }
        }
    }

    /// State vector for a chart point.
    pub fn state(&self, p: &SurfacePoint) -> Result<[f64; 3], SurfaceError> {
        match (self, p.chart) {
            (Surface::Plane, Chart::Plane) | (Surface::Torus { .. }, Chart::Torus) => {
                Ok([p.coords[0], p.coords[1], 0.0])
            }
            (Surface::Sphere { .. }, c) if c != Chart::Plane && c != Chart::Torus => {
                match p.ambient {
                    Some(a) => Ok(a),
                    None => chart_to_ambient(c, p.coords),
                }
            }
            _ => Err(SurfaceError::Domain(format!(
                "{:?} point on a {} surface",
                p.chart,
                self.name()
            ))),
        }
    }

    /// Evaluation point `[x, y, z, t]` for the DSL at state `s`.
    pub fn eval_point(&self, s: &[f64; 3], t: f64) -> [f64; 4] {
        [s[0], s[1], s[2], t]
    }

    /// `X_H` at a chart point for a DSL Hamiltonian at time `time`.
    pub fn hamiltonian_vector_field(
        &self,
        h: &ScalarField,
        p: &SurfacePoint,
        time: f64,
    ) -> Result<TangentVector, SurfaceError> {
        let s = self.state(p)?;
        let g = h.gradient_at(&self.eval_point(&s, time))?;
        Ok(TangentVector {
            base: *p,
            components: self.vector_field(&s, &g),
        })
    }

    /// `∫ f ω` over the surface. On the plane the integrand must vanish outside `bbox`.
    pub fn area_integral<F>(&self, f: F, bbox: Option<Rect>, abs_tol: f64) -> Result<AreaIntegral, SurfaceError>
    where
        F: Fn(&[f64; 3]) -> f64,
    {
        match *self {
            Surface::Plane => {
                let b = bbox.ok_or(SurfaceError::Domain(
                    "plane integrals need a bounding box".into(),
                ))?;
                Ok(integrate2(|x, y| f(&[x, y, 0.0]), (b.lo[0], b.hi[0]), (b.lo[1], b.hi[1]), abs_tol).into())
            }
            Surface::Torus { area } => {
                let q = integrate2(|x, y| f(&[x, y, 0.0]), (0.0, 1.0), (0.0, 1.0), abs_tol / area);
                Ok(AreaIntegral {
                    value: area * q.value,
                    error: area * q.error,
                    converged: q.converged,
                })
            }
            Surface::Sphere { area } => {
                let c = area / (4.0 * PI);
                let q = integrate2(
                    |z, th| {
                        let r = (1.0 - z * z).max(0.0).sqrt();
                        f(&[r * th.cos(), r * th.sin(), z])
                    },
                    (-1.0, 1.0),
                    (0.0, 2.0 * PI),
                    abs_tol / c,
                );
                Ok(AreaIntegral {
                    value: c * q.value,
                    error: c * q.error,
                    converged: q.converged,
                })
            }
        }
    }

    /// `∫ H_t ω` for a DSL field at fixed time.
    pub fn integrate_field(
        &self,
        h: &ScalarField,
        time: f64,
        bbox: Option<Rect>,
        abs_tol: f64,
    ) -> Result<AreaIntegral, SurfaceError> {
        self.integrate_field_dyn(h, time, bbox, abs_tol)
    }

    /// `∫ H_t ω` for any Hamiltonian at fixed time.
    pub fn integrate_field_dyn(
        &self,
        h: &dyn Hamiltonian,
        time: f64,
        bbox: Option<Rect>,
        abs_tol: f64,
    ) -> Result<AreaIntegral, SurfaceError> {
        let bad = std::cell::RefCell::new(None);
        let out = self.area_integral(
            |s| match h.value(s, time) {
                Ok(v) => v,
                Err(e) => {
                    bad.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            bbox,
            abs_tol,
        );
        match bad.into_inner() {
            Some(e) => Err(e.into()),
            None => out,
        }
    }
}

/// Area of a planar region that is star-shaped about `center`, given by a
/// membership predicate; `½∫ r(θ)² dθ` with the boundary radius found by bisection.
///
/// Works for discontinuous indicators where a 2D quadrature would not converge.
pub fn star_region_area<F>(inside: F, center: [f64; 2], r_max: f64, abs_tol: f64) -> AreaIntegral
where
    F: Fn([f64; 2]) -> bool,
{
    let radius = |th: f64| {
        let (s, c) = th.sin_cos();
        let at = |r: f64| inside([center[0] + r * c, center[1] + r * s]);
        if !at(0.0) {
            return 0.0;
        }
        if at(r_max) {
            return r_max;
        }
        let (mut lo, mut hi) = (0.0, r_max);
        while hi - lo > 1e-13 * r_max.max(1.0) {
            let m = 0.5 * (lo + hi);
            if at(m) {
                lo = m;
            } else {
                hi = m;
            }
        }
        0.5 * (lo + hi)
    };
    integrate(|th| 0.5 * radius(th).powi(2), 0.0, 2.0 * PI, abs_tol, 1e-12).into()
}

/// Ambient unit vector for chart coordinates.
pub fn chart_to_ambient(chart: Chart, c: [f64; 2]) -> Result<[f64; 3], SurfaceError> {
    match chart {
        Chart::Cylindrical => {
            let z = c[0];
            if z.abs() >= 1.0 {
                return Err(SurfaceError::Domain(format!("z = {z} at a pole")));
            }
            let r = (1.0 - z * z).sqrt();
            Ok([r * c[1].cos(), r * c[1].sin(), z])
        }
        Chart::NorthCap | Chart::SouthCap => {
            let q = c[0] * c[0] + c[1] * c[1];
            if q >= 1.0 {
                return Err(SurfaceError::Domain("outside polar cap".into()));
            }
            let z = (1.0 - q).sqrt();
            Ok([c[0], c[1], if chart == Chart::NorthCap { z } else { -z }])
        }
        _ => Err(SurfaceError::WrongSurface("sphere")),
    }
}

/// Chart coordinates of an ambient unit vector.
pub fn ambient_to_chart(chart: Chart, a: &[f64; 3]) -> Result<[f64; 2], SurfaceError> {
    match chart {
        Chart::Cylindrical => Ok([a[2], a[1].atan2(a[0]).rem_euclid(2.0 * PI)]),
        Chart::NorthCap if a[2] > 0.0 => Ok([a[0], a[1]]),
        Chart::SouthCap if a[2] < 0.0 => Ok([a[0], a[1]]),
        _ => Err(SurfaceError::Domain(format!("{a:?} not in {chart:?}"))),
    }
}

/// Coefficient `w` with `ω = w dc₁∧dc₂` in a sphere chart (unit total area 4π scale).
///
/// Cylindrical: `dθ∧dz` is the outward orientation, so `dz∧dθ` carries `−1`.
/// Caps: `dx∧dy / z`.
pub fn sphere_chart_density(chart: Chart, c: [f64; 2], area: f64) -> Result<f64, SurfaceError> {
    let k = area / (4.0 * PI);
    match chart {
        Chart::Cylindrical => Ok(-k),
        Chart::NorthCap | Chart::SouthCap => {
            let a = chart_to_ambient(chart, c)?;
            Ok(k / a[2])
        }
        _ => Err(SurfaceError::WrongSurface("sphere")),
    }
}

/// Continuous lift to ℝ² of a sampled torus path (coordinates in `[0,1)²`).
///
/// The first sample is lifted to the representative nearest `anchor`.
pub fn lift_to_cover(samples: &[[f64; 2]], anchor: [f64; 2]) -> Result<Vec<[f64; 2]>, SurfaceError> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = anchor;
    let mut prev_raw = None::<[f64; 2]>;
    for (i, s) in samples.iter().enumerate() {
        let base = match prev_raw {
            None => [s[0] - anchor[0], s[1] - anchor[1]],
            Some(r) => [s[0] - r[0], s[1] - r[1]],
        };
        let d = [util::wrap_half(base[0]), util::wrap_half(base[1])];
        if d[0].abs() > LIFT_JUMP || d[1].abs() > LIFT_JUMP {
            return Err(SurfaceError::AmbiguousLift { index: i.saturating_sub(1) });
        }
        let next = [prev[0] + d[0], prev[1] + d[1]];
        out.push(next);
        prev = next;
        prev_raw = Some(*s);
    }
    Ok(out)
}

/// Largest wrapped step accepted between consecutive lift samples.
pub const LIFT_JUMP: f64 = 0.4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::halton;

    fn pt(i: usize) -> [f64; 3] {
        let z = 2.0 * halton(i + 1, 2) - 1.0;
        let th = 2.0 * PI * halton(i + 1, 3);
        let r = (1.0 - z * z).sqrt();
        [r * th.cos(), r * th.sin(), z]
    }

    #[test]
    fn rotation_field_on_plane() {
        let h = ScalarField::parse("(x^2+y^2)/2").unwrap();
        let p = Surface::Plane.point(&[1.0, 0.0, 0.0]);
        let v = Surface::Plane.hamiltonian_vector_field(&h, &p, 0.0).unwrap();
        assert_eq!(v.components, [0.0, -1.0, 0.0]);
    }

    #[test]
    fn critical_point_gives_zero_field() {
        let h = ScalarField::parse("bump(x^2+y^2; 1)").unwrap();
        let p = Surface::Plane.point(&[0.0, 0.0, 0.0]);
        let v = Surface::Plane.hamiltonian_vector_field(&h, &p, 0.0).unwrap();
        assert_eq!(v.components, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn height_function_rotates_sphere_at_two_pi() {
        let a = 4.0;
        let s = Surface::Sphere { area: a };
        let f = ScalarField::parse("2*z").unwrap();
        for i in 0..20 {
            let q = pt(i);
            let v = s.hamiltonian_vector_field(&f, &s.point(&q), 0.0).unwrap().components;
            // angular speed about the z axis
            let rho2 = q[0] * q[0] + q[1] * q[1];
            let omega = (q[0] * v[1] - q[1] * v[0]) / rho2;
            assert!((omega.abs() - 2.0 * PI).abs() < 1e-12);
            assert!(v[2].abs() < 1e-15);
        }
    }

    #[test]
    fn contraction_identity_holds_on_all_surfaces() {
        let fields = [
            ScalarField::parse("sin(3*x)*cos(y) + x*y*z").unwrap(),
            ScalarField::parse("bump(x^2+y^2; 2)*(1+z)").unwrap(),
        ];
        let surfaces = [Surface::Plane, Surface::Torus { area: 2.5 }, Surface::Sphere { area: 4.0 }];
        let mut worst = 0.0f64;
        for (k, s) in surfaces.iter().enumerate() {
            for i in 0..334 {
                let st = if s.is_sphere() { pt(i) } else { [halton(i + 1, 2), halton(i + 1, 3), 0.0] };
                let h = &fields[(i + k) % 2];
                let g = h.gradient_at(&s.eval_point(&st, 0.0)).unwrap();
                let x = s.vector_field(&st, &g);
                assert!(dot3(g, x).abs() < 1e-12);
                for e in s.tangent_basis(&st) {
                    let lhs = s.omega(&st, &x, &e);
                    worst = worst.max((lhs - dot3(g, e)).abs());
                }
            }
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn sphere_charts_agree_on_overlaps() {
        let area = 4.0;
        for i in 0..200 {
            let mut a = pt(i);
            // push into the overlap band 0.8 < |z| < 0.95
            let z = 0.8 + 0.15 * halton(i + 1, 5);
            let z = if a[2] < 0.0 { -z } else { z };
            let r = (1.0 - z * z).sqrt() / (1.0 - a[2] * a[2]).sqrt();
            a = [a[0] * r, a[1] * r, z];
            let cap = if z > 0.0 { Chart::NorthCap } else { Chart::SouthCap };
            let cy = ambient_to_chart(Chart::Cylindrical, &a).unwrap();
            let cc = ambient_to_chart(cap, &a).unwrap();
            // Jacobian of cylindrical -> cap by central differences
            let h = 1e-6;
            let m = |dz: f64, dth: f64| {
                let q = chart_to_ambient(Chart::Cylindrical, [cy[0] + dz, cy[1] + dth]).unwrap();
                ambient_to_chart(cap, &q).unwrap()
            };
            let (p1, m1, p2, m2) = (m(h, 0.0), m(-h, 0.0), m(0.0, h), m(0.0, -h));
            let j = [
                [(p1[0] - m1[0]) / (2.0 * h), (p2[0] - m2[0]) / (2.0 * h)],
                [(p1[1] - m1[1]) / (2.0 * h), (p2[1] - m2[1]) / (2.0 * h)],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let pulled = sphere_chart_density(cap, cc, area).unwrap() * det;
            let direct = sphere_chart_density(Chart::Cylindrical, cy, area).unwrap();
            assert!((pulled - direct).abs() < 1e-8, "{pulled} {direct}");
        }
    }

    #[test]
    fn total_areas() {
        for s in [Surface::Torus { area: 1.0 }, Surface::Torus { area: 3.0 }, Surface::Sphere { area: 4.0 }] {
            let q = s.area_integral(|_| 1.0, None, 1e-12).unwrap();
            assert!((q.value - s.total_area().unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn unit_square_indicator() {
        let q = Surface::Plane
            .area_integral(
                |p| if (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]) { 1.0 } else { 0.0 },
                Some(Rect::new([0.0, 0.0], [1.0, 1.0])),
                1e-10,
            )
            .unwrap();
        assert!((q.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plateau_measure_is_disc_area() {
        let r0: f64 = 0.8;
        let h = ScalarField::parse("bump(x^2+y^2 - 0.64; 0.3)").unwrap();
        let q = star_region_area(
            |p| {
                // the plateau is the critical set at the top level; the value
                // alone rounds to 1 slightly outside it
                let q = [p[0], p[1], 0.0, 0.0];
                let g = h.gradient_at(&q).unwrap();
                h.eval_at(&q).unwrap() >= 1.0 && g[0] == 0.0 && g[1] == 0.0
            },
            [0.0, 0.0],
            3.0,
            1e-12,
        );
        assert!((q.value - PI * r0 * r0).abs() < 1e-6, "{q:?}");
    }

    #[test]
    fn additive_over_disjoint_pieces() {
        let s = Surface::Plane;
        let bb = Some(Rect::new([-2.0, -2.0], [2.0, 2.0]));
        let g = |p: &[f64; 3]| (-(p[0] * p[0] + p[1] * p[1])).exp();
        let left = s.area_integral(|p| if p[0] < 0.0 { g(p) } else { 0.0 }, bb, 1e-10).unwrap();
        let right = s.area_integral(|p| if p[0] >= 0.0 { g(p) } else { 0.0 }, bb, 1e-10).unwrap();
        let all = s.area_integral(g, bb, 1e-10).unwrap();
        assert!((left.value + right.value - all.value).abs() < 1e-8);
    }

    #[test]
    fn lifts() {
        let l = lift_to_cover(&[[0.3, 0.3], [0.3, 0.3]], [0.3, 0.3]).unwrap();
        assert_eq!(l, vec![[0.3, 0.3], [0.3, 0.3]]);
        let path: Vec<[f64; 2]> = (0..=20).map(|k| [(0.9 + 0.01 * k as f64).rem_euclid(1.0), 0.5]).collect();
        let l = lift_to_cover(&path, [0.9, 0.5]).unwrap();
        assert!((l[20][0] - 1.1).abs() < 1e-12);
        assert!(matches!(
            lift_to_cover(&[[0.0, 0.0], [0.45, 0.0]], [0.0, 0.0]),
            Err(SurfaceError::AmbiguousLift { index: 0 })
        ));
    }

    #[test]
    fn descriptors_parse() {
        let s: Surface = serde_json::from_str(r#"{"kind":"sphere","area":4.0}"#).unwrap();
        assert_eq!(s, Surface::Sphere { area: 4.0 });
        let t: Surface = serde_json::from_str(r#"{"kind":"torus","area":1.0}"#).unwrap();
        assert_eq!(t, Surface::Torus { area: 1.0 });
        let p: Surface = serde_json::from_str(r#"{"kind":"plane"}"#).unwrap();
        assert_eq!(p, Surface::Plane);
    }
}
