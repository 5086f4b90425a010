//! Generating functions near the identity and the flatness identities.
//!
//! The midpoint chart sends `(z, w) ∈ M × M` to the covector `(P − p, q − Q)`
//! at `b = (z + w)/2`. The isotopy of `t·dF` is therefore
//! `w = z + t X_{−F}(b)`, solved for `w` by Newton iteration.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::ExprError;
use crate::hamiltonian::{Hamiltonian, HamiltonianPath, PathError, Support};
use crate::hofer::{checked_extrema, HoferError, SearchConfig};
use crate::surface::{Rect, Surface};
use crate::util::{fixed_panels, halton, integrate_batched};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlatnessError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Hofer(#[from] HoferError),
    #[error("Newton iteration for the isotopy diverged at {at:?}, t = {t}")]
    NewtonDiverged { at: [f64; 2], t: f64 },
    #[error("arc endpoint {point:?} moves by {displacement:e}")]
    EndpointNotFixed { point: [f64; 2], displacement: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("generating function has no nondegenerate extrema")]
    NoCriticalPoints,
}

pub const NEWTON_TOL: f64 = 1e-11;
const NEWTON_MAX: usize = 60;
/// GK15 panels for swept-area and time integrals.
const PANELS: usize = 4;
/// Line integrals of `dH_t`, relative to the `C²` size of `F`.
const LINE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Min,
    Max,
    Saddle,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub at: [f64; 2],
    pub value: f64,
    pub kind: CriticalKind,
}

/// The midpoint chart as a linear map `(q, p, Q, P) ↦ (b₁, b₂, ξ₁, ξ₂)`.
pub fn midpoint_chart() -> [[f64; 4]; 4] {
    [
        [0.5, 0.0, 0.5, 0.0],
        [0.0, 0.5, 0.0, 0.5],
        [0.0, -1.0, 0.0, 1.0],
        [1.0, 0.0, -1.0, 0.0],
    ]
}

/// `max |L*(db∧dξ) − (−ω ⊕ ω)|` for the midpoint chart.
pub fn chart_symplecticity_residual() -> f64 {
    let l = midpoint_chart();
    // db₁∧dξ₁ + db₂∧dξ₂ in coordinates (b₁, b₂, ξ₁, ξ₂)
    let mut can = [[0.0; 4]; 4];
    can[0][2] = 1.0;
    can[2][0] = -1.0;
    can[1][3] = 1.0;
    can[3][1] = -1.0;
    let mut target = [[0.0; 4]; 4];
    target[0][1] = -1.0;
    target[1][0] = 1.0;
    target[2][3] = 1.0;
    target[3][2] = -1.0;
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let mut v = 0.0;
            for k in 0..4 {
                for m in 0..4 {
                    v += l[k][i] * can[k][m] * l[m][j];
                }
            }
            worst = worst.max((v - target[i][j]).abs());
        }
    }
    worst
}

/// `F` with its nondegenerate critical points.
#[derive(Clone, Debug)]
pub struct GeneratingFunction {
    pub f: HamiltonianPath,
    pub critical: Vec<CriticalPoint>,
    /// Largest `|F|`, `|∇F|` or Hessian entry over sample points.
    pub c2_norm: f64,
    pub argmax: [f64; 2],
    pub argmin: [f64; 2],
    pub max: f64,
    pub min: f64,
}

fn search_box(path: &HamiltonianPath) -> Rect {
    path.support_rect().unwrap_or(Rect::new([0.0, 0.0], [1.0, 1.0]))
}

impl GeneratingFunction {
    pub fn parse(surface: Surface, src: &str, support: Option<Rect>) -> Result<Self, FlatnessError> {
        let f = HamiltonianPath::parse(surface, src, support)?;
        Self::new(f)
    }

    pub fn new(f: HamiltonianPath) -> Result<Self, FlatnessError> {
        if f.surface.is_sphere() {
            return Err(FlatnessError::Unsupported("the midpoint chart needs flat coordinates".into()));
        }
        if !f.is_autonomous() {
            return Err(FlatnessError::Unsupported("generating functions are autonomous".into()));
        }
        let b = search_box(&f);
        let mut c2 = 0.0f64;
        for i in 1..=400 {
            let p = b.at(halton(i, 2), halton(i, 3));
            let s = [p[0], p[1], 0.0];
            let g = f.gradient(&s, 0.0)?;
            let h = f.hamiltonian.hessian(&s, 0.0)?;
            c2 = c2
                .max(f.value(&s, 0.0)?.abs())
                .max(g[0].abs().max(g[1].abs()))
                .max(h[0][0].abs().max(h[0][1].abs()).max(h[1][1].abs()));
        }
        let starts: Vec<[f64; 2]> = (1..=256).map(|i| b.at(halton(i, 2), halton(i, 3))).collect();
        let found: Vec<Option<CriticalPoint>> = starts
            .par_iter()
            .map(|p| critical_newton(&f, *p, c2).ok().flatten())
            .collect();
        let mut critical: Vec<CriticalPoint> = Vec::new();
        for c in found.into_iter().flatten() {
            let s = [c.at[0], c.at[1], 0.0];
            if !critical.iter().any(|d| f.surface.distance(&[d.at[0], d.at[1], 0.0], &s) < 1e-6) {
                critical.push(c);
            }
        }
        critical.sort_by(|a, b| a.at.partial_cmp(&b.at).unwrap());
        let e = checked_extrema(&f, 0.0, &SearchConfig::default())?;
        Ok(GeneratingFunction {
            critical,
            c2_norm: c2,
            argmax: [e.argmax[0], e.argmax[1]],
            argmin: [e.argmin[0], e.argmin[1]],
            max: e.max,
            min: e.min,
            f,
        })
    }

    fn area_scale(&self) -> f64 {
        match self.f.surface {
            Surface::Torus { area } => area,
            _ => 1.0,
        }
    }

    /// `V = X_{−F}(b)` and its Jacobian.
    fn v_and_dv(&self, b: [f64; 2]) -> Result<(Vector2<f64>, Matrix2<f64>), ExprError> {
        let s = [b[0], b[1], 0.0];
        let a = self.area_scale();
        let g = self.f.gradient(&s, 0.0)?;
        let h = self.f.hamiltonian.hessian(&s, 0.0)?;
        let v = Vector2::new(-g[1], g[0]) / a;
        let dv = Matrix2::new(-h[1][0], -h[1][1], h[0][0], h[0][1]) / a;
        Ok((v, dv))
    }

    /// Solves `b + sign·(t/2) V(b) = target` for the midpoint `b`.
    fn midpoint(&self, target: [f64; 2], t: f64, sign: f64) -> Result<[f64; 2], FlatnessError> {
        let goal = Vector2::new(target[0], target[1]);
        let mut b = goal;
        for _ in 0..NEWTON_MAX {
            let (v, dv) = self.v_and_dv([b[0], b[1]])?;
            let g = b + sign * 0.5 * t * v - goal;
            let j = Matrix2::identity() + sign * 0.5 * t * dv;
            let step = j.lu().solve(&g).ok_or(FlatnessError::NewtonDiverged { at: target, t })?;
            b -= step;
            if !b.iter().all(|c| c.is_finite()) {
                break;
            }
            if step.norm() < NEWTON_TOL {
                return Ok([b[0], b[1]]);
            }
        }
        Err(FlatnessError::NewtonDiverged { at: target, t })
    }

    /// `ψ_t(z)`.
    pub fn psi(&self, z: [f64; 2], t: f64) -> Result<[f64; 2], FlatnessError> {
        let b = self.midpoint(z, t, -1.0)?;
        Ok([2.0 * b[0] - z[0], 2.0 * b[1] - z[1]])
    }

    /// `ψ_t⁻¹(w)`.
    pub fn psi_inverse(&self, w: [f64; 2], t: f64) -> Result<[f64; 2], FlatnessError> {
        let b = self.midpoint(w, t, 1.0)?;
        Ok([2.0 * b[0] - w[0], 2.0 * b[1] - w[1]])
    }

    /// `Dψ_t(z) = (I − M)⁻¹(I + M)` with `M = (t/2) DV(b)`.
    pub fn psi_jacobian(&self, z: [f64; 2], t: f64) -> Result<[[f64; 2]; 2], FlatnessError> {
        let b = self.midpoint(z, t, -1.0)?;
        let (_, dv) = self.v_and_dv(b)?;
        let m = 0.5 * t * dv;
        let j = (Matrix2::identity() - m)
            .try_inverse()
            .ok_or(FlatnessError::NewtonDiverged { at: z, t })?
            * (Matrix2::identity() + m);
        Ok([[j[(0, 0)], j[(0, 1)]], [j[(1, 0)], j[(1, 1)]]])
    }

    /// `∂_t ψ_t` at the image point `w`: `(I − (t/2) DV(b)) ẇ = V(b)`.
    pub fn velocity_at_image(&self, w: [f64; 2], t: f64) -> Result<[f64; 2], FlatnessError> {
        let b = self.midpoint(w, t, 1.0)?;
        self.velocity_from_midpoint(b, t, w)
    }

    fn velocity_from_midpoint(&self, b: [f64; 2], t: f64, at: [f64; 2]) -> Result<[f64; 2], FlatnessError> {
        let (v, dv) = self.v_and_dv(b)?;
        let x = (Matrix2::identity() - 0.5 * t * dv)
            .lu()
            .solve(&v)
            .ok_or(FlatnessError::NewtonDiverged { at, t })?;
        Ok([x[0], x[1]])
    }

    /// Midpoint of the pair `(ψ_t⁻¹(w), w)`.
    pub fn midpoint_of_image(&self, w: [f64; 2], t: f64) -> Result<[f64; 2], FlatnessError> {
        self.midpoint(w, t, 1.0)
    }
}

fn critical_newton(f: &HamiltonianPath, start: [f64; 2], scale: f64) -> Result<Option<CriticalPoint>, ExprError> {
    let mut p = start;
    let tol = 1e-12 * scale.max(1e-300);
    for _ in 0..50 {
        let s = [p[0], p[1], 0.0];
        let g = f.gradient(&s, 0.0)?;
        let h = f.hamiltonian.hessian(&s, 0.0)?;
        let hm = Matrix2::new(h[0][0], h[0][1], h[1][0], h[1][1]);
        let det = hm.determinant();
        if det.abs() < 1e-8 * scale * scale {
            return Ok(None);
        }
        if g[0].abs().max(g[1].abs()) < tol {
            let kind = if det < 0.0 {
                CriticalKind::Saddle
            } else if h[0][0] > 0.0 {
                CriticalKind::Min
            } else {
                CriticalKind::Max
            };
            let at = match f.surface {
                Surface::Torus { .. } => [p[0].rem_euclid(1.0), p[1].rem_euclid(1.0)],
                _ => p,
            };
            return Ok(Some(CriticalPoint {
                at,
                value: f.value(&s, 0.0)?,
                kind,
            }));
        }
        let step = hm.lu().solve(&Vector2::new(g[0], g[1])).unwrap_or_else(Vector2::zeros);
        p = [p[0] - step[0], p[1] - step[1]];
        if !p.iter().all(|c| c.is_finite()) {
            return Ok(None);
        }
    }
    Ok(None)
}

/// `H_t` recovered from the isotopy: `dH_t = ι_{∂_tψ∘ψ⁻¹} ω`, integrated along a
/// segment from a base point where `H_t` is known.
pub struct IsotopyHamiltonian {
    gen: Arc<GeneratingFunction>,
    base: [f64; 2],
    base_value: f64,
}

impl IsotopyHamiltonian {
    fn grad(&self, w: [f64; 2], t: f64) -> Result<[f64; 2], FlatnessError> {
        let x = self.gen.velocity_at_image(w, t)?;
        let a = self.gen.area_scale();
        Ok([-a * x[1], a * x[0]])
    }

    /// Integrates `dH_t` along the image of a segment of midpoints: `w = W(b) =
    /// b + (t/2) V(b)` is explicit in `b`, so only the endpoint needs a Newton solve.
    fn line_value(&self, w: [f64; 2], t: f64) -> Result<f64, FlatnessError> {
        let gen = &self.gen;
        let surf = gen.f.surface;
        let (b0, base_value) = match gen.f.support {
            Support::Rect(r) => {
                if !r.contains(w) {
                    // ψ_t is the identity off the support of F
                    return Ok(0.0);
                }
                ([r.lo[0], w[1]], 0.0)
            }
            Support::Whole => (self.base, self.base_value),
        };
        let b = gen.midpoint(w, t, 1.0)?;
        let d = match surf {
            Surface::Torus { .. } => {
                let s = surf.displacement(&[b0[0], b0[1], 0.0], &[b[0], b[1], 0.0]);
                [s[0], s[1]]
            }
            _ => [b[0] - b0[0], b[1] - b0[1]],
        };
        let a = gen.area_scale();
        let step = Vector2::new(d[0], d[1]);
        let integrand = |s: f64| -> Result<f64, FlatnessError> {
            let p = [b0[0] + s * d[0], b0[1] + s * d[1]];
            let (v, dv) = gen.v_and_dv(p)?;
            let m = 0.5 * t * dv;
            let vel = (Matrix2::identity() - m)
                .lu()
                .solve(&v)
                .ok_or(FlatnessError::NewtonDiverged { at: w, t })?;
            let dw = (Matrix2::identity() + m) * step;
            Ok(a * (vel[0] * dw[1] - vel[1] * dw[0]))
        };
        let q = integrate_batched(
            |ss| ss.iter().map(|&s| integrand(s)).collect::<Result<Vec<f64>, FlatnessError>>(),
            0.0,
            1.0,
            LINE_TOL * gen.c2_norm,
            400,
        )?;
        Ok(base_value + q.value)
    }
}

fn to_expr(e: FlatnessError) -> ExprError {
    match e {
        FlatnessError::Expr(e) => e,
        other => ExprError::Domain(other.to_string()),
    }
}

impl Hamiltonian for IsotopyHamiltonian {
    fn value(&self, s: &[f64; 3], t: f64) -> Result<f64, ExprError> {
        self.line_value([s[0], s[1]], t).map_err(to_expr)
    }

    fn gradient(&self, s: &[f64; 3], t: f64) -> Result<[f64; 3], ExprError> {
        let g = self.grad([s[0], s[1]], t).map_err(to_expr)?;
        Ok([g[0], g[1], 0.0])
    }

    fn is_autonomous(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        format!("isotopy of t·d({})", self.gen.f.label)
    }
}

/// The isotopy `ψ_t` of the forms `t·dF` as a Hamiltonian path.
///
/// On the plane `H_t` vanishes outside the support of `F`; on the torus it is
/// normalized by `inf H_t = 0`, taken at the fixed point `argmax F`.
pub fn isotopy_from_generating(gen: &Arc<GeneratingFunction>) -> Result<HamiltonianPath, FlatnessError> {
    let (base, support) = match gen.f.support {
        Support::Rect(r) => (r.grow(0.05).lo, Some(r)),
        Support::Whole => (gen.argmax, None),
    };
    // the Newton solve must converge on the whole support at t = 1
    let b = search_box(&gen.f);
    for i in 1..=64 {
        let p = b.at(halton(i, 2), halton(i, 3));
        gen.psi(p, 1.0)?;
    }
    let h = IsotopyHamiltonian {
        gen: gen.clone(),
        base,
        base_value: 0.0,
    };
    let label = h.describe();
    let mut path = HamiltonianPath::new(gen.f.surface, Arc::new(h), support, label)?;
    path.normalized = support.is_none();
    Ok(path)
}

/// Straight arc from `q1` to `q2` bowed sideways by `bow·|q2 − q1|`.
pub fn bowed_arc(q1: [f64; 2], q2: [f64; 2], bow: f64) -> impl Fn(f64) -> ([f64; 2], [f64; 2]) {
    let d = [q2[0] - q1[0], q2[1] - q1[1]];
    let n = [-d[1] * bow, d[0] * bow];
    move |s| {
        let k = s * (1.0 - s);
        let dk = 1.0 - 2.0 * s;
        (
            [q1[0] + s * d[0] + 4.0 * k * n[0], q1[1] + s * d[1] + 4.0 * k * n[1]],
            [d[0] + 4.0 * dk * n[0], d[1] + 4.0 * dk * n[1]],
        )
    }
}

/// `∫∫ Ψ*ω` with `Ψ(s, t) = ψ_t(β(s))`; `arc` returns `(β(s), β'(s))`.
pub fn swept_area<A>(gen: &GeneratingFunction, arc: A) -> Result<f64, FlatnessError>
where
    A: Fn(f64) -> ([f64; 2], [f64; 2]) + Sync,
{
    let surf = gen.f.surface;
    for s in [0.0, 1.0] {
        let q = arc(s).0;
        let w = gen.psi(q, 1.0)?;
        let d = surf.distance(&[q[0], q[1], 0.0], &[w[0], w[1], 0.0]);
        if d > 1e-9 {
            return Err(FlatnessError::EndpointNotFixed { point: q, displacement: d });
        }
    }
    let a = gen.area_scale();
    let ss = fixed_panels(0.0, 1.0, PANELS);
    let ts = fixed_panels(0.0, 1.0, PANELS);
    let rows: Result<Vec<f64>, FlatnessError> = ss
        .par_iter()
        .map(|&(s, ws)| {
            let (z, dz) = arc(s);
            let mut row = 0.0;
            for &(t, wt) in &ts {
                let b = gen.midpoint(z, t, -1.0)?;
                let w = [2.0 * b[0] - z[0], 2.0 * b[1] - z[1]];
                let vel = gen.velocity_from_midpoint(b, t, w)?;
                let j = gen.psi_jacobian(z, t)?;
                let ds = [j[0][0] * dz[0] + j[0][1] * dz[1], j[1][0] * dz[0] + j[1][1] * dz[1]];
                row += wt * a * (ds[0] * vel[1] - ds[1] * vel[0]);
            }
            Ok(ws * row)
        })
        .collect();
    Ok(rows?.iter().sum())
}

/// `area_{t∈[0,1]}{q₁, q₂} = ∫ (H_t(q₂) − H_t(q₁)) dt`, so that
/// `F(q₂) − F(q₁) = −area`.
pub fn time_curve_area(path: &HamiltonianPath, q1: [f64; 2], q2: [f64; 2]) -> Result<f64, FlatnessError> {
    let mut total = 0.0;
    for (t, w) in fixed_panels(0.0, 1.0, PANELS) {
        total += w * (path.value(&[q2[0], q2[1], 0.0], t)? - path.value(&[q1[0], q1[1], 0.0], t)?);
    }
    Ok(total)
}

/// Global extrema of a recovered `H_t`. `None` locations stand for the
/// exterior of the support, where `H_t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveredExtrema {
    pub t: f64,
    pub max: f64,
    pub argmax: Option<[f64; 2]>,
    pub min: f64,
    pub argmin: Option<[f64; 2]>,
    pub critical_points: usize,
}

const CRITICAL_STARTS: usize = 48;

/// Extrema of `H_t` over its critical points, found by Newton iteration on the
/// recovered gradient; values are taken only at the distinct critical points.
pub fn recovered_extrema(gen: &GeneratingFunction, path: &HamiltonianPath, t: f64) -> Result<RecoveredExtrema, FlatnessError> {
    let b = search_box(&gen.f);
    let surf = gen.f.surface;
    let gscale = gen.c2_norm.max(1e-300);
    let found: Result<Vec<Option<[f64; 2]>>, FlatnessError> = (1..=CRITICAL_STARTS)
        .into_par_iter()
        .map(|i| {
            let mut p = b.at(halton(i, 2), halton(i, 3));
            for _ in 0..40 {
                let s = [p[0], p[1], 0.0];
                let g = path.gradient(&s, t)?;
                if g[0].abs().max(g[1].abs()) < 1e-11 * gscale {
                    let h = path.hamiltonian.hessian(&s, t)?;
                    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
                    // flat exterior points are covered by the value 0
                    return Ok((det.abs() > 1e-8 * gscale * gscale).then_some(p));
                }
                let h = path.hamiltonian.hessian(&s, t)?;
                let hm = Matrix2::new(h[0][0], h[0][1], h[1][0], h[1][1]);
                let Some(step) = hm.lu().solve(&Vector2::new(g[0], g[1])) else {
                    return Ok(None);
                };
                let len = step.norm();
                let cap = 0.1 * (b.hi[0] - b.lo[0]);
                let k = if len > cap { cap / len } else { 1.0 };
                p = [p[0] - k * step[0], p[1] - k * step[1]];
                if let Support::Rect(r) = gen.f.support {
                    if !r.contains(p) {
                        return Ok(None);
                    }
                }
            }
            Ok(None)
        })
        .collect();
    let mut points: Vec<[f64; 2]> = Vec::new();
    for p in found?.into_iter().flatten() {
        let p = match surf {
            Surface::Torus { .. } => [p[0].rem_euclid(1.0), p[1].rem_euclid(1.0)],
            _ => p,
        };
        if !points.iter().any(|q| surf.distance(&[q[0], q[1], 0.0], &[p[0], p[1], 0.0]) < 1e-7) {
            points.push(p);
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cands: Vec<(f64, Option<[f64; 2]>)> = Vec::new();
    if matches!(gen.f.support, Support::Rect(_)) {
        cands.push((0.0, None));
    }
    for p in &points {
        cands.push((path.value(&[p[0], p[1], 0.0], t)?, Some(*p)));
    }
    if cands.is_empty() {
        return Err(FlatnessError::NoCriticalPoints);
    }
    let hi = cands.iter().cloned().fold(cands[0], |a, c| if c.0 > a.0 { c } else { a });
    let lo = cands.iter().cloned().fold(cands[0], |a, c| if c.0 < a.0 { c } else { a });
    Ok(RecoveredExtrema {
        t,
        max: hi.0,
        argmax: hi.1,
        min: lo.0,
        argmin: lo.1,
        critical_points: points.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlatnessReport {
    pub label: String,
    pub c2_norm: f64,
    pub oscillation: f64,
    pub length: f64,
    /// `|ℒ(H_t) − (max F − min F)|`.
    pub length_gap: f64,
    pub length_tol: f64,
    pub argmin: [f64; 2],
    pub argmax: [f64; 2],
    /// Largest mismatch, in value or `|∇F|`, between the extrema of `H_t` and
    /// the opposite extrema of `F` over the time nodes.
    pub extremum_drift: f64,
    /// Largest `|ψ_t(q) − q|` at the extrema of `F`.
    pub extremum_motion: f64,
    pub fixed_extrema: bool,
    /// `A(argmin, argmax)` along three arcs.
    pub swept: Vec<f64>,
    pub swept_spread: f64,
    pub time_area: f64,
    /// `|F(q₂) − F(q₁) + area_{t∈[0,1]}{q₁, q₂}|`.
    pub signed_identity_gap: f64,
    /// `|A(q₁, q₂) − (F(q₂) − F(q₁))|`.
    pub swept_identity_gap: f64,
    pub critical_points: Vec<CriticalPoint>,
    pub pass: bool,
}

/// Times at which the extrema of `H_t` are located.
const PROBE_TIMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub fn verify_flatness(gen: &Arc<GeneratingFunction>) -> Result<FlatnessReport, FlatnessError> {
    let osc = gen.max - gen.min;
    let (q1, q2) = (gen.argmin, gen.argmax);
    let surf = gen.f.surface;
    let dist = |a: [f64; 2], b: [f64; 2]| surf.distance(&[a[0], a[1], 0.0], &[b[0], b[1], 0.0]);
    if osc == 0.0 {
        return Ok(FlatnessReport {
            label: gen.f.label.clone(),
            c2_norm: gen.c2_norm,
            oscillation: 0.0,
            length: 0.0,
            length_gap: 0.0,
            length_tol: 0.0,
            argmin: q1,
            argmax: q2,
            extremum_drift: 0.0,
            extremum_motion: 0.0,
            fixed_extrema: true,
            swept: vec![0.0; 3],
            swept_spread: 0.0,
            time_area: 0.0,
            signed_identity_gap: 0.0,
            swept_identity_gap: 0.0,
            critical_points: gen.critical.clone(),
            pass: true,
        });
    }
    let path = isotopy_from_generating(gen)?;
    let tracks: Result<Vec<(f64, RecoveredExtrema)>, FlatnessError> = fixed_panels(0.0, 1.0, 1)
        .into_iter()
        .map(|(t, w)| Ok((w, recovered_extrema(gen, &path, t)?)))
        .collect();
    let tracks = tracks?;
    let length: f64 = tracks.iter().map(|(w, e)| w * (e.max - e.min)).sum();
    // an extremum of H_t must sit on an extremum of F of the opposite kind
    let tol = 1e-9 + 1e-6 * osc;
    let on_level = |at: Option<[f64; 2]>, level: f64| -> Result<f64, FlatnessError> {
        match at {
            None => Ok(if level.abs() <= tol { 0.0 } else { f64::INFINITY }),
            Some(p) => {
                let v = gen.f.value(&[p[0], p[1], 0.0], 0.0)?;
                let g = gen.f.gradient(&[p[0], p[1], 0.0], 0.0)?;
                Ok((v - level).abs().max(g[0].abs().max(g[1].abs())))
            }
        }
    };
    let mut drift = 0.0f64;
    let mut motion = 0.0f64;
    for (_, e) in &tracks {
        drift = drift.max(on_level(e.argmin, gen.max)?).max(on_level(e.argmax, gen.min)?);
    }
    for &t in &PROBE_TIMES {
        for q in [q1, q2] {
            motion = motion.max(dist(gen.psi(q, t)?, q));
        }
    }
    let swept: Result<Vec<f64>, FlatnessError> =
        [0.0, 0.3, -0.3].iter().map(|&bow| swept_area(gen, bowed_arc(q1, q2, bow))).collect();
    let swept = swept?;
    let lo = swept.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = swept.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let time_area = time_curve_area(&path, q1, q2)?;
    let rise = gen.max - gen.min;
    let length_tol = 1e-4 * osc;
    let length_gap = (length - osc).abs();
    let fixed = drift < tol && motion < 1e-9;
    let signed_identity_gap = (rise + time_area).abs();
    let swept_identity_gap = (swept[0] - rise).abs();
    let pass = length_gap < length_tol
        && fixed
        && hi - lo < 1e-7
        && signed_identity_gap < 1e-6
        && swept_identity_gap < 1e-6;
    Ok(FlatnessReport {
        label: gen.f.label.clone(),
        c2_norm: gen.c2_norm,
        oscillation: osc,
        length,
        length_gap,
        length_tol,
        argmin: q1,
        argmax: q2,
        extremum_drift: drift,
        extremum_motion: motion,
        fixed_extrema: fixed,
        swept,
        swept_spread: hi - lo,
        time_area,
        signed_identity_gap,
        swept_identity_gap,
        critical_points: gen.critical.clone(),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(src: &str) -> Arc<GeneratingFunction> {
        Arc::new(GeneratingFunction::parse(Surface::Plane, src, Some(Rect::square(2.0))).unwrap())
    }

    #[test]
    fn chart_is_symplectic() {
        assert!(chart_symplecticity_residual() < 1e-12);
    }

    #[test]
    fn zero_generates_identity() {
        let g = plane("0");
        assert_eq!(g.psi([0.3, -0.2], 1.0).unwrap(), [0.3, -0.2]);
        let r = verify_flatness(&g).unwrap();
        assert!(r.pass && r.length == 0.0);
    }

    #[test]
    fn quadratic_generates_cayley_rotation() {
        let d: f64 = 1e-3;
        let g = plane(&format!("{d} * (x^2 + y^2) * bump(x^2 + y^2 - 1; 1)"));
        // where the cutoff is 1, V(b) = 2d J b and the midpoint rule is the Cayley rotation
        let angle = 2.0 * d.atan();
        let z = [0.4, 0.3];
        let w = g.psi(z, 1.0).unwrap();
        let r = [z[0] * angle.cos() - z[1] * angle.sin(), z[0] * angle.sin() + z[1] * angle.cos()];
        assert!((w[0] - r[0]).abs() < 1e-12 && (w[1] - r[1]).abs() < 1e-12, "{w:?} {r:?}");
        // rotation by 2δ agrees to O(δ³)
        let r2 = [z[0] * (2.0 * d).cos() - z[1] * (2.0 * d).sin(), z[0] * (2.0 * d).sin() + z[1] * (2.0 * d).cos()];
        assert!((w[0] - r2[0]).abs() < 1e-8);
        assert_eq!(g.psi([0.0, 0.0], 1.0).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn isotopy_is_symplectic() {
        let g = plane("0.01 * x * exp(neg(x^2 + y^2)) * bump(x^2 + y^2 - 1.5; 1)^4");
        for i in 1..=100 {
            let z = [4.0 * halton(i, 2) - 2.0, 4.0 * halton(i, 3) - 2.0];
            for t in [0.25, 0.5, 1.0] {
                let j = g.psi_jacobian(z, t).unwrap();
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                assert!((det - 1.0).abs() < 1e-8);
            }
            let w = g.psi(z, 0.7).unwrap();
            let back = g.psi_inverse(w, 0.7).unwrap();
            assert!((back[0] - z[0]).abs() < 1e-10 && (back[1] - z[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn recovered_hamiltonian_matches_hamilton_jacobi() {
        let g = plane("0.01 * x * exp(neg(x^2 + y^2)) * bump(x^2 + y^2 - 1.5; 1)^4");
        let path = isotopy_from_generating(&g).unwrap();
        for i in 1..=30 {
            let b = [3.0 * halton(i, 2) - 1.5, 3.0 * halton(i, 3) - 1.5];
            let t = halton(i, 5);
            // H_t(b + (t/2) X_{−F}(b)) = −F(b) on the plane
            let s = [b[0], b[1], 0.0];
            let gr = g.f.gradient(&s, 0.0).unwrap();
            let w = [b[0] - 0.5 * t * gr[1], b[1] + 0.5 * t * gr[0]];
            let h = path.value(&[w[0], w[1], 0.0], t).unwrap();
            let f = g.f.value(&s, 0.0).unwrap();
            assert!((h + f).abs() < 1e-10, "{h} {f}");
        }
    }

    #[test]
    fn critical_points_are_fixed() {
        let g = plane("0.01 * (x - y^2) * exp(neg(x^2 + y^2)) * bump(x^2 + y^2 - 1.5; 1)^4");
        assert!(g.critical.len() >= 2, "{:?}", g.critical);
        for c in &g.critical {
            let w = g.psi(c.at, 1.0).unwrap();
            assert!((w[0] - c.at[0]).abs() < 1e-7 && (w[1] - c.at[1]).abs() < 1e-7);
        }
        let w = g.psi([0.3, 0.3], 1.0).unwrap();
        assert!((w[0] - 0.3).abs() + (w[1] - 0.3).abs() > 1e-5);
    }

    #[test]
    fn swept_area_needs_fixed_endpoints() {
        let g = plane("0.01 * x * exp(neg(x^2 + y^2)) * bump(x^2 + y^2 - 1.5; 1)^4");
        assert!(matches!(
            swept_area(&g, bowed_arc([0.1, 0.2], g.argmax, 0.0)),
            Err(FlatnessError::EndpointNotFixed { .. })
        ));
    }

    #[test]
    fn two_delta_family_is_flat() {
        // x e^{−x²} peaks at e^{−1/2}/√2
        let d: f64 = 1e-2;
        let c = d * 2f64.sqrt() * 0.5f64.exp();
        let g = plane(&format!("{c} * x * exp(neg(x^2 + y^2)) * bump(x^2 + y^2 - 1.5; 1)^4"));
        assert!((g.max - d).abs() < 1e-12 && (g.min + d).abs() < 1e-12);
        let r = verify_flatness(&g).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.length - 2.0 * d).abs() < 1e-4 * d);
    }

    #[test]
    fn torus_family_is_flat() {
        let g = Arc::new(
            GeneratingFunction::parse(Surface::Torus { area: 1.0 }, &format!("{} * sin({} * x) * sin({} * y)", 1e-3, 2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI), None)
                .unwrap(),
        );
        let r = verify_flatness(&g).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.oscillation - 2e-3).abs() < 1e-12);
    }
}
