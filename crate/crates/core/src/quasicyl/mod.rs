//! Thickened graph regions and quasi-cylinders glued from two Hamiltonian
//! paths with the same time-1 map.
//!
//! Regions live in `M × ℝ × [0, 1]` with `Ω = ω ⊕ ds∧dt`. For `H, K` with
//! `φ₁ = ψ₁`, the glued region is `R_{H,K}(ν) = {λ_H(t) ≤ s ≤ μ_K(t) + F_t(x)}`
//! where `f_t = φ_t∘ψ_t⁻¹` is generated by `F_t = H_t − K_t∘ψ_t∘φ_t⁻¹`.

pub mod moser;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{bump_value, ExprError};
use crate::flow::{flow_to, flow_with_jacobian, FlowError, FlowMapSample};
use crate::hamiltonian::{HamiltonianPath, Support};
use crate::hofer::{calabi, checked_extrema, HoferError, SearchConfig};
use crate::surface::{Rect, Surface};
use crate::util::{fixed_panels, halton, integrate_batched};

pub use moser::{moser_split, DiscreteTwoForm, MoserReport, Perturbation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuasiCylError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Hofer(#[from] HoferError),
    #[error("time-1 maps differ by {defect:e}")]
    EndpointMismatch { defect: f64 },
    #[error("fiber areas disagree by {deviation:e}")]
    InconsistentArea { deviation: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("disc restriction degenerates: rho = {rho:e} at {at:?}")]
    NondegeneracyFailed { rho: f64, at: [usize; 4] },
    #[error("Moser residual {residual:e} exceeds {limit:e}")]
    ResidualTooLarge { residual: f64, limit: f64 },
}

/// Width of the quintic ramps of the thickening profiles near `t = 0, 1`.
pub const RAMP: f64 = 0.1;
const ODE_TOL: f64 = 1e-12;
/// GK15 panels for the loop integral; its integrand is smooth in `t` but
/// carries ODE noise near `1e-9`, which stalls adaptive refinement.
const FIBER_PANELS: usize = 8;

/// `r(t)`: 0 at the ends, 1 on `[κ, 1 − κ]`, `∫r = 1 − κ`.
pub fn ramp(t: f64, kappa: f64) -> f64 {
    (1.0 - bump_value(t, kappa, 0)) * (1.0 - bump_value(1.0 - t, kappa, 0))
}

/// `∫ max_x H_t dt` and `∫ min_x H_t dt`, memoized per function and interval
/// (each comparison thickens the same paths several times).
fn extremal_integrals(path: &HamiltonianPath) -> Result<(f64, f64), QuasiCylError> {
    static MEMO: OnceLock<Mutex<HashMap<String, (f64, f64)>>> = OnceLock::new();
    let key = format!("{:?}|{}|{:?}|{:?}", path.surface, path.hamiltonian.describe(), path.interval, path.support);
    let memo = MEMO.get_or_init(Default::default);
    if let Some(v) = memo.lock().unwrap().get(&key) {
        return Ok(*v);
    }
    let v = extremal_integrals_uncached(path)?;
    memo.lock().unwrap().insert(key, v);
    Ok(v)
}

fn extremal_integrals_uncached(path: &HamiltonianPath) -> Result<(f64, f64), QuasiCylError> {
    let cfg = SearchConfig::default();
    let (a, b) = path.interval;
    if path.is_autonomous() {
        let e = checked_extrema(path, a, &cfg)?;
        return Ok(((b - a) * e.max, (b - a) * e.min));
    }
    let one = |pick: fn(&crate::hofer::Extrema) -> f64| {
        integrate_batched(
            |ts| {
                ts.par_iter()
                    .map(|&t| checked_extrema(path, t, &cfg).map(|e| pick(&e)))
                    .collect::<Result<Vec<f64>, HoferError>>()
            },
            a,
            b,
            1e-10,
            200,
        )
    };
    Ok((one(|e| e.max)?.value, one(|e| e.min)?.value))
}

/// Thickening of the graph of `H`: lower profile `λ(t) = min H_t − δ r(t)`,
/// upper profile `μ(t) = max H_t + δ r(t)`, each adding area `ν/2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thickening {
    pub label: String,
    pub nu: f64,
    pub delta: f64,
    pub kappa: f64,
    pub int_max: f64,
    pub int_min: f64,
}

impl Thickening {
    pub fn lower_pad(&self, t: f64) -> f64 {
        -self.delta * ramp(t, self.kappa)
    }

    pub fn upper_pad(&self, t: f64) -> f64 {
        self.delta * ramp(t, self.kappa)
    }

    /// Area of `U_H = {λ ≤ s ≤ μ}`.
    pub fn disc_area(&self) -> f64 {
        self.int_max - self.int_min + self.nu
    }

    /// The same extremal integrals with a different `ν`.
    pub fn with_nu(&self, nu: f64) -> Thickening {
        Thickening {
            nu,
            delta: nu / (2.0 * (1.0 - self.kappa)),
            ..self.clone()
        }
    }

    /// `∫ −(λ − min H_t) dt`, which should be `ν/2`.
    pub fn pad_area(&self) -> f64 {
        crate::util::integrate(|t| self.upper_pad(t), 0.0, 1.0, 1e-14, 0.0).value
    }
}

/// Under and over thickened regions of `H` (they share one [`Thickening`]).
pub fn thicken(path: &HamiltonianPath, nu: f64) -> Result<Thickening, QuasiCylError> {
    if !(nu > 0.0) {
        return Err(QuasiCylError::InvalidParameter(format!("nu = {nu}")));
    }
    if path.interval != (0.0, 1.0) {
        return Err(QuasiCylError::InvalidParameter("paths must run over [0, 1]".into()));
    }
    let (int_max, int_min) = extremal_integrals(path)?;
    Ok(Thickening {
        label: path.label.clone(),
        nu,
        delta: nu / (2.0 * (1.0 - RAMP)),
        kappa: RAMP,
        int_max,
        int_min,
    })
}

/// `R_{H,K}(ν)`: the region under `H` glued to the region over `K`.
#[derive(Clone, Debug)]
pub struct QuasiCylinder {
    pub h: HamiltonianPath,
    pub k: HamiltonianPath,
    pub nu: f64,
    pub lower: Thickening,
    pub upper: Thickening,
    /// `K` and `H` are the same function, so `f_t` is the identity.
    pub identical: bool,
    pub endpoint_defect: f64,
    /// `∫(μ_K − λ_H) dt`, the fiber area at points fixed by the whole loop `f_t`.
    pub declared_area: f64,
    /// Scales the `s` component of the gluing map; only tests change it.
    s_scale: f64,
    /// Loop integrals at the sampled fibers; they do not depend on `ν`.
    fibers: Arc<OnceLock<FiberLoops>>,
}

#[derive(Debug)]
struct FiberLoops {
    xs: Vec<[f64; 3]>,
    loops: Vec<f64>,
    calabi_gap: Option<f64>,
}

fn same_function(h: &HamiltonianPath, k: &HamiltonianPath) -> bool {
    h.interval == k.interval
        && h.surface == k.surface
        && (Arc::ptr_eq(&h.hamiltonian, &k.hamiltonian) || h.hamiltonian.describe() == k.hamiltonian.describe())
}

/// Box covering the supports of both paths (plane) or the unit square (torus).
fn sample_box(h: &HamiltonianPath, k: &HamiltonianPath) -> Rect {
    match (h.support, k.support) {
        (Support::Rect(a), Support::Rect(b)) => Rect::new(
            [a.lo[0].min(b.lo[0]), a.lo[1].min(b.lo[1])],
            [a.hi[0].max(b.hi[0]), a.hi[1].max(b.hi[1])],
        ),
        _ => Rect::new([0.0, 0.0], [1.0, 1.0]),
    }
}

/// Largest distance between the time-1 maps of `h` and `k` on an 8×8 grid.
pub fn endpoint_defect(h: &HamiltonianPath, k: &HamiltonianPath) -> Result<f64, QuasiCylError> {
    let b = sample_box(h, k);
    let pts: Vec<[f64; 3]> = (0..64)
        .map(|i| {
            let p = b.at((i / 8) as f64 / 7.0, (i % 8) as f64 / 7.0);
            [p[0], p[1], 0.0]
        })
        .collect();
    let d: Result<Vec<f64>, FlowError> = pts
        .par_iter()
        .map(|p| {
            let a = flow_to(h, *p, 0.0, 1.0, ODE_TOL)?;
            let c = flow_to(k, *p, 0.0, 1.0, ODE_TOL)?;
            Ok(h.surface.distance(&a, &c))
        })
        .collect();
    Ok(d?.into_iter().fold(0.0, f64::max))
}

/// Glue after checking `φ₁ = ψ₁` to `1e-6`.
pub fn glue(h: &HamiltonianPath, k: &HamiltonianPath, nu: f64) -> Result<QuasiCylinder, QuasiCylError> {
    let q = glue_unchecked(h, k, nu)?;
    if q.endpoint_defect >= 1e-6 {
        return Err(QuasiCylError::EndpointMismatch {
            defect: q.endpoint_defect,
        });
    }
    Ok(q)
}

/// [`glue`] without rejecting mismatched endpoints (the defect is still recorded).
pub fn glue_unchecked(h: &HamiltonianPath, k: &HamiltonianPath, nu: f64) -> Result<QuasiCylinder, QuasiCylError> {
    if h.surface.is_sphere() || k.surface != h.surface {
        return Err(QuasiCylError::Unsupported("gluing is implemented on the plane and the torus".into()));
    }
    let identical = same_function(h, k);
    let lower = thicken(h, nu)?;
    let upper = if identical { lower.clone() } else { thicken(k, nu)? };
    let endpoint_defect = if identical { 0.0 } else { endpoint_defect(h, k)? };
    Ok(QuasiCylinder {
        h: h.clone(),
        k: k.clone(),
        nu,
        declared_area: upper.int_max - lower.int_min + nu,
        lower,
        upper,
        identical,
        endpoint_defect,
        s_scale: 1.0,
        fibers: Arc::default(),
    })
}

impl QuasiCylinder {
    fn form_scale(&self) -> f64 {
        match self.h.surface {
            Surface::Torus { area } => area,
            _ => 1.0,
        }
    }

    /// `f_t(x) = φ_t(ψ_t⁻¹(x))`.
    pub fn loop_point(&self, x: [f64; 3], t: f64) -> Result<[f64; 3], QuasiCylError> {
        if self.identical {
            return Ok(x);
        }
        let z = flow_to(&self.k, x, t, 0.0, ODE_TOL)?;
        Ok(flow_to(&self.h, z, 0.0, t, ODE_TOL)?)
    }

    /// `f_t⁻¹(y) = ψ_t(φ_t⁻¹(y))`.
    pub fn loop_inverse(&self, y: [f64; 3], t: f64) -> Result<[f64; 3], QuasiCylError> {
        if self.identical {
            return Ok(y);
        }
        let z = flow_to(&self.h, y, t, 0.0, ODE_TOL)?;
        Ok(flow_to(&self.k, z, 0.0, t, ODE_TOL)?)
    }

    /// `F_t(y) = H_t(y) − K_t(f_t⁻¹(y))`.
    pub fn generator(&self, y: [f64; 3], t: f64) -> Result<f64, QuasiCylError> {
        let x = self.loop_inverse(y, t)?;
        Ok(self.h.value(&y, t)? - self.k.value(&x, t)?)
    }

    /// Lower boundary `λ_H(t)` (a function of `t` only).
    pub fn lower_min(&self, t: f64) -> Result<f64, QuasiCylError> {
        let e = checked_extrema(&self.h, t, &SearchConfig::default())?;
        Ok(e.min + self.lower.lower_pad(t))
    }

    /// Gluing map `Γ_K`-side to `Γ_H`-side: `(x, s, t) ↦ (f_t x, s − K_t(x) + H_t(f_t x), t)`.
    pub fn glue_map(&self, p: [f64; 4]) -> Result<[f64; 4], QuasiCylError> {
        let x = [p[0], p[1], 0.0];
        let t = p[3];
        let y = self.loop_point(x, t)?;
        let s = p[2] - self.k.value(&x, t)? + self.h.value(&y, t)?;
        Ok([y[0], y[1], self.s_scale * s, t])
    }

    pub fn glue_map_inverse(&self, q: [f64; 4]) -> Result<[f64; 4], QuasiCylError> {
        let y = [q[0], q[1], 0.0];
        let t = q[3];
        let x = self.loop_inverse(y, t)?;
        let s = q[2] / self.s_scale + self.k.value(&x, t)? - self.h.value(&y, t)?;
        Ok([x[0], x[1], s, t])
    }

    /// `∫_{D_x} Ω` as the boundary integral of `Aξ dη + s dt` round the fiber disc.
    pub fn fiber_area(&self, x: [f64; 3]) -> Result<f64, QuasiCylError> {
        Ok(self.declared_area + self.fiber_loop(x)?)
    }

    /// `∫_{D_x} Ω − declared_area`: the contribution of the loop `f_t(x)`.
    fn fiber_loop(&self, x: [f64; 3]) -> Result<f64, QuasiCylError> {
        if self.identical {
            return Ok(0.0);
        }
        let a = self.form_scale();
        let integrand = |t: f64| -> Result<f64, QuasiCylError> {
            let (back, fwd) = self.loop_with_jacobians(x, t)?;
            let y = fwd.end;
            let xk = self.k.field(&x, t)?;
            let (j1, j2) = (back.jacobian, fwd.jacobian);
            let w = [j1[0][0] * xk[0] + j1[0][1] * xk[1], j1[1][0] * xk[0] + j1[1][1] * xk[1]];
            let jw = [j2[0][0] * w[0] + j2[0][1] * w[1], j2[1][0] * w[0] + j2[1][1] * w[1]];
            let xh = self.h.field(&y, t)?;
            let eta_dot = xh[1] - jw[1];
            Ok(a * y[0] * eta_dot + self.h.value(&y, t)? - self.k.value(&x, t)?)
        };
        // f_t(x) is a closed loop at x, so Aξη' integrates to the area it encloses
        let nodes = fixed_panels(0.0, 1.0, FIBER_PANELS);
        let loop_part: f64 = nodes
            .par_iter()
            .map(|&(t, w)| integrand(t).map(|v| w * v))
            .collect::<Result<Vec<f64>, QuasiCylError>>()?
            .iter()
            .sum();
        Ok(loop_part)
    }

    /// The same pair glued with a different `ν`, sharing the fiber integrals.
    pub fn with_nu(&self, nu: f64) -> Result<QuasiCylinder, QuasiCylError> {
        if !(nu > 0.0) {
            return Err(QuasiCylError::InvalidParameter(format!("nu = {nu}")));
        }
        let (lower, upper) = (self.lower.with_nu(nu), self.upper.with_nu(nu));
        Ok(QuasiCylinder {
            nu,
            declared_area: upper.int_max - lower.int_min + nu,
            lower,
            upper,
            ..self.clone()
        })
    }

    fn fiber_loops(&self) -> Result<&FiberLoops, QuasiCylError> {
        if let Some(f) = self.fibers.get() {
            return Ok(f);
        }
        let b = sample_box(&self.h, &self.k);
        let mut xs: Vec<[f64; 3]> = Vec::with_capacity(20);
        let inside = if matches!(self.h.support, Support::Rect(_)) { 16 } else { 20 };
        for i in 1..=inside {
            let p = b.at(0.1 + 0.8 * halton(i, 2), 0.1 + 0.8 * halton(i, 3));
            xs.push([p[0], p[1], 0.0]);
        }
        if inside < 20 {
            let g = b.grow(0.2);
            for c in [[g.lo[0], g.lo[1]], [g.hi[0], g.lo[1]], [g.lo[0], g.hi[1]], [g.hi[0], g.hi[1]]] {
                xs.push([c[0], c[1], 0.0]);
            }
        }
        let loops: Result<Vec<f64>, QuasiCylError> = xs.par_iter().map(|x| self.fiber_loop(*x)).collect();
        let calabi_gap = match self.h.support {
            Support::Rect(_) if self.identical => Some(0.0),
            Support::Rect(_) => Some((calabi(&self.h)?.value - calabi(&self.k)?.value).abs()),
            Support::Whole => None,
        };
        let _ = self.fibers.set(FiberLoops {
            xs,
            loops: loops?,
            calabi_gap,
        });
        Ok(self.fibers.get().expect("just set"))
    }

    /// Fiber-disc areas at 20 sample points, inside and outside the supports.
    pub fn area(&self) -> Result<AreaReport, QuasiCylError> {
        let f = self.fiber_loops()?;
        let areas: Vec<f64> = f.loops.iter().map(|l| self.declared_area + l).collect();
        let lo = areas.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = areas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        let report = AreaReport {
            mean,
            declared: self.declared_area,
            fibers: f.xs.iter().zip(&areas).map(|(x, a)| ([x[0], x[1]], *a)).collect(),
            deviation: hi - lo,
            calabi_gap: f.calabi_gap,
        };
        if report.deviation > 1e-4 {
            return Err(QuasiCylError::InconsistentArea {
                deviation: report.deviation,
            });
        }
        Ok(report)
    }

    /// `ψ_t⁻¹` at `x` and `φ_t` at its image, each with its variational Jacobian.
    fn loop_with_jacobians(&self, x: [f64; 3], t: f64) -> Result<(FlowMapSample, FlowMapSample), QuasiCylError> {
        let back = flow_with_jacobian(&self.k, x, t, 0.0, ODE_TOL)?;
        let fwd = flow_with_jacobian(&self.h, back.end, 0.0, t, ODE_TOL)?;
        Ok((back, fwd))
    }

    /// Jacobian of [`Self::glue_map`] in `(x, y, s, t)`, assembled from the
    /// variational Jacobians of the two flows.
    pub fn glue_jacobian(&self, q: [f64; 4]) -> Result<[[f64; 4]; 4], QuasiCylError> {
        let x = [q[0], q[1], 0.0];
        let t = q[3];
        let (df, y) = if self.identical {
            ([[1.0, 0.0], [0.0, 1.0]], x)
        } else {
            let (back, fwd) = self.loop_with_jacobians(x, t)?;
            let (a, b) = (fwd.jacobian, back.jacobian);
            let m = |i: usize, j: usize| a[i][0] * b[0][j] + a[i][1] * b[1][j];
            ([[m(0, 0), m(0, 1)], [m(1, 0), m(1, 1)]], fwd.end)
        };
        // ∂_t f_t(x) = X_H(y) − Df·X_K(x)
        let (xh, xk) = (self.h.field(&y, t)?, self.k.field(&x, t)?);
        let ft = [
            xh[0] - df[0][0] * xk[0] - df[0][1] * xk[1],
            xh[1] - df[1][0] * xk[0] - df[1][1] * xk[1],
        ];
        let (gh, gk) = (self.h.gradient(&y, t)?, self.k.gradient(&x, t)?);
        let dt = 1e-6;
        let d_t = |p: &HamiltonianPath, z: &[f64; 3]| -> Result<f64, QuasiCylError> {
            Ok((p.value(z, t + dt)? - p.value(z, t - dt)?) / (2.0 * dt))
        };
        let c = self.s_scale;
        let mut j = [[0.0; 4]; 4];
        for r in 0..2 {
            j[r][0] = df[r][0];
            j[r][1] = df[r][1];
            j[r][3] = ft[r];
        }
        for col in 0..2 {
            j[2][col] = c * (gh[0] * df[0][col] + gh[1] * df[1][col] - gk[col]);
        }
        j[2][2] = c;
        j[2][3] = c * (d_t(&self.h, &y)? - d_t(&self.k, &x)? + gh[0] * ft[0] + gh[1] * ft[1]);
        j[3][3] = 1.0;
        Ok(j)
    }

    /// `max ‖Jᵀ Ω₀ J − Ω₀‖∞` of the gluing map over `samples` points of `R_K^+`.
    pub fn verify_gluing_symplectic(&self, samples: usize) -> Result<SymplecticReport, QuasiCylError> {
        let b = sample_box(&self.h, &self.k);
        let a = self.form_scale();
        let omega0 = [[0.0, a, 0.0, 0.0], [-a, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0]];
        let results: Result<Vec<(f64, [f64; 4])>, QuasiCylError> = (1..=samples)
            .into_par_iter()
            .map(|i| {
                let p = b.at(halton(i, 2), halton(i, 3));
                let t = 0.02 + 0.96 * halton(i, 5);
                let x = [p[0], p[1], 0.0];
                let kx = self.k.value(&x, t)?;
                let s = kx + halton(i, 7) * self.upper.delta.max(0.1);
                let q = [p[0], p[1], s, t];
                let j = self.glue_jacobian(q)?;
                let mut worst = 0.0f64;
                for r in 0..4 {
                    for c in 0..4 {
                        let mut v = 0.0;
                        for k in 0..4 {
                            for l in 0..4 {
                                v += j[k][r] * omega0[k][l] * j[l][c];
                            }
                        }
                        worst = worst.max((v - omega0[r][c]).abs());
                    }
                }
                Ok((worst, q))
            })
            .collect();
        let results = results?;
        let (max_residual, worst_at) = results
            .iter()
            .cloned()
            .fold((0.0, [0.0; 4]), |acc, r| if r.0 > acc.0 { r } else { acc });
        Ok(SymplecticReport {
            samples,
            max_residual,
            worst_at,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AreaReport {
    pub mean: f64,
    pub declared: f64,
    pub fibers: Vec<([f64; 2], f64)>,
    /// `max − min` over the sampled fibers.
    pub deviation: f64,
    /// `|Cal(H) − Cal(K)|` (plane only).
    pub calabi_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymplecticReport {
    pub samples: usize,
    pub max_residual: f64,
    pub worst_at: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub nu: f64,
    pub length_h: f64,
    pub length_k: f64,
    pub area_hk: f64,
    pub area_kh: f64,
    /// `area_hk + area_kh − (ℒ(H) + ℒ(K) + 2ν)`.
    pub identity_defect: f64,
    /// `ℒ(K) + 2ν < ℒ(H)`; otherwise the report is informational.
    pub gated: bool,
    /// Which glued region has area below `ℒ(H)` (`"H,K"`, `"K,H"` or both).
    pub below: Vec<String>,
}

/// Areas of `R_{H,K}(ν)` and `R_{K,H}(ν)` and the sum identity.
pub fn compare(h: &HamiltonianPath, k: &HamiltonianPath, nu: f64) -> Result<CompareReport, QuasiCylError> {
    Ok(compare_over(h, k, &[nu])?.remove(0))
}

/// [`compare`] at several `ν`; the two gluings are built once.
pub fn compare_over(h: &HamiltonianPath, k: &HamiltonianPath, nus: &[f64]) -> Result<Vec<CompareReport>, QuasiCylError> {
    let Some(&first) = nus.first() else {
        return Ok(Vec::new());
    };
    compare_glued(&glue(h, k, first)?, &glue(k, h, first)?, nus)
}

/// [`compare_over`] for gluings already built in both orders (at any `ν`).
pub fn compare_glued(hk0: &QuasiCylinder, kh0: &QuasiCylinder, nus: &[f64]) -> Result<Vec<CompareReport>, QuasiCylError> {
    nus.iter()
        .map(|&nu| {
            let (hk, kh) = (hk0.with_nu(nu)?, kh0.with_nu(nu)?);
            let (a, b) = (hk.area()?.mean, kh.area()?.mean);
            let lh = hk.lower.int_max - hk.lower.int_min;
            let lk = hk.upper.int_max - hk.upper.int_min;
            let gated = lk + 2.0 * nu < lh;
            let mut below = Vec::new();
            if gated {
                if a < lh {
                    below.push("H,K".to_string());
                }
                if b < lh {
                    below.push("K,H".to_string());
                }
            }
            Ok(CompareReport {
                nu,
                length_h: lh,
                length_k: lk,
                area_hk: a,
                area_kh: b,
                identity_defect: a + b - (lh + lk + 2.0 * nu),
                gated,
                below,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const G: &str = "exp(neg(x^2 + 2*y^2)) * bump(x^2+y^2-1; 1)";

    fn path(src: &str) -> HamiltonianPath {
        HamiltonianPath::parse(Surface::Plane, src, Some(Rect::square(1.5))).unwrap()
    }

    /// `a(t) = 0.8 sin(ωt)` rises to 0.8 and ends at 0.6.
    fn up_down() -> HamiltonianPath {
        let w = PI - 0.75f64.asin();
        path(&format!("{} * cos({w} * t) * {G}", 0.8 * w))
    }

    #[test]
    fn thickening_adds_half_nu_each_side() {
        let th = thicken(&path(G), 0.1).unwrap();
        assert!((th.pad_area() - 0.05).abs() < 1e-12);
        assert!((th.disc_area() - 1.1).abs() < 1e-8);
    }

    #[test]
    fn identical_pair_is_split() {
        let q = glue(&path(G), &path(G), 0.1).unwrap();
        assert!(q.identical);
        assert!((q.area().unwrap().mean - 1.1).abs() < 1e-7);
        assert!(q.verify_gluing_symplectic(50).unwrap().max_residual < 1e-10);
    }

    #[test]
    fn reparametrized_pair_glues_symplectically() {
        let k = path(&format!("(1 + 0.5*cos({} * t)) * {G}", 2.0 * PI));
        let q = glue(&path(G), &k, 0.05).unwrap();
        let r = q.verify_gluing_symplectic(40).unwrap();
        assert!(r.max_residual < 1e-5, "{r:?}");
        let a = q.area().unwrap();
        assert!(a.deviation < 1e-5, "{a:?}");
        assert!((a.mean - 1.05).abs() < 1e-5);
    }

    #[test]
    fn glue_jacobian_matches_differences() {
        let q = glue(&up_down(), &path(&format!("0.6 * {G}")), 0.05).unwrap();
        let h = 1e-5;
        for p in [[0.3, -0.2, 0.4, 0.3], [-0.5, 0.1, 0.2, 0.7]] {
            let j = q.glue_jacobian(p).unwrap();
            for c in 0..4 {
                let (mut a, mut b) = (p, p);
                a[c] += h;
                b[c] -= h;
                let (ga, gb) = (q.glue_map(a).unwrap(), q.glue_map(b).unwrap());
                for r in 0..4 {
                    let fd = (ga[r] - gb[r]) / (2.0 * h);
                    assert!((fd - j[r][c]).abs() < 1e-4, "({r},{c}): {fd} vs {}", j[r][c]);
                }
            }
        }
    }

    #[test]
    fn fiber_areas_agree_for_a_nontrivial_loop() {
        let k = path(&format!("0.6 * {G}"));
        let q = glue(&up_down(), &k, 0.05).unwrap();
        let a = q.area().unwrap();
        assert!(a.deviation < 1e-5, "{a:?}");
        // outside the supports the loop is constant: ∫max K − ∫min H + ν
        assert!((a.mean - (0.6 + 0.2 + 0.05)).abs() < 1e-5, "{}", a.mean);
    }

    #[test]
    fn mismatched_endpoints_are_detected() {
        let k = path(&format!("0.9 * {G}"));
        assert!(matches!(glue(&path(&format!("0.6 * {G}")), &k, 0.05), Err(QuasiCylError::EndpointMismatch { .. })));
        let q = glue_unchecked(&path(&format!("0.6 * {G}")), &k, 0.05).unwrap();
        assert!(matches!(q.area(), Err(QuasiCylError::InconsistentArea { .. })));
    }

    #[test]
    fn corrupted_map_fails_symplecticity() {
        let mut q = glue(&path(G), &path(G), 0.1).unwrap();
        q.s_scale = 1.02;
        assert!(q.verify_gluing_symplectic(10).unwrap().max_residual > 1e-2);
    }

    #[test]
    fn sum_identity_for_shorter_pair() {
        let r = compare(&up_down(), &path(&format!("0.6 * {G}")), 0.05).unwrap();
        assert!(r.identity_defect.abs() < 1e-5, "{r:?}");
        assert!((r.length_h - 1.0).abs() < 1e-6 && (r.length_k - 0.6).abs() < 1e-9);
        assert!(r.gated && r.below.contains(&"H,K".to_string()));
    }
}
