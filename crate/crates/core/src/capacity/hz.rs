//! Hofer–Zehnder admissible function on the region between the graph of `H`
//! and the zero section, in action-angle coordinates `(ρ, θ)` on the fiber.
//!
//! `K(x, ρ) = m + ν/4 − χ(x) φ(H(x) − min H + ν/4 − ρ)` where `φ(s) = s − δ/2`
//! for `s ≥ δ`, `φ = 0` for `s ≤ 0`, smooth in between (`δ = ν/4`), and `χ` is
//! a cutoff equal to 1 on the support box (identically 1 on closed surfaces).

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::Serialize;

use super::{CapacityError, CertificateKind, EmbeddingCertificate, Residual, Side};
use crate::expr::{bump_value, ExprError};
use crate::flow::{solve, FlowError, OdeOptions};
use crate::hamiltonian::{HamiltonianPath, Support};
use crate::hofer::{checked_extrema, SearchConfig};
use crate::orbits::{has_short_orbit, SeedSpec};
use crate::surface::Surface;
use crate::util::{golden_min, wrap_half};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HzOptions {
    /// Fiber thickening `ν > 0`.
    pub nu: f64,
    /// Base seeds per side of the grid.
    pub base_grid: usize,
    pub rho_levels: usize,
    pub theta_levels: usize,
    /// Closed orbits of `K` shorter than this are disallowed.
    pub horizon: f64,
    /// Return distance accepted as closure.
    pub return_tol: f64,
    /// Width of the cutoff ramp outside the support box (plane only).
    pub cutoff_width: f64,
    pub ode_tol: f64,
    pub precondition_seeds: SeedSpec,
}

impl Default for HzOptions {
    fn default() -> Self {
        HzOptions {
            nu: 0.1,
            base_grid: 10,
            rho_levels: 5,
            theta_levels: 2,
            horizon: 1.0,
            return_tol: 1e-6,
            cutoff_width: 1.0,
            ode_tol: 1e-10,
            precondition_seeds: SeedSpec::default(),
        }
    }
}

/// A closed orbit of `K` found on the seed grid; state is `(x, ρ, θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KOrbit {
    pub seed: [f64; 5],
    pub period: f64,
    pub residual: f64,
}

/// `∫₀^σ bump(τ; 1) dτ` for `σ ∈ [0, 1]`.
fn bump_primitive(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s - 2.5 * s.powi(4) + 3.0 * s.powi(5) - s.powi(6)
}

struct KFunction<'a> {
    path: &'a HamiltonianPath,
    min: f64,
    m: f64,
    nu: f64,
    delta: f64,
    cutoff: Option<([f64; 2], f64, f64)>,
}

impl KFunction<'_> {
    fn phi(&self, s: f64) -> (f64, f64) {
        if s <= 0.0 {
            return (0.0, 0.0);
        }
        let d = self.delta;
        if s >= d {
            return (s - 0.5 * d, 1.0);
        }
        (s - d * bump_primitive(s / d), 1.0 - bump_value(s, d, 0))
    }

    /// `(χ, ∇χ)`.
    fn chi(&self, x: &[f64; 3]) -> (f64, [f64; 3]) {
        match self.cutoff {
            None => (1.0, [0.0; 3]),
            Some((c, r2, w)) => {
                let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
                let u = dx * dx + dy * dy - r2;
                let d = bump_value(u, w, 1);
                (bump_value(u, w, 0), [2.0 * dx * d, 2.0 * dy * d, 0.0])
            }
        }
    }

    fn top(&self) -> f64 {
        self.m + 0.25 * self.nu
    }

    /// Fiber height `H − min + ν/4` over `x`.
    fn height(&self, x: &[f64; 3]) -> Result<f64, ExprError> {
        Ok(self.path.value(x, 0.0)? - self.min + 0.25 * self.nu)
    }

    fn value(&self, x: &[f64; 3], rho: f64) -> Result<f64, ExprError> {
        let (chi, _) = self.chi(x);
        Ok(self.top() - chi * self.phi(self.height(x)? - rho).0)
    }

    fn field(&self, y: &[f64; 5]) -> Result<[f64; 5], ExprError> {
        let x = [y[0], y[1], y[2]];
        let (chi, dchi) = self.chi(&x);
        let (phi, dphi) = self.phi(self.height(&x)? - y[3]);
        let gh = if chi * dphi != 0.0 { self.path.gradient(&x, 0.0)? } else { [0.0; 3] };
        let mut g = [0.0; 3];
        for i in 0..3 {
            g[i] = -(dchi[i] * phi + chi * dphi * gh[i]);
        }
        let v = self.path.surface.vector_field(&x, &g);
        Ok([v[0], v[1], v[2], 0.0, -chi * dphi])
    }

    fn distance(&self, a: &[f64; 5], b: &[f64; 5]) -> f64 {
        let dx = self.path.surface.distance(&[a[0], a[1], a[2]], &[b[0], b[1], b[2]]);
        let dt = wrap_half(a[4] - b[4]);
        (dx * dx + (a[3] - b[3]).powi(2) + dt * dt).sqrt()
    }
}

fn base_seeds(path: &HamiltonianPath, n: usize, cutoff: Option<([f64; 2], f64, f64)>) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            out.push(match (path.surface, cutoff) {
                (Surface::Sphere { .. }, _) => {
                    let z = -1.0 + 2.0 * a;
                    let th = 2.0 * std::f64::consts::PI * b;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    [r * th.cos(), r * th.sin(), z]
                }
                (_, Some((c, r2, w))) => {
                    let h = (r2 + w).sqrt();
                    [c[0] + h * (2.0 * a - 1.0), c[1] + h * (2.0 * b - 1.0), 0.0]
                }
                _ => [a, b, 0.0],
            });
        }
    }
    out
}

/// Earliest return of the `K`-orbit through `y0` before `horizon`, if any.
fn k_return(k: &KFunction, y0: [f64; 5], opts: &HzOptions) -> Result<Option<KOrbit>, CapacityError> {
    let f0 = k.field(&y0)?;
    if f0.iter().map(|c| c * c).sum::<f64>().sqrt() < 1e-10 {
        return Ok(None);
    }
    let surf = k.path.surface;
    let rhs = |_: f64, y: &[f64; 5]| -> Result<[f64; 5], FlowError> { Ok(k.field(y)?) };
    let project = |y: [f64; 5]| {
        let p = surf.project([y[0], y[1], y[2]]);
        [p[0], p[1], p[2], y[3], y[4]]
    };
    let ode = OdeOptions::new(opts.ode_tol).max_step(opts.horizon / 200.0);
    let mut samples: Vec<(f64, [f64; 5], f64)> = Vec::new();
    solve(rhs, y0, 0.0, opts.horizon, &ode, project, |t, y| {
        samples.push((t, *y, k.distance(y, &y0)));
        ControlFlow::Continue(())
    })?;
    for w in samples.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        if !(b.2 < a.2 && b.2 <= c.2) {
            continue;
        }
        let mut err = None;
        let (t, d) = golden_min(
            |t| match solve(rhs, a.1, a.0, t, &OdeOptions::new(opts.ode_tol), project, |_, _| ControlFlow::Continue(())) {
                Ok((y, _)) => k.distance(&y, &y0),
                Err(e) => {
                    err = Some(e);
                    f64::INFINITY
                }
            },
            a.0,
            c.0,
            1e-10,
        );
        if let Some(e) = err {
            return Err(e.into());
        }
        if d < opts.return_tol && t < opts.horizon - 1e-6 {
            return Ok(Some(KOrbit {
                seed: y0,
                period: t,
                residual: d,
            }));
        }
    }
    Ok(None)
}

/// Certify `c_HZ ≥ osc H` for the region under the graph of an autonomous `H`
/// by building `K` and checking it has no fast closed orbit on a product seed grid.
pub fn chz_certificate(path: &HamiltonianPath, opts: &HzOptions) -> Result<EmbeddingCertificate, CapacityError> {
    if !path.is_autonomous() {
        return Err(CapacityError::Unsupported("time-dependent Hamiltonian".into()));
    }
    if !(opts.nu > 0.0) {
        return Err(CapacityError::InvalidParameter(format!("nu = {}", opts.nu)));
    }
    let ext = checked_extrema(path, 0.0, &SearchConfig::default())?;
    let m = ext.oscillation();
    let mut cert = EmbeddingCertificate {
        kind: CertificateKind::HzFunction,
        path_label: path.label.clone(),
        value: 0.0,
        epsilon: opts.nu,
        side: Side::Under,
        residuals: Vec::new(),
        maps: Vec::new(),
        notes: Vec::new(),
        degenerate: false,
    };
    if m <= 1e-12 {
        cert.degenerate = true;
        cert.notes.push("H is constant: the region is degenerate and the bound is 0".into());
        return Ok(cert);
    }
    let scan = has_short_orbit(path, 1.0, &opts.precondition_seeds)?;
    if let Some(w) = scan.witness {
        return Err(CapacityError::PreconditionFailed {
            reason: format!("H has a closed orbit of period {:.6} < 1", w.period.unwrap_or(f64::NAN)),
            witness: Some(w),
        });
    }
    let cutoff = match path.support {
        Support::Rect(r) => {
            let c = r.at(0.5, 0.5);
            let r2 = 0.25 * ((r.hi[0] - r.lo[0]).powi(2) + (r.hi[1] - r.lo[1]).powi(2));
            Some((c, r2, opts.cutoff_width))
        }
        Support::Whole => None,
    };
    let k = KFunction {
        path,
        min: ext.min,
        m,
        nu: opts.nu,
        delta: 0.25 * opts.nu,
        cutoff,
    };

    let base = base_seeds(path, opts.base_grid, cutoff);
    let mut seeds = Vec::with_capacity(base.len() * opts.rho_levels * opts.theta_levels);
    for x in &base {
        let h = k.height(x)?;
        for i in 0..opts.rho_levels {
            let rho = (i as f64 + 0.5) / opts.rho_levels as f64 * h;
            for j in 0..opts.theta_levels {
                seeds.push([x[0], x[1], x[2], rho, j as f64 / opts.theta_levels as f64]);
            }
        }
    }
    let found: Vec<Result<Option<KOrbit>, CapacityError>> = seeds.par_iter().map(|y| k_return(&k, *y, opts)).collect();
    for r in found {
        if let Some(o) = r? {
            return Err(CapacityError::ShortOrbitInK(o));
        }
    }

    let mut boundary = 0.0f64;
    let mut kmin = f64::INFINITY;
    for x in &base {
        let h = k.height(x)?;
        boundary = boundary.max((k.value(x, h)? - k.top()).abs());
        kmin = kmin.min(k.value(x, 0.0)?);
    }
    kmin = kmin.min(k.value(&ext.argmax, 0.0)?);
    let osc = k.top() - kmin;
    cert.value = m;
    cert.residuals.push(Residual::at_most("boundary-constancy", boundary, 1e-9));
    cert.residuals.push(Residual::at_most("oscillation-deficit", (m - osc).max(0.0), 1e-9));
    cert.residuals.push(Residual::info("k-oscillation", osc));
    cert.residuals.push(Residual::info("k-seeds", seeds.len() as f64));
    cert.residuals.push(Residual::info("h-seeds", scan.seeds_checked as f64));
    cert.maps.push(format!(
        "K(x, rho) = {} - chi(x) * phi({} - rho), H = {}",
        k.top(),
        format_args!("H(x) - ({}) + {}", ext.min, 0.25 * opts.nu),
        path.hamiltonian.describe()
    ));
    cert.notes.push(format!(
        "no closed orbit of K with period < {} on {} product seeds (sampled claim)",
        opts.horizon,
        seeds.len()
    ));
    cert.check()
}
