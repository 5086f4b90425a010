//! Ball embedding for `C²`-small Hamiltonians with fixed extrema.
//!
//! A Darboux chart `f` at the fixed maximum `P` carries balls of capacity
//! `(1 − c)(ℒ − ε)` into `{H_t − H_t(p) ≥ c μ(t)}`, `μ(t) = H_t(P) − H_t(p)`;
//! the 2D map `ψ(a, θ) = (a μ(τ)/ℒ, τ)`, `τ = Θ⁻¹(θ)`, `Θ(t) = ∫₀ᵗ μ / ℒ`,
//! sends the rectangle `[0, ℒ) × [0, 1)` onto the region under the graph of `μ`.

use std::f64::consts::PI;

use serde::Serialize;

use super::{CapacityError, CertificateKind, EmbeddingCertificate, Residual, Side};
use crate::hamiltonian::{HamiltonianPath, Support};
use crate::hofer::fixed_extrema;
use crate::surface::Surface;
use crate::util::fixed_panels;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalOptions {
    pub epsilon: f64,
    /// Angles per sampled ring.
    pub ring_samples: usize,
    /// Rings per ball (the boundary is always one of them).
    pub rings: usize,
    pub time_samples: usize,
    /// `ψ` Jacobian grid side.
    pub grid: usize,
    /// Upper bound on the `C²` norm, when known for the family.
    pub threshold: Option<f64>,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            epsilon: 1e-5,
            ring_samples: 64,
            rings: 4,
            time_samples: 33,
            grid: 50,
            threshold: None,
        }
    }
}

pub const CONTAINMENT_LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Tabulated `Θ` with cubic Hermite interpolation (`Θ' = μ/ℒ` at the nodes).
struct Reparam {
    t: Vec<f64>,
    theta: Vec<f64>,
    slope: Vec<f64>,
}

impl Reparam {
    fn new(mu: &dyn Fn(f64) -> Result<f64, CapacityError>, a: f64, b: f64, nodes: usize) -> Result<(Self, f64), CapacityError> {
        let h = (b - a) / nodes as f64;
        let mut t = vec![a];
        let mut cum = vec![0.0];
        let mut slope = vec![mu(a)?];
        for k in 0..nodes {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let mut s = 0.0;
            for (x, w) in fixed_panels(lo, hi, 1) {
                s += w * mu(x)?;
            }
            t.push(hi);
            cum.push(cum[k] + s);
            slope.push(mu(hi)?);
        }
        let total = *cum.last().unwrap();
        let theta = cum.iter().map(|c| c / total).collect();
        let slope = slope.iter().map(|m| m / total).collect();
        Ok((Reparam { t, theta, slope }, total))
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.t.len() - 1;
        let h = self.t[1] - self.t[0];
        let k = (((x - self.t[0]) / h).floor() as usize).min(n - 1);
        let s = (x - self.t[k]) / h;
        let (y0, y1, d0, d1) = (self.theta[k], self.theta[k + 1], self.slope[k] * h, self.slope[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }

    fn inverse(&self, theta: f64) -> f64 {
        let (mut lo, mut hi) = (self.t[0], *self.t.last().unwrap());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < theta {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

fn chart(surf: &Surface, p: &[f64; 3], x: [f64; 2]) -> Result<[f64; 3], CapacityError> {
    match surf {
        Surface::Plane => Ok([p[0] + x[0], p[1] + x[1], 0.0]),
        Surface::Torus { area } => {
            let s = area.sqrt();
            Ok([p[0] + x[0] / s, p[1] + x[1] / s, 0.0])
        }
        Surface::Sphere { .. } => Err(CapacityError::Unsupported("local ball chart on the sphere".into())),
    }
}

struct Setup {
    top: [f64; 3],
    bottom: [f64; 3],
    times: Vec<f64>,
}

fn setup(path: &HamiltonianPath, opts: &LocalOptions) -> Result<Setup, CapacityError> {
    let fixed = fixed_extrema(path, path.interval)?.ok_or_else(|| CapacityError::PreconditionFailed {
        reason: "no fixed maximum and minimum".into(),
        witness: None,
    })?;
    let (a, b) = path.interval;
    let n = opts.time_samples.max(2);
    let times = (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect();
    Ok(Setup {
        top: fixed.max_point,
        bottom: fixed.min_point,
        times,
    })
}

fn mu(path: &HamiltonianPath, s: &Setup, t: f64) -> Result<f64, CapacityError> {
    Ok(path.value(&s.top, t)? - path.value(&s.bottom, t)?)
}

/// Worst containment margin `H_t(f(x)) − H_t(p) − c μ(t)` over the sampled
/// ball of capacity `(1 − c)(ℒ − ε)`, with the offending sample.
fn containment(path: &HamiltonianPath, s: &Setup, length: f64, c: f64, opts: &LocalOptions) -> Result<(f64, [f64; 3]), CapacityError> {
    let radius = ((1.0 - c) * (length - opts.epsilon) / PI).max(0.0).sqrt();
    let mut worst = (f64::INFINITY, [0.0; 3]);
    for &t in &s.times {
        let floor = path.value(&s.bottom, t)?;
        let need = c * mu(path, s, t)?;
        let mut check = |x: [f64; 2]| -> Result<(), CapacityError> {
            let q = chart(&path.surface, &s.top, x)?;
            let margin = path.value(&q, t)? - floor - need;
            if margin < worst.0 {
                worst = (margin, [q[0], q[1], t]);
            }
            Ok(())
        };
        check([0.0, 0.0])?;
        for r in 1..=opts.rings {
            let rr = radius * r as f64 / opts.rings as f64;
            for k in 0..opts.ring_samples {
                let a = 2.0 * PI * k as f64 / opts.ring_samples as f64;
                check([rr * a.cos(), rr * a.sin()])?;
            }
        }
    }
    Ok(worst)
}

fn c2_norm(path: &HamiltonianPath, s: &Setup) -> Result<f64, CapacityError> {
    let n = 24;
    let mut best = 0.0f64;
    for &t in &s.times {
        for i in 0..n {
            for j in 0..n {
                let (a, b) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                let q = match path.support {
                    Support::Rect(r) => {
                        let p = r.at(a, b);
                        [p[0], p[1], 0.0]
                    }
                    Support::Whole => [a, b, 0.0],
                };
                let g = path.gradient(&q, t)?;
                let h = path.hamiltonian.hessian(&q, t)?;
                let hn = h.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
                best = best.max(path.value(&q, t)?.abs()).max(g[0].hypot(g[1])).max(hn);
            }
        }
    }
    Ok(best)
}

/// Certify `c(region) ≥ ℒ − ε` for a path with fixed extrema that is small
/// enough for the Darboux-chart containment to hold.
pub fn local_ball_certificate(path: &HamiltonianPath, opts: &LocalOptions) -> Result<EmbeddingCertificate, CapacityError> {
    if path.surface.is_sphere() {
        return Err(CapacityError::Unsupported("local ball chart on the sphere".into()));
    }
    let s = setup(path, opts)?;
    let (a, b) = path.interval;
    let mu_t = |t: f64| mu(path, &s, t);
    let (rep, length) = Reparam::new(&mu_t, a, b, 512)?;
    if length <= 1e-12 {
        return Err(CapacityError::NotRegular);
    }
    if !(opts.epsilon > 0.0) || opts.epsilon >= length {
        return Err(CapacityError::InvalidParameter(format!("epsilon = {} with length {length}", opts.epsilon)));
    }
    let mut residuals = Vec::new();
    for c in CONTAINMENT_LEVELS {
        let (margin, sample) = containment(path, &s, length, c, opts)?;
        if margin < -1e-12 * (1.0 + length) {
            return Err(CapacityError::ContainmentFailed { c, sample, margin });
        }
        residuals.push(Residual::info(&format!("containment-margin-{c}"), margin));
    }

    // ψ Jacobian on (a, θ) ∈ (0, ℒ) × (0, 1)
    let psi = |x: [f64; 2]| -> Result<[f64; 2], CapacityError> {
        let tau = rep.inverse(x[1]);
        Ok([x[0] * mu_t(tau)? / length, tau])
    };
    let h = 1e-5;
    let mut jac = 0.0f64;
    let mut overflow = f64::NEG_INFINITY;
    let n = opts.grid;
    for i in 0..n {
        for j in 0..n {
            let x = [(i as f64 + 0.5) / n as f64 * length, (j as f64 + 0.5) / n as f64];
            let (ap, am) = (psi([x[0] + h * length, x[1]])?, psi([x[0] - h * length, x[1]])?);
            let (tp, tm) = (psi([x[0], x[1] + h])?, psi([x[0], x[1] - h])?);
            let da = [(ap[0] - am[0]) / (2.0 * h * length), (ap[1] - am[1]) / (2.0 * h * length)];
            let dt = [(tp[0] - tm[0]) / (2.0 * h), (tp[1] - tm[1]) / (2.0 * h)];
            jac = jac.max((da[0] * dt[1] - da[1] * dt[0] - 1.0).abs());
            let y = psi(x)?;
            overflow = overflow.max(y[0] - mu_t(y[1])?);
        }
    }
    residuals.push(Residual::at_most("psi-jacobian", jac, 1e-6));
    residuals.push(Residual::at_most("psi-overflow", overflow, 1e-12));
    let norm = c2_norm(path, &s)?;
    residuals.push(match opts.threshold {
        Some(th) => Residual::at_most("c2-norm", norm, th),
        None => Residual::info("c2-norm", norm),
    });

    EmbeddingCertificate {
        kind: CertificateKind::LocalBall,
        path_label: path.label.clone(),
        value: length - opts.epsilon,
        epsilon: opts.epsilon,
        side: Side::Both,
        residuals,
        maps: vec![
            format!("chart: x -> {:?} + x", s.top),
            "psi: (a, theta) -> (a mu(tau) / L, tau), tau = Theta^-1(theta)".into(),
        ],
        notes: vec![format!(
            "containment checked at c in {:?} on {} rings x {} angles x {} times",
            CONTAINMENT_LEVELS, opts.rings, opts.ring_samples, opts.time_samples
        )],
        degenerate: false,
    }
    .check()
}

/// Smallest family parameter in `[lo, hi]` at which the chart containment
/// fails, by bisection to `tol`; `None` if it holds at `hi`.
pub fn local_ball_threshold<F>(family: F, eps_rel: f64, lo: f64, hi: f64, tol: f64, opts: &LocalOptions) -> Result<Option<f64>, CapacityError>
where
    F: Fn(f64) -> Result<HamiltonianPath, CapacityError>,
{
    let holds = |d: f64| -> Result<bool, CapacityError> {
        let path = family(d)?;
        let s = setup(&path, opts)?;
        let mu_t = |t: f64| mu(&path, &s, t);
        let (_, length) = Reparam::new(&mu_t, path.interval.0, path.interval.1, 64)?;
        let o = LocalOptions {
            epsilon: eps_rel * length,
            ..*opts
        };
        for c in CONTAINMENT_LEVELS {
            if containment(&path, &s, length, c, &o)?.0 < -1e-12 * (1.0 + length) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    if holds(hi)? {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if holds(m)? {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Some(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::PathError;
    use crate::surface::Rect;

    fn family(d: f64) -> Result<HamiltonianPath, CapacityError> {
        HamiltonianPath::parse(Surface::Plane, &format!("{d} * bump(x^2+y^2; 1)"), Some(Rect::square(1.0)))
            .map_err(|e: PathError| CapacityError::InvalidParameter(e.to_string()))
    }

    #[test]
    fn small_bump_certifies_its_length() {
        let p = family(1e-3).unwrap();
        let c = local_ball_certificate(&p, &LocalOptions::default()).unwrap();
        assert!((c.value - (1e-3 - 1e-5)).abs() < 1e-9, "{}", c.value);
    }

    #[test]
    fn threshold_matches_closed_form() {
        let opts = LocalOptions {
            ring_samples: 8,
            rings: 1,
            time_samples: 2,
            ..Default::default()
        };
        // nondegenerate maximum so the chart centre is located exactly
        let gauss = |d: f64| {
            HamiltonianPath::parse(
                Surface::Plane,
                &format!("{d} * exp(neg(x^2+y^2)) * bump(x^2+y^2-1; 1)"),
                Some(Rect::square(1.5)),
            )
            .map_err(|e: PathError| CapacityError::InvalidParameter(e.to_string()))
        };
        let found = local_ball_threshold(gauss, 1e-2, 0.1, 20.0, 1e-6, &opts).unwrap().unwrap();
        // the c-ball boundary sits at r² = (1 − c)(1 − e)δ/π and needs exp(−r²) ≥ c
        let oracle = [0.25f64, 0.5, 0.75]
            .iter()
            .map(|&c| -c.ln() * PI / ((1.0 - c) * 0.99))
            .fold(f64::INFINITY, f64::min);
        assert!((found - oracle).abs() < 1e-5, "{found} vs {oracle}");
    }

    #[test]
    fn time_dependent_profile() {
        let p = HamiltonianPath::parse(
            Surface::Plane,
            &format!("0.001 * (1 + 0.5*sin({}*t)) * bump(x^2+y^2; 1)", 2.0 * PI),
            Some(Rect::square(1.0)),
        )
        .unwrap();
        let c = local_ball_certificate(&p, &LocalOptions::default()).unwrap();
        assert!((c.value - (1e-3 - 1e-5)).abs() < 1e-8, "{}", c.value);
        assert!(c.residual("psi-jacobian").unwrap().value < 1e-6);
    }
}
