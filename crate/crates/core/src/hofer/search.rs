//! Multi-start global extremum search for `x ↦ H_t(x)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::expr::ExprError;
use crate::hamiltonian::{HamiltonianPath, Support};
use crate::surface::Surface;
use crate::util::{dot3, halton, norm3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Quasi-random starts per restart.
    pub starts: usize,
    /// Independent start sets compared for stability.
    pub restarts: usize,
    /// Allowed disagreement between restarts.
    pub stability_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            starts: 64,
            restarts: 2,
            stability_tol: 1e-5,
        }
    }
}

/// Global maximum and minimum of `H_t` with their locations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extrema {
    pub t: f64,
    pub max: f64,
    pub argmax: [f64; 3],
    pub min: f64,
    pub argmin: [f64; 3],
    /// Distinct local maximizers within `1e-8·(1 + osc)` of the max.
    pub max_candidates: Vec<[f64; 3]>,
    pub min_candidates: Vec<[f64; 3]>,
    /// Largest disagreement between restarts.
    pub spread: f64,
}

impl Extrema {
    pub fn oscillation(&self) -> f64 {
        self.max - self.min
    }
}

/// Starting point `i` (1-based Halton index) in the search region.
pub fn start_point(path: &HamiltonianPath, i: usize) -> [f64; 3] {
    let (a, b) = (halton(i, 2), halton(i, 3));
    match (path.surface, path.support) {
        (Surface::Sphere { .. }, _) => {
            let z = 2.0 * a - 1.0;
            let th = 2.0 * std::f64::consts::PI * b;
            let r = (1.0 - z * z).max(0.0).sqrt();
            [r * th.cos(), r * th.sin(), z]
        }
        (_, Support::Rect(r)) => {
            let p = r.grow(0.1).at(a, b);
            [p[0], p[1], 0.0]
        }
        _ => [a, b, 0.0],
    }
}

/// Local ascent of `sign · H_t` from `x0`: Armijo gradient steps then Newton polish.
pub fn local_ascent(path: &HamiltonianPath, x0: [f64; 3], t: f64, sign: f64) -> Result<([f64; 3], f64), ExprError> {
    let surf = path.surface;
    let f = |x: &[f64; 3]| -> Result<f64, ExprError> { Ok(sign * path.value(x, t)?) };
    let tangential = |x: &[f64; 3]| -> Result<[f64; 3], ExprError> {
        let g = path.gradient(x, t)?.map(|v| sign * v);
        Ok(match surf {
            Surface::Sphere { .. } => {
                let n = dot3(g, *x);
                [g[0] - n * x[0], g[1] - n * x[1], g[2] - n * x[2]]
            }
            _ => [g[0], g[1], 0.0],
        })
    };
    let step = |x: &[f64; 3], d: &[f64; 3], a: f64| surf.project([x[0] + a * d[0], x[1] + a * d[1], x[2] + a * d[2]]);

    let mut x = surf.project(x0);
    let mut fx = f(&x)?;
    let mut alpha = 0.1;
    for _ in 0..400 {
        let g = tangential(&x)?;
        let gg = dot3(g, g);
        if gg < 1e-26 {
            break;
        }
        let mut a = alpha;
        let mut moved = false;
        for _ in 0..60 {
            let y = step(&x, &g, a);
            let fy = f(&y)?;
            if fy >= fx + 1e-4 * a * gg {
                x = y;
                fx = fy;
                moved = true;
                break;
            }
            a *= 0.5;
        }
        if !moved {
            break;
        }
        alpha = (a * 2.0).min(10.0);
    }
    newton_polish(path, x, t, sign)
}

/// Newton iterations on the chart gradient, accepted only while they improve.
fn newton_polish(path: &HamiltonianPath, mut x: [f64; 3], t: f64, sign: f64) -> Result<([f64; 3], f64), ExprError> {
    let surf = path.surface;
    let mut fx = sign * path.value(&x, t)?;
    for _ in 0..20 {
        let e = surf.tangent_basis(&x);
        let cg = |y: &[f64; 3]| -> Result<[f64; 2], ExprError> {
            let g = path.gradient(y, t)?;
            Ok([sign * dot3(g, e[0]), sign * dot3(g, e[1])])
        };
        let g0 = cg(&x)?;
        if g0[0].hypot(g0[1]) < 1e-15 {
            break;
        }
        let h = 1e-5;
        let mut hs = [[0.0; 2]; 2];
        for j in 0..2 {
            let p = surf.project([x[0] + h * e[j][0], x[1] + h * e[j][1], x[2] + h * e[j][2]]);
            let m = surf.project([x[0] - h * e[j][0], x[1] - h * e[j][1], x[2] - h * e[j][2]]);
            let (gp, gm) = (cg(&p)?, cg(&m)?);
            for i in 0..2 {
                hs[i][j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
        // maximizing: need a negative definite Hessian
        if !(hs[0][0] < 0.0 && det > 0.0) {
            break;
        }
        let d0 = -(hs[1][1] * g0[0] - hs[0][1] * g0[1]) / det;
        let d1 = -(-hs[1][0] * g0[0] + hs[0][0] * g0[1]) / det;
        let y = surf.project([
            x[0] + d0 * e[0][0] + d1 * e[1][0],
            x[1] + d0 * e[0][1] + d1 * e[1][1],
            x[2] + d0 * e[0][2] + d1 * e[1][2],
        ]);
        let fy = sign * path.value(&y, t)?;
        if fy < fx {
            break;
        }
        let moved = norm3([y[0] - x[0], y[1] - x[1], y[2] - x[2]]);
        x = y;
        fx = fy;
        if moved < 1e-14 {
            break;
        }
    }
    Ok((x, fx))
}

fn best_of(path: &HamiltonianPath, t: f64, sign: f64, first: usize, count: usize) -> Result<Vec<([f64; 3], f64)>, ExprError> {
    (first..first + count)
        .into_par_iter()
        .map(|i| local_ascent(path, start_point(path, i), t, sign))
        .collect()
}

fn pick(results: &[([f64; 3], f64)]) -> ([f64; 3], f64) {
    // first strict best keeps the choice deterministic
    let mut best = results[0];
    for r in &results[1..] {
        if r.1 > best.1 {
            best = *r;
        }
    }
    best
}

fn candidates(surf: &Surface, results: &[([f64; 3], f64)], best: f64, tol: f64) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = Vec::new();
    for (x, v) in results {
        if *v >= best - tol && out.iter().all(|y| surf.distance(x, y) > 1e-6) {
            out.push(*x);
        }
    }
    out
}

/// Global extrema of `H_t` by multi-start local search.
pub fn extrema_at(path: &HamiltonianPath, t: f64, cfg: &SearchConfig) -> Result<Extrema, ExprError> {
    let mut max_runs = Vec::new();
    let mut min_runs = Vec::new();
    let mut all_max = Vec::new();
    let mut all_min = Vec::new();
    for r in 0..cfg.restarts.max(1) {
        let first = 1 + r * cfg.starts;
        let mx = best_of(path, t, 1.0, first, cfg.starts)?;
        let mn = best_of(path, t, -1.0, first, cfg.starts)?;
        max_runs.push(pick(&mx).1);
        min_runs.push(pick(&mn).1);
        all_max.extend(mx);
        all_min.extend(mn);
    }
    let spread = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let (argmax, max) = pick(&all_max);
    let (argmin, negmin) = pick(&all_min);
    let min = -negmin;
    let tol = 1e-8 * (1.0 + (max - min).abs());
    Ok(Extrema {
        t,
        max,
        argmax,
        min,
        argmin,
        max_candidates: candidates(&path.surface, &all_max, max, tol),
        min_candidates: candidates(&path.surface, &all_min, negmin, tol),
        spread: spread(&max_runs).max(spread(&min_runs)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::Rect;

    #[test]
    fn finds_both_extrema_of_a_dipole() {
        let p = HamiltonianPath::parse(
            Surface::Plane,
            "bump((x-1)^2+y^2; 0.5) - 2*bump((x+1)^2+y^2; 0.5)",
            Some(Rect::new([-2.0, -1.0], [2.0, 1.0])),
        )
        .unwrap();
        let e = extrema_at(&p, 0.0, &SearchConfig::default()).unwrap();
        assert_eq!(e.max, 1.0);
        assert_eq!(e.min, -2.0);
        assert!(e.spread < 1e-12);
    }

    #[test]
    fn sphere_height_extrema_to_high_accuracy() {
        let s = Surface::Sphere { area: 4.0 };
        let p = HamiltonianPath::parse(s, "2*z + 2 + 0.1*x*y", None).unwrap();
        let e = extrema_at(&p, 0.0, &SearchConfig::default()).unwrap();
        // max of 2z + 0.1xy on the sphere is slightly above 2 near the north pole
        assert!(e.max >= 4.0 && e.max < 4.01);
        let q = HamiltonianPath::parse(s, "2*z + 2", None).unwrap();
        let e = extrema_at(&q, 0.0, &SearchConfig::default()).unwrap();
        assert!((e.max - 4.0).abs() < 1e-12 && e.min.abs() < 1e-12, "{e:?}");
    }
}
