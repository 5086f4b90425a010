//! Shear flows `H = f(x)` on the torus: lifted flow and the strip region they disjoin.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::ExprError;
use crate::flow::{flow_to, FlowError};
use crate::hamiltonian::HamiltonianPath;
use crate::surface::{lift_to_cover, Surface, SurfaceError};
use crate::util::{fixed_panels, golden_min, halton};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShearError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("not a shear: {0}")]
    NotShear(String),
}

const ODE_TOL: f64 = 1e-12;
/// Largest lift step, kept well inside the ambiguity threshold.
const LIFT_STEP: f64 = 0.2;

fn check_shear(path: &HamiltonianPath) -> Result<f64, ShearError> {
    let Surface::Torus { area } = path.surface else {
        return Err(ShearError::NotShear("surface is not a torus".into()));
    };
    if !path.is_autonomous() {
        return Err(ShearError::NotShear("H depends on t".into()));
    }
    for i in 1..=64 {
        let g = path.gradient(&[halton(i, 2), halton(i, 3), 0.0], 0.0)?;
        if g[1].abs() > 1e-12 {
            return Err(ShearError::NotShear(format!("∂H/∂y = {:e}", g[1])));
        }
    }
    Ok(area)
}

/// Lift of `φ_t(x, y)` to ℝ² along the sampled trajectory, starting at `(x, y)`.
pub fn lifted_flow(path: &HamiltonianPath, x: [f64; 2], t: f64) -> Result<[f64; 2], ShearError> {
    let speed = path.field(&[x[0], x[1], 0.0], 0.0)?;
    let v = speed[0].abs().max(speed[1].abs());
    let steps = ((t.abs() * v / LIFT_STEP).ceil() as usize).max(1);
    let mut p = [x[0], x[1], 0.0];
    let mut samples = vec![x];
    for k in 0..steps {
        let (a, b) = (t * k as f64 / steps as f64, t * (k + 1) as f64 / steps as f64);
        p = flow_to(path, p, a, b, ODE_TOL)?;
        samples.push([p[0].rem_euclid(1.0), p[1].rem_euclid(1.0)]);
    }
    Ok(*lift_to_cover(&samples, x)?.last().unwrap())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiftReport {
    pub t: f64,
    pub grid: usize,
    /// `max |φ̃_t(x, y) − (x, y − t ∂_xH(x)/A)|`.
    pub max_defect: f64,
}

/// Compares the lifted flow with `(x, y − t f′(x)/A)` on a `grid × grid` lattice.
pub fn shear_lift_defect(path: &HamiltonianPath, t: f64, grid: usize) -> Result<LiftReport, ShearError> {
    let area = check_shear(path)?;
    let defects: Result<Vec<f64>, ShearError> = (0..grid * grid)
        .into_par_iter()
        .map(|k| {
            let x = [(k / grid) as f64 / grid as f64, (k % grid) as f64 / grid as f64];
            let fp = path.gradient(&[x[0], x[1], 0.0], 0.0)?[0];
            let l = lifted_flow(path, x, t)?;
            Ok((l[0] - x[0]).abs().max((l[1] - (x[1] - t * fp / area)).abs()))
        })
        .collect();
    Ok(LiftReport {
        t,
        grid,
        max_defect: defects?.into_iter().fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DisjoinReport {
    pub t: f64,
    /// Strip `(a, b)` between the minimum and the maximum of `f`.
    pub strip: (f64, f64),
    pub margin: f64,
    pub area: f64,
    /// `t·(f(b) − f(a))`.
    pub target: f64,
    /// `|area − target| / target`.
    pub relative_gap: f64,
    /// Smallest distance of a sampled image point into the region (negative if inside).
    pub min_clearance: f64,
    pub samples: usize,
    pub disjoint: bool,
}

/// The region `U = {a + m < x < b − m, m < y < h(x) − m}` of the lifted strip,
/// where `h(x)` is the vertical drift of `φ̃_t` and `f` increases on `(a, b)`.
pub fn disjoined_strip(path: &HamiltonianPath, t: f64, margin: f64, samples: usize) -> Result<DisjoinReport, ShearError> {
    check_shear(path)?;
    let f = |x: f64| path.value(&[x.rem_euclid(1.0), 0.0, 0.0], 0.0).unwrap_or(f64::NAN);
    // coarse scan then golden refinement of the extrema of f
    let n = 256;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let imin = (0..n).min_by(|&i, &j| f(xs[i]).total_cmp(&f(xs[j]))).unwrap();
    let imax = (0..n).max_by(|&i, &j| f(xs[i]).total_cmp(&f(xs[j]))).unwrap();
    let h = 1.0 / n as f64;
    let a = golden_min(f, xs[imin] - h, xs[imin] + h, 1e-10).0;
    let mut b = golden_min(|x| -f(x), xs[imax] - h, xs[imax] + h, 1e-10).0;
    if b < a {
        b += 1.0;
    }
    let drift = |x: f64| -> Result<f64, ShearError> {
        let l = lifted_flow(path, [x.rem_euclid(1.0), 0.5], t)?;
        Ok(0.5 - l[1])
    };
    let (lo, hi) = (a + margin, b - margin);
    let nodes = fixed_panels(lo, hi, 8);
    let heights: Result<Vec<f64>, ShearError> = nodes.par_iter().map(|&(x, _)| drift(x)).collect();
    let heights = heights?;
    let area: f64 = nodes.iter().zip(&heights).map(|(&(_, w), &hgt)| w * (hgt - 2.0 * margin).max(0.0)).sum();
    let target = t * (f(b) - f(a));
    let clearances: Result<Vec<f64>, ShearError> = (1..=samples)
        .into_par_iter()
        .map(|i| {
            let x = lo + (hi - lo) * halton(i, 2);
            let top = drift(x)? - margin;
            if top <= margin {
                return Ok(f64::INFINITY);
            }
            let y = margin + (top - margin) * halton(i, 3);
            let l = lifted_flow(path, [x, y.rem_euclid(1.0)], t)?;
            let img = [l[0], l[1] + (y - y.rem_euclid(1.0))];
            if img[0] <= lo || img[0] >= hi {
                return Ok(f64::INFINITY);
            }
            let top_img = drift(img[0])? - margin;
            // clearance below the floor or above the roof of U
            Ok((margin - img[1]).max(img[1] - top_img))
        })
        .collect();
    let min_clearance = clearances?.into_iter().fold(f64::INFINITY, f64::min);
    Ok(DisjoinReport {
        t,
        strip: (a, b),
        margin,
        area,
        target,
        relative_gap: (area - target).abs() / target,
        min_clearance,
        samples,
        disjoint: min_clearance > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear() -> HamiltonianPath {
        let w = 2.0 * std::f64::consts::PI;
        HamiltonianPath::parse(Surface::Torus { area: 1.0 }, &format!("(1 - cos({w} * x)) / 2"), None).unwrap()
    }

    #[test]
    fn lift_is_a_vertical_shear() {
        for t in [1.0, 2.0, 4.0] {
            let r = shear_lift_defect(&shear(), t, 12).unwrap();
            assert!(r.max_defect < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn strip_area_approaches_t() {
        for t in [1.0, 4.0] {
            let r = disjoined_strip(&shear(), t, 1e-3, 100).unwrap();
            assert!(r.disjoint, "{r:?}");
            assert!((r.target - t).abs() < 1e-9);
            assert!(r.relative_gap < 0.02, "{r:?}");
        }
    }

    #[test]
    fn non_shear_is_rejected() {
        let p = HamiltonianPath::parse(Surface::Torus { area: 1.0 }, "sin(6.283185307179586 * y)", None).unwrap();
        assert!(matches!(shear_lift_defect(&p, 1.0, 4), Err(ShearError::NotShear(_))));
    }
}
