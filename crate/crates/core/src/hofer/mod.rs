//! Hofer length, fixed extrema and the geodesic criterion, the Calabi
//! invariant, and norm brackets.

pub mod search;
pub mod shear;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::ExprError;
use crate::hamiltonian::HamiltonianPath;
use crate::surface::SurfaceError;
use crate::util::{integrate_batched, Quad};
pub use search::{extrema_at, Extrema, SearchConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoferError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("extremum search unstable at t = {t}: restarts disagree by {spread:e}")]
    ExtremumSearchUnstable { t: f64, spread: f64 },
    #[error("path is not regular: max H_t = min H_t at t = {t}")]
    NotRegular { t: f64 },
    #[error("window [{0}, {1}] is not inside the path interval")]
    BadWindow(f64, f64),
    #[error("lower bound certifies `{certified}`, not `{path}`")]
    MismatchedEndpoint { certified: String, path: String },
}

/// Extrema at `t`, failing if restarts disagree.
pub fn checked_extrema(path: &HamiltonianPath, t: f64, cfg: &SearchConfig) -> Result<Extrema, HoferError> {
    let e = extrema_at(path, t, cfg)?;
    if e.spread > cfg.stability_tol {
        return Err(HoferError::ExtremumSearchUnstable { t, spread: e.spread });
    }
    Ok(e)
}

/// Absolute tolerance of the time quadrature in [`length`].
pub const LENGTH_TOL: f64 = 1e-10;

/// Hofer length `∫ (max H_t − min H_t) dt` with its error estimate.
pub fn length_quad(path: &HamiltonianPath, cfg: &SearchConfig) -> Result<Quad, HoferError> {
    let (a, b) = path.interval;
    if path.is_autonomous() {
        let e = checked_extrema(path, a, cfg)?;
        return Ok(Quad {
            value: (b - a) * e.oscillation(),
            error: 0.0,
            converged: true,
        });
    }
    integrate_batched(
        |ts| {
            ts.par_iter()
                .map(|&t| checked_extrema(path, t, cfg).map(|e| e.oscillation()))
                .collect::<Result<Vec<f64>, HoferError>>()
        },
        a,
        b,
        LENGTH_TOL,
        200,
    )
}

pub fn length(path: &HamiltonianPath) -> Result<f64, HoferError> {
    Ok(length_quad(path, &SearchConfig::default())?.value)
}

/// Oscillation norm `max_t (max H_t − min H_t)` over `n + 1` sample times.
pub fn sup_norm(path: &HamiltonianPath, n: usize, cfg: &SearchConfig) -> Result<f64, HoferError> {
    Ok(extremum_track(path, path.interval, n, cfg)?
        .iter()
        .map(|e| e.oscillation())
        .fold(0.0, f64::max))
}

/// Extrema at `n + 1` equally spaced times of `window`.
pub fn extremum_track(path: &HamiltonianPath, window: (f64, f64), n: usize, cfg: &SearchConfig) -> Result<Vec<Extrema>, HoferError> {
    (0..=n)
        .into_par_iter()
        .map(|k| {
            let t = window.0 + (window.1 - window.0) * k as f64 / n.max(1) as f64;
            checked_extrema(path, t, cfg)
        })
        .collect()
}

/// Number of sampled times per window in [`fixed_extrema`].
pub const WINDOW_SAMPLES: usize = 32;

/// Fixed maximum and minimum points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FixedExtrema {
    pub max_point: [f64; 3],
    pub min_point: [f64; 3],
}

fn survivor(path: &HamiltonianPath, track: &[Extrema], tol: f64, maximum: bool) -> Result<Option<[f64; 3]>, HoferError> {
    for e in track {
        let cands = if maximum { &e.max_candidates } else { &e.min_candidates };
        'cand: for c in cands {
            for other in track {
                let v = path.value(c, other.t)?;
                let ok = if maximum { v >= other.max - tol } else { v <= other.min + tol };
                if !ok {
                    continue 'cand;
                }
            }
            return Ok(Some(*c));
        }
    }
    Ok(None)
}

/// Points attaining the max (and min) of `H_t` for every sampled `t` in `window`,
/// within `1e-7·‖H‖`; `None` if either has no surviving candidate.
pub fn fixed_extrema(path: &HamiltonianPath, window: (f64, f64)) -> Result<Option<FixedExtrema>, HoferError> {
    let track = window_track(path, window)?;
    fixed_from_track(path, &track)
}

fn window_track(path: &HamiltonianPath, window: (f64, f64)) -> Result<Vec<Extrema>, HoferError> {
    let (a, b) = path.interval;
    if window.0 < a - 1e-12 || window.1 > b + 1e-12 || window.0 > window.1 {
        return Err(HoferError::BadWindow(window.0, window.1));
    }
    extremum_track(path, window, WINDOW_SAMPLES, &SearchConfig::default())
}

fn fixed_from_track(path: &HamiltonianPath, track: &[Extrema]) -> Result<Option<FixedExtrema>, HoferError> {
    let norm = track.iter().map(|e| e.oscillation()).fold(0.0, f64::max);
    let tol = 1e-7 * norm;
    let max_point = survivor(path, track, tol, true)?;
    let min_point = survivor(path, track, tol, false)?;
    Ok(match (max_point, min_point) {
        (Some(max_point), Some(min_point)) => Some(FixedExtrema { max_point, min_point }),
        _ => None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowVerdict {
    pub window: (f64, f64),
    pub quasi_autonomous: bool,
    pub fixed: Option<FixedExtrema>,
}

/// Per-window quasi-autonomy verdicts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeodesicVerdict {
    pub windows: Vec<WindowVerdict>,
    /// Every window has a fixed maximum and a fixed minimum.
    pub satisfies_criterion: bool,
    pub note: String,
}

pub const GEODESIC_NOTE: &str = "fixed maximum and fixed minimum on every window: necessary and sufficient for a regular path to be a geodesic";

/// Apply the fixed-extremum criterion on `windows` uniform sub-windows.
pub fn geodesic_check(path: &HamiltonianPath, windows: usize) -> Result<GeodesicVerdict, HoferError> {
    let (a, b) = path.interval;
    let n = windows.max(1);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let w = (a + (b - a) * k as f64 / n as f64, a + (b - a) * (k + 1) as f64 / n as f64);
        let track = window_track(path, w)?;
        let scale = track.iter().map(|e| e.max.abs().max(e.min.abs())).fold(0.0, f64::max);
        if let Some(e) = track.iter().find(|e| e.oscillation() <= 1e-12 * (1.0 + scale)) {
            return Err(HoferError::NotRegular { t: e.t });
        }
        let fixed = fixed_from_track(path, &track)?;
        out.push(WindowVerdict {
            window: w,
            quasi_autonomous: fixed.is_some(),
            fixed,
        });
    }
    Ok(GeodesicVerdict {
        satisfies_criterion: out.iter().all(|w| w.quasi_autonomous),
        windows: out,
        note: GEODESIC_NOTE.into(),
    })
}

/// Summary of a path: length and sampled extremum curves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSummary {
    pub label: String,
    pub length: f64,
    pub length_error: f64,
    pub track: Vec<Extrema>,
    pub quasi_autonomous: bool,
    pub windows: usize,
}

impl PathSummary {
    /// CSV `t,max,min`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,max,min\n");
        for e in &self.track {
            s.push_str(&format!("{},{},{}\n", e.t, e.max, e.min));
        }
        s
    }
}

pub fn summarize(path: &HamiltonianPath, samples: usize) -> Result<PathSummary, HoferError> {
    let cfg = SearchConfig::default();
    let q = length_quad(path, &cfg)?;
    let track = extremum_track(path, path.interval, samples, &cfg)?;
    Ok(PathSummary {
        label: path.label.clone(),
        length: q.value,
        length_error: q.error,
        quasi_autonomous: fixed_from_track(path, &track)?.is_some(),
        track,
        windows: 1,
    })
}

/// `∫∫ H_t ω dt` by nested quadrature.
pub fn calabi(path: &HamiltonianPath) -> Result<Quad, HoferError> {
    let (a, b) = path.interval;
    let surf = path.surface;
    let bbox = path.support_rect();
    let space = |t: f64| surf.integrate_field_dyn(&*path.hamiltonian, t, bbox, 1e-11);
    if path.is_autonomous() {
        let q = space(a)?;
        return Ok(Quad {
            value: (b - a) * q.value,
            error: (b - a) * q.error,
            converged: q.converged,
        });
    }
    integrate_batched(
        |ts| {
            ts.par_iter()
                .map(|&t| space(t).map(|q| q.value).map_err(HoferError::from))
                .collect::<Result<Vec<f64>, HoferError>>()
        },
        a,
        b,
        1e-10,
        200,
    )
}

/// A certified lower bound on the norm of a path's endpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBound {
    pub value: f64,
    /// Label of the path whose endpoint the bound is about.
    pub path_label: String,
    pub source: String,
}

/// `lower ≤ ‖φ‖ ≤ upper`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormBracket {
    pub upper: f64,
    pub lower: f64,
    pub gap: f64,
    pub equality: bool,
    pub notes: Vec<String>,
}

/// Relative gap under which a bracket is declared an equality.
pub const BRACKET_TOL: f64 = 1e-6;

pub fn norm_bracket(upper: &HamiltonianPath, lower: Option<&LowerBound>) -> Result<NormBracket, HoferError> {
    let len = length(upper)?;
    let mut notes = vec![format!("upper bound: length of `{}`", upper.label)];
    let lo = match lower {
        Some(c) => {
            if c.path_label != upper.label {
                return Err(HoferError::MismatchedEndpoint {
                    certified: c.path_label.clone(),
                    path: upper.label.clone(),
                });
            }
            notes.push(format!("lower bound: {}", c.source));
            c.value
        }
        None => 0.0,
    };
    let gap = len - lo;
    Ok(NormBracket {
        upper: len,
        lower: lo,
        gap,
        equality: gap <= BRACKET_TOL * len,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{Rect, Surface};
    use std::f64::consts::PI;

    fn plane(src: &str, r: Rect) -> HamiltonianPath {
        HamiltonianPath::parse(Surface::Plane, src, Some(r)).unwrap()
    }

    #[test]
    fn lengths() {
        assert_eq!(length(&plane("0", Rect::square(1.0))).unwrap(), 0.0);
        assert_eq!(length(&plane("bump(x^2+y^2; 1)", Rect::square(1.0))).unwrap(), 1.0);
        let l = length(&plane("2*t*bump(x^2+y^2; 1)", Rect::square(1.0))).unwrap();
        assert!((l - 1.0).abs() < 1e-10, "{l}");
    }

    #[test]
    fn length_symmetric_and_reparametrization_invariant() {
        let r = Rect::new([-2.0, -1.5], [3.0, 1.5]);
        let h = plane("bump((x - t)^2 + y^2; 1)*(1 + t)", r);
        let neg = h.affine(-1.0, 0.0, "neg");
        let (lh, ln) = (length(&h).unwrap(), length(&neg).unwrap());
        assert!((lh - ln).abs() < 1e-10);
        // β(t) = t², β'(t) = 2t
        let k = plane("2*t*bump((x - t^2)^2 + y^2; 1)*(1 + t^2)", r);
        assert!((length(&k).unwrap() - lh).abs() < 1e-7);
    }

    #[test]
    fn fixed_extrema_cases() {
        let g = plane("bump(x^2+y^2; 1)", Rect::square(1.0));
        let f = fixed_extrema(&g, (0.0, 1.0)).unwrap().unwrap();
        assert_eq!(g.value(&f.max_point, 0.0).unwrap(), 1.0);
        let scaled = plane("(1+t)*bump(x^2+y^2; 1)", Rect::square(1.0));
        let fs = fixed_extrema(&scaled, (0.0, 1.0)).unwrap().unwrap();
        assert_eq!(scaled.value(&fs.max_point, 0.5).unwrap(), 1.5);
        let travel = plane(
            "exp(neg((x-t)^2+y^2))*bump((x-t)^2+y^2 - 1; 1)",
            Rect::new([-2.0, -2.0], [3.0, 2.0]),
        );
        for w in [(0.0, 0.11), (0.4, 0.6), (0.5, 1.0)] {
            assert!(fixed_extrema(&travel, w).unwrap().is_none(), "{w:?}");
        }
    }

    #[test]
    fn geodesic_verdicts() {
        let r = Rect::new([-2.0, -2.0], [3.0, 2.0]);
        let auto = plane("bump(x^2+y^2; 1)*(2 + x)", Rect::square(1.0));
        assert!(geodesic_check(&auto, 8).unwrap().satisfies_criterion);
        let travel = plane("exp(neg((x-t)^2+y^2))*bump((x-t)^2+y^2 - 1; 1)", r);
        let v = geodesic_check(&travel, 8).unwrap();
        assert!(v.windows.iter().all(|w| !w.quasi_autonomous));
        let concat = plane(
            "exp(neg((x-c)^2+y^2))*bump((x-c)^2+y^2 - 1; 1)".replace('c', "(1 - bump(t - 0.5; 0.5))").as_str(),
            r,
        );
        let v = geodesic_check(&concat, 8).unwrap();
        let verdicts: Vec<bool> = v.windows.iter().map(|w| w.quasi_autonomous).collect();
        assert_eq!(verdicts, [true, true, true, true, false, false, false, false]);
        assert!(matches!(
            geodesic_check(&plane("0", Rect::square(1.0)), 4),
            Err(HoferError::NotRegular { .. })
        ));
    }

    #[test]
    fn calabi_values() {
        assert_eq!(calabi(&plane("0", Rect::square(1.0))).unwrap().value, 0.0);
        // ∫ bump(r²; R) = πR/2, so R = 1/π gives 1/2
        let r = 1.0 / PI;
        let h = plane(&format!("bump(x^2+y^2; {r})"), Rect::square(0.6));
        let c = calabi(&h).unwrap();
        assert!((c.value - 0.5).abs() < 1e-9, "{c:?}");
        let k = plane(&format!("2*t*bump(x^2+y^2; {r})"), Rect::square(0.6));
        assert!((calabi(&k).unwrap().value - c.value).abs() < 1e-8);
    }

    #[test]
    fn brackets() {
        let z = plane("0", Rect::square(1.0));
        let b = norm_bracket(&z, None).unwrap();
        assert!(b.equality && b.upper == 0.0);
        let s = Surface::Sphere { area: 4.0 };
        let f = HamiltonianPath::parse(s, "2*z + 2", None).unwrap();
        let lb = LowerBound { value: 3.8, path_label: f.label.clone(), source: "test".into() };
        let b = norm_bracket(&f, Some(&lb)).unwrap();
        assert!((b.gap - 0.2).abs() < 1e-9 && !b.equality);
        let other = LowerBound { path_label: "other".into(), ..lb };
        assert!(matches!(norm_bracket(&f, Some(&other)), Err(HoferError::MismatchedEndpoint { .. })));
    }
}
