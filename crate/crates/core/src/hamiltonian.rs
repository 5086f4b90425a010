//! Hamiltonian functions and time-dependent Hamiltonian paths on a surface.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Domain, ExprError, ScalarField, Var};
use crate::surface::{Rect, Surface};
use crate::util::halton;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("Hamiltonian is not compactly supported in {support:?}: |H| = {value:e} at {at:?}")]
    NotCompact { support: Rect, at: [f64; 3], value: f64 },
    #[error("Hamiltonian is not periodic on the torus: defect {0:e}")]
    NotPeriodic(f64),
    #[error("plane paths need a support box")]
    MissingSupport,
    #[error("invalid time interval [{0}, {1}]")]
    BadInterval(f64, f64),
}

/// A (possibly time-dependent) function on the state space of a surface.
///
/// States are `[x, y, 0]` on flat surfaces and ambient unit vectors on the sphere;
/// gradients and Hessians are with respect to those three components.
pub trait Hamiltonian: Send + Sync {
    fn value(&self, s: &[f64; 3], t: f64) -> Result<f64, ExprError>;
    fn gradient(&self, s: &[f64; 3], t: f64) -> Result<[f64; 3], ExprError>;

    fn hessian(&self, s: &[f64; 3], t: f64) -> Result<[[f64; 3]; 3], ExprError> {
        let h = 1e-5;
        let mut out = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut p = *s;
            let mut m = *s;
            p[j] += h;
            m[j] -= h;
            let gp = self.gradient(&p, t)?;
            let gm = self.gradient(&m, t)?;
            for i in 0..3 {
                out[i][j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        Ok(out)
    }

    fn is_autonomous(&self) -> bool;

    /// Human-readable description (DSL source where available).
    fn describe(&self) -> String;
}

impl Hamiltonian for ScalarField {
    fn value(&self, s: &[f64; 3], t: f64) -> Result<f64, ExprError> {
        self.eval_at(&[s[0], s[1], s[2], t])
    }

    fn gradient(&self, s: &[f64; 3], t: f64) -> Result<[f64; 3], ExprError> {
        self.gradient_at(&[s[0], s[1], s[2], t])
    }

    fn hessian(&self, s: &[f64; 3], t: f64) -> Result<[[f64; 3]; 3], ExprError> {
        self.hessian_at(&[s[0], s[1], s[2], t])
    }

    fn is_autonomous(&self) -> bool {
        !self.depends_on(Var::T)
    }

    fn describe(&self) -> String {
        self.source().to_string()
    }
}

/// `c · H(s, t) + offset`.
pub struct Affine {
    pub inner: Arc<dyn Hamiltonian>,
    pub scale: f64,
    pub offset: f64,
}

impl Hamiltonian for Affine {
    fn value(&self, s: &[f64; 3], t: f64) -> Result<f64, ExprError> {
        Ok(self.scale * self.inner.value(s, t)? + self.offset)
    }

    fn gradient(&self, s: &[f64; 3], t: f64) -> Result<[f64; 3], ExprError> {
        Ok(self.inner.gradient(s, t)?.map(|g| self.scale * g))
    }

    fn hessian(&self, s: &[f64; 3], t: f64) -> Result<[[f64; 3]; 3], ExprError> {
        Ok(self.inner.hessian(s, t)?.map(|r| r.map(|v| self.scale * v)))
    }

    fn is_autonomous(&self) -> bool {
        self.inner.is_autonomous()
    }

    fn describe(&self) -> String {
        format!("{} * ({}) + {}", self.scale, self.inner.describe(), self.offset)
    }
}

/// Where the Hamiltonian may be nonzero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    /// Closed surface: no support constraint.
    Whole,
    /// Plane: `H` and `dH` vanish outside the box.
    Rect(Rect),
}

/// A Hamiltonian path `H_t`, `t ∈ [a, b]`, on a surface.
#[derive(Clone)]
pub struct HamiltonianPath {
    pub surface: Surface,
    pub hamiltonian: Arc<dyn Hamiltonian>,
    pub interval: (f64, f64),
    pub support: Support,
    /// `inf_x H_t = 0` has been imposed.
    pub normalized: bool,
    /// Identifies the path in reports and certificates.
    pub label: String,
}

impl fmt::Debug for HamiltonianPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianPath")
            .field("surface", &self.surface)
            .field("H", &self.hamiltonian.describe())
            .field("interval", &self.interval)
            .field("support", &self.support)
            .field("label", &self.label)
            .finish()
    }
}

/// Variables a DSL Hamiltonian may use on a surface.
pub fn domain_for(surface: &Surface) -> Domain {
    match surface {
        Surface::Sphere { .. } => Domain::with_vars(&[Var::X, Var::Y, Var::Z, Var::T])
            .bounded(Var::X, -1.0, 1.0)
            .bounded(Var::Y, -1.0, 1.0),
        Surface::Torus { .. } => Domain::with_vars(&[Var::X, Var::Y, Var::T])
            .bounded(Var::X, 0.0, 1.0)
            .bounded(Var::Y, 0.0, 1.0),
        Surface::Plane => Domain::with_vars(&[Var::X, Var::Y, Var::T]),
    }
}

impl HamiltonianPath {
    /// Path on `[0, 1]` from DSL source. Plane paths need `support`.
    pub fn parse(surface: Surface, src: &str, support: Option<Rect>) -> Result<Self, PathError> {
        let f = ScalarField::parse_in(src, &domain_for(&surface))?;
        Self::from_field(surface, f, support)
    }

    pub fn from_field(surface: Surface, f: ScalarField, support: Option<Rect>) -> Result<Self, PathError> {
        let label = f.source().to_string();
        Self::new(surface, Arc::new(f), support, label)
    }

    pub fn new(
        surface: Surface,
        h: Arc<dyn Hamiltonian>,
        support: Option<Rect>,
        label: String,
    ) -> Result<Self, PathError> {
        let support = match (surface, support) {
            (Surface::Plane, Some(r)) => Support::Rect(r),
            (Surface::Plane, None) => return Err(PathError::MissingSupport),
            _ => Support::Whole,
        };
        let p = HamiltonianPath {
            surface,
            hamiltonian: h,
            interval: (0.0, 1.0),
            support,
            normalized: false,
            label,
        };
        p.check()?;
        Ok(p)
    }

    pub fn with_interval(mut self, a: f64, b: f64) -> Result<Self, PathError> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(PathError::BadInterval(a, b));
        }
        self.interval = (a, b);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn is_autonomous(&self) -> bool {
        self.hamiltonian.is_autonomous()
    }

    pub fn value(&self, s: &[f64; 3], t: f64) -> Result<f64, ExprError> {
        self.hamiltonian.value(s, t)
    }

    pub fn gradient(&self, s: &[f64; 3], t: f64) -> Result<[f64; 3], ExprError> {
        self.hamiltonian.gradient(s, t)
    }

    /// `X_{H_t}(s)`.
    pub fn field(&self, s: &[f64; 3], t: f64) -> Result<[f64; 3], ExprError> {
        let g = self.hamiltonian.gradient(s, t)?;
        Ok(self.surface.vector_field(s, &g))
    }

    pub fn support_rect(&self) -> Option<Rect> {
        match self.support {
            Support::Rect(r) => Some(r),
            Support::Whole => None,
        }
    }

    /// Sampled compact-support check (plane) and periodicity check (torus).
    pub fn check(&self) -> Result<(), PathError> {
        let (a, b) = self.interval;
        match (self.surface, self.support) {
            (Surface::Plane, Support::Rect(r)) => {
                let outer = r.grow(0.5);
                for i in 0..400 {
                    let p = outer.at(halton(i + 1, 2), halton(i + 1, 3));
                    if r.contains(p) {
                        continue;
                    }
                    let s = [p[0], p[1], 0.0];
                    let t = a + (b - a) * halton(i + 1, 5);
                    let v = self.value(&s, t)?;
                    let g = self.gradient(&s, t)?;
                    let worst = v.abs().max(g[0].abs()).max(g[1].abs());
                    if worst > 1e-12 {
                        return Err(PathError::NotCompact { support: r, at: s, value: worst });
                    }
                }
            }
            (Surface::Torus { .. }, _) => {
                let mut worst = 0.0f64;
                for i in 0..200 {
                    let s = [halton(i + 1, 2), halton(i + 1, 3), 0.0];
                    let t = a + (b - a) * halton(i + 1, 5);
                    let v = self.value(&s, t)?;
                    for shift in [[1.0, 0.0], [0.0, 1.0]] {
                        let w = self.value(&[s[0] + shift[0], s[1] + shift[1], 0.0], t)?;
                        worst = worst.max((w - v).abs());
                    }
                }
                if worst > 1e-9 {
                    return Err(PathError::NotPeriodic(worst));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `c · H + offset` with the same support.
    pub fn affine(&self, scale: f64, offset: f64, label: impl Into<String>) -> HamiltonianPath {
        HamiltonianPath {
            hamiltonian: Arc::new(Affine {
                inner: self.hamiltonian.clone(),
                scale,
                offset,
            }),
            label: label.into(),
            normalized: false,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_violation_is_reported() {
        let ok = HamiltonianPath::parse(Surface::Plane, "bump(x^2+y^2; 1)", Some(Rect::square(1.0)));
        assert!(ok.is_ok());
        let bad = HamiltonianPath::parse(Surface::Plane, "x^2", Some(Rect::square(1.0)));
        assert!(matches!(bad, Err(PathError::NotCompact { .. })));
        assert!(matches!(
            HamiltonianPath::parse(Surface::Plane, "0", None),
            Err(PathError::MissingSupport)
        ));
    }

    #[test]
    fn torus_requires_periodicity() {
        let t = Surface::Torus { area: 1.0 };
        assert!(HamiltonianPath::parse(t, "(1 - cos(2*3.141592653589793*x))/2", None).is_ok());
        assert!(matches!(
            HamiltonianPath::parse(t, "x", None),
            Err(PathError::NotPeriodic(_))
        ));
        assert!(matches!(
            HamiltonianPath::parse(t, "z", None),
            Err(PathError::Expr(ExprError::UnknownVariable { .. }))
        ));
    }

    #[test]
    fn affine_rescales_gradient() {
        let p = HamiltonianPath::parse(Surface::Plane, "bump(x^2+y^2; 1)", Some(Rect::square(1.0))).unwrap();
        let q = p.affine(-2.0, 3.0, "q");
        let s = [0.3, 0.4, 0.0];
        assert!((q.value(&s, 0.0).unwrap() - (3.0 - 2.0 * p.value(&s, 0.0).unwrap())).abs() < 1e-15);
        let (gp, gq) = (p.gradient(&s, 0.0).unwrap(), q.gradient(&s, 0.0).unwrap());
        assert_eq!(gq[0], -2.0 * gp[0]);
    }
}
