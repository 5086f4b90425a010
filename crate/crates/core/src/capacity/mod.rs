//! Capacity certificates: explicit embeddings whose residuals are checked
//! numerically, each certifying a lower bound on a capacity.

mod ball;
mod hz;
mod local;
mod trap;

use serde::Serialize;
use thiserror::Error;

use crate::expr::ExprError;
use crate::flow::FlowError;
use crate::hofer::{HoferError, LowerBound};
use crate::orbits::{OrbitError, OrbitWitness};
use crate::surface::SurfaceError;

pub use ball::{cg_dim2_certificate, BallOptions};
pub use hz::{chz_certificate, HzOptions, KOrbit};
pub use local::{local_ball_certificate, local_ball_threshold, LocalOptions};
pub use trap::{trapezoid_profile_map, Direction, ProfileMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Hofer(#[from] HoferError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("precondition failed: {reason}")]
    PreconditionFailed {
        reason: String,
        witness: Option<OrbitWitness>,
    },
    #[error("the function K has a closed orbit of period {} < 1", .0.period)]
    ShortOrbitInK(KOrbit),
    #[error("H has a closed orbit of period {:?} < 1", .0.period)]
    ShortOrbit(OrbitWitness),
    #[error("no gradient path: {0}")]
    NoGradientPath(String),
    #[error("level {level} has period {period} < 1")]
    LevelTooShort { level: f64, period: f64 },
    #[error("containment fails at c = {c}: margin {margin:e} at {sample:?}")]
    ContainmentFailed { c: f64, sample: [f64; 3], margin: f64 },
    #[error("Hamiltonian is not regular")]
    NotRegular,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    HzFunction,
    FiberedBall,
    TrapezoidMap,
    LocalBall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Under,
    Over,
    Both,
}

/// A measured defect against its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Residual {
    /// Passes when `value ≤ tol`.
    pub fn at_most(name: &str, value: f64, tol: f64) -> Self {
        Residual {
            name: name.into(),
            value,
            tol,
            pass: value <= tol,
        }
    }

    /// Informational entry that never fails.
    pub fn info(name: &str, value: f64) -> Self {
        Residual {
            name: name.into(),
            value,
            tol: f64::INFINITY,
            pass: true,
        }
    }
}

/// Evidence for "capacity ≥ value".
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddingCertificate {
    pub kind: CertificateKind,
    pub path_label: String,
    pub value: f64,
    pub epsilon: f64,
    pub side: Side,
    pub residuals: Vec<Residual>,
    /// Constituent maps, as formulas.
    pub maps: Vec<String>,
    pub notes: Vec<String>,
    pub degenerate: bool,
}

impl EmbeddingCertificate {
    pub fn all_pass(&self) -> bool {
        self.residuals.iter().all(|r| r.pass)
    }

    pub fn residual(&self, name: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.name == name)
    }

    pub fn lower_bound(&self) -> LowerBound {
        LowerBound {
            value: self.value,
            path_label: self.path_label.clone(),
            source: format!("{:?} certificate ({:?} side), epsilon {}", self.kind, self.side, self.epsilon),
        }
    }

    fn check(self) -> Result<Self, CapacityError> {
        if let Some(r) = self.residuals.iter().find(|r| !r.pass) {
            return Err(CapacityError::PreconditionFailed {
                reason: format!("residual {} = {:e} exceeds {:e}", r.name, r.value, r.tol),
                witness: None,
            });
        }
        Ok(self)
    }
}
