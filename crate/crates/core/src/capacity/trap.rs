//! Area-preserving profile maps between a disc of capacity `a` and the
//! rectangle `[0, a) × [0, 1)`: `(r, φ) ↦ (πr², φ/2π)` and its inverse.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CapacityError, CertificateKind, EmbeddingCertificate, Residual, Side};
use crate::util::fixed_panels;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Ball `B(a)` into trapezoid `T(a + ε)`.
    BallToTrapezoid,
    /// Trapezoid `T(a)` into ball `B(a + ε)`.
    TrapezoidToBall,
}

/// Profile map with its measured defects.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileMap {
    pub direction: Direction,
    pub a: f64,
    pub epsilon: f64,
    /// Width of the excluded strip along the slit `φ = 0` and around the centre.
    pub collar: f64,
    pub grid: usize,
    pub samples_off_slit: usize,
    /// `max |det Df − 1|` on the grid outside the collar.
    pub jacobian_defect: f64,
    /// `max (h_source − h_target ∘ f)`; nonpositive when the target profile dominates.
    pub domination_defect: f64,
    /// Distance of the image of the outer boundary from its target face.
    pub boundary_defect: f64,
    pub image_area: f64,
}

const FD_STEP: f64 = 1e-6;

impl ProfileMap {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        match self.direction {
            Direction::BallToTrapezoid => {
                let phi = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
                [PI * (p[0] * p[0] + p[1] * p[1]), phi / (2.0 * PI)]
            }
            Direction::TrapezoidToBall => {
                let r = (p[0].max(0.0) / PI).sqrt();
                let phi = 2.0 * PI * p[1];
                [r * phi.cos(), r * phi.sin()]
            }
        }
    }

    fn jacobian_det(&self, p: [f64; 2]) -> f64 {
        let h = FD_STEP;
        let d = |i: usize| {
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let (fa, fb) = (self.apply(a), self.apply(b));
            [(fa[0] - fb[0]) / (2.0 * h), (fa[1] - fb[1]) / (2.0 * h)]
        };
        let (c0, c1) = (d(0), d(1));
        c0[0] * c1[1] - c0[1] * c1[0]
    }

    /// Fiber capacity available over a source point.
    fn source_profile(&self, p: [f64; 2]) -> f64 {
        match self.direction {
            Direction::BallToTrapezoid => self.a - PI * (p[0] * p[0] + p[1] * p[1]),
            Direction::TrapezoidToBall => self.a - p[0],
        }
    }

    fn target_profile(&self, q: [f64; 2]) -> f64 {
        let b = self.a + self.epsilon;
        match self.direction {
            Direction::BallToTrapezoid => b - q[0],
            Direction::TrapezoidToBall => b - PI * (q[0] * q[0] + q[1] * q[1]),
        }
    }

    /// Grid points of the source region, each flagged when inside the collar.
    fn grid_points(&self) -> Vec<([f64; 2], bool)> {
        let n = self.grid;
        let mut out = Vec::with_capacity(n * n);
        let radius = (self.a / PI).sqrt();
        for i in 0..n {
            for j in 0..n {
                let (s, t) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                match self.direction {
                    Direction::BallToTrapezoid => {
                        let p = [radius * (2.0 * s - 1.0), radius * (2.0 * t - 1.0)];
                        let r = p[0].hypot(p[1]);
                        if r >= radius {
                            continue;
                        }
                        let near_slit = p[0] >= -self.collar && p[1].abs() < self.collar;
                        out.push((p, near_slit || r < self.collar));
                    }
                    Direction::TrapezoidToBall => {
                        let p = [self.a * s, t];
                        out.push((p, p[0] < self.collar));
                    }
                }
            }
        }
        out
    }

    fn measure(&mut self) {
        let pts = self.grid_points();
        let (jac, dom, count) = pts
            .par_iter()
            .map(|(p, in_collar)| {
                let dom = self.source_profile(*p) - self.target_profile(self.apply(*p));
                if *in_collar {
                    (0.0, dom, 0usize)
                } else {
                    ((self.jacobian_det(*p) - 1.0).abs(), dom, 1)
                }
            })
            .reduce(|| (0.0, f64::NEG_INFINITY, 0), |a, b| (a.0.max(b.0), a.1.max(b.1), a.2 + b.2));
        self.jacobian_defect = jac;
        self.domination_defect = dom;
        self.samples_off_slit = count;

        let mut boundary = 0.0f64;
        for k in 0..256 {
            let s = (k as f64 + 0.5) / 256.0;
            boundary = boundary.max(match self.direction {
                Direction::BallToTrapezoid => {
                    let r = (self.a / PI).sqrt();
                    let phi = 2.0 * PI * s;
                    (self.apply([r * phi.cos(), r * phi.sin()])[0] - self.a).abs()
                }
                Direction::TrapezoidToBall => {
                    let q = self.apply([self.a, s]);
                    (PI * (q[0] * q[0] + q[1] * q[1]) - self.a).abs()
                }
            });
        }
        self.boundary_defect = boundary;
        self.image_area = self.image_area_quadrature();
    }

    /// `∫ |det Df|` over the source in polar (or rectangle) coordinates.
    fn image_area_quadrature(&self) -> f64 {
        let h = 1e-7;
        match self.direction {
            Direction::BallToTrapezoid => {
                let radius = (self.a / PI).sqrt();
                let g = |r: f64, phi: f64| self.apply([r * phi.cos(), r * phi.sin()]);
                let mut sum = 0.0;
                for (r, wr) in fixed_panels(0.0, radius, 16) {
                    for (phi, wp) in fixed_panels(0.0, 2.0 * PI, 16) {
                        let (a, b) = (g(r + h, phi), g(r - h, phi));
                        let (c, d) = (g(r, phi + h), g(r, phi - h));
                        let dr = [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)];
                        let dp = [(c[0] - d[0]) / (2.0 * h), (c[1] - d[1]) / (2.0 * h)];
                        sum += wr * wp * (dr[0] * dp[1] - dr[1] * dp[0]).abs();
                    }
                }
                sum
            }
            Direction::TrapezoidToBall => {
                let mut sum = 0.0;
                // image is (r(u), 2πv) in polar form with area element r r'(u) 2π du dv
                let r = |u: f64| (u / PI).sqrt();
                for (u, wu) in fixed_panels(0.0, self.a, 16) {
                    let drdu = (r(u + h) - r(u - h)) / (2.0 * h);
                    sum += wu * (r(u) * drdu * 2.0 * PI).abs();
                }
                sum
            }
        }
    }

    pub fn certificate(&self) -> EmbeddingCertificate {
        EmbeddingCertificate {
            kind: CertificateKind::TrapezoidMap,
            path_label: format!("{:?}", self.direction),
            value: self.a,
            epsilon: self.epsilon,
            side: Side::Both,
            residuals: vec![
                Residual::at_most("jacobian-off-slit", self.jacobian_defect, 1e-6),
                Residual::at_most("domination", self.domination_defect, 1e-9),
                Residual::at_most("boundary-face", self.boundary_defect, 1e-9),
                Residual::at_most("image-area", (self.image_area - self.a).abs(), 1e-6),
            ],
            maps: vec![match self.direction {
                Direction::BallToTrapezoid => "(r, phi) -> (pi r^2, phi / 2pi)".into(),
                Direction::TrapezoidToBall => "(u, v) -> (sqrt(u/pi), 2pi v)".into(),
            }],
            notes: vec![format!(
                "defects measured on a {0}x{0} grid; a collar of width {1} around the slit is excluded from the Jacobian check",
                self.grid, self.collar
            )],
            degenerate: false,
        }
    }
}

/// Build and measure the profile map between `B(a)` and `T(a + ε)` (or the reverse).
pub fn trapezoid_profile_map(a: f64, epsilon: f64, direction: Direction, grid: usize) -> Result<ProfileMap, CapacityError> {
    if !(a > 0.0) || !(epsilon >= 0.0) || grid < 2 {
        return Err(CapacityError::InvalidParameter(format!("a = {a}, epsilon = {epsilon}, grid = {grid}")));
    }
    let scale = match direction {
        Direction::BallToTrapezoid => (a / PI).sqrt(),
        Direction::TrapezoidToBall => a,
    };
    let mut map = ProfileMap {
        direction,
        a,
        epsilon,
        collar: 1e-2 * scale,
        grid,
        samples_off_slit: 0,
        jacobian_defect: f64::NAN,
        domination_defect: f64::NAN,
        boundary_defect: f64::NAN,
        image_area: f64::NAN,
    };
    map.measure();
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_directions_preserve_area() {
        for dir in [Direction::BallToTrapezoid, Direction::TrapezoidToBall] {
            let m = trapezoid_profile_map(2.0, 0.1, dir, 200).unwrap();
            let c = m.certificate();
            assert!(c.all_pass(), "{dir:?}: {:?}", c.residuals);
            assert!(m.samples_off_slit > 20_000);
            assert!((m.domination_defect + 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let f = trapezoid_profile_map(1.0, 0.0, Direction::BallToTrapezoid, 4).unwrap();
        let g = trapezoid_profile_map(1.0, 0.0, Direction::TrapezoidToBall, 4).unwrap();
        let p = [0.2, -0.3];
        let q = g.apply(f.apply(p));
        assert!((q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14);
    }
}
