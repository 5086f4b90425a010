//! Moser splitting of a quasi-cylinder form on a grid over `T² × [−1, 1]²`.
//!
//! Coordinates are `(x, y, u, v)` with `x, y` periodic. A form in normal
//! position is `τ = ω + ρσ + du∧α + dv∧β`; the path `τ_t = τ₀ + t(τ − τ₀)`
//! from the split form `τ₀ = ω + σ` is integrated by the Moser vector field
//! `X_t = T_t⁻¹ λ` where `dλ = τ − τ₀` and `λ` vanishes near `∂U`.

use std::f64::consts::PI;
use std::io::{self, Read, Write};

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::Serialize;

use super::QuasiCylError;
use crate::expr::bump_value;

/// Component order of a 2-form: `xy, xu, xv, yu, yv, uv`.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// A 2-form sampled on an `n⁴` grid: `x_i = i/n`, `u_i = −1 + 2i/(n − 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteTwoForm {
    pub n: usize,
    /// `values[c][node]`, node index row-major in `(x, y, u, v)`.
    pub values: [Vec<f64>; 6],
}

impl DiscreteTwoForm {
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if axis < 2 {
            i as f64 / self.n as f64
        } else {
            -1.0 + 2.0 * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        if axis < 2 {
            1.0 / self.n as f64
        } else {
            2.0 / (self.n - 1) as f64
        }
    }

    fn index(&self, i: [usize; 4]) -> usize {
        ((i[0] * self.n + i[1]) * self.n + i[2]) * self.n + i[3]
    }

    pub fn from_fn<F: Fn([f64; 4]) -> [f64; 6] + Sync>(n: usize, f: F) -> Self {
        let total = n * n * n * n;
        let mut values: [Vec<f64>; 6] = Default::default();
        for v in values.iter_mut() {
            *v = vec![0.0; total];
        }
        let probe = DiscreteTwoForm { n, values: Default::default() };
        let rows: Vec<[f64; 6]> = (0..total)
            .into_par_iter()
            .map(|k| {
                let i = [k / (n * n * n), (k / (n * n)) % n, (k / n) % n, k % n];
                f([probe.coord(0, i[0]), probe.coord(1, i[1]), probe.coord(2, i[2]), probe.coord(3, i[3])])
            })
            .collect();
        for (k, r) in rows.iter().enumerate() {
            for c in 0..6 {
                values[c][k] = r[c];
            }
        }
        DiscreteTwoForm { n, values }
    }

    /// The split form `ω + σ`.
    pub fn split(n: usize) -> Self {
        Self::from_fn(n, |_| [1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    }

    fn matrix(c: &[f64; 6]) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            m[(i, j)] = c[k];
            m[(j, i)] = -c[k];
        }
        m
    }

    fn at_node(&self, k: usize) -> [f64; 6] {
        std::array::from_fn(|c| self.values[c][k])
    }

    /// Catmull-Rom interpolation, periodic in `x, y`, clamped in `u, v`.
    fn interpolate(values: &[Vec<f64>], n: usize, p: [f64; 4]) -> Vec<f64> {
        let mut nodes = [[0usize; 4]; 4];
        let mut weights = [[0.0; 4]; 4];
        for a in 0..4 {
            let g = if a < 2 {
                p[a].rem_euclid(1.0) * n as f64
            } else {
                ((p[a].clamp(-1.0, 1.0) + 1.0) * 0.5 * (n - 1) as f64).min((n - 1) as f64 - 1e-12)
            };
            let f = g.floor();
            let s = g - f;
            let s2 = s * s;
            let s3 = s2 * s;
            weights[a] = [
                0.5 * (-s3 + 2.0 * s2 - s),
                0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
                0.5 * (-3.0 * s3 + 4.0 * s2 + s),
                0.5 * (s3 - s2),
            ];
            let base = f as isize - 1;
            for (j, node) in nodes[a].iter_mut().enumerate() {
                let m = base + j as isize;
                *node = if a < 2 {
                    m.rem_euclid(n as isize) as usize
                } else {
                    m.clamp(0, n as isize - 1) as usize
                };
            }
        }
        let mut out = vec![0.0; values.len()];
        for j0 in 0..4 {
            for j1 in 0..4 {
                let w01 = weights[0][j0] * weights[1][j1];
                let k01 = (nodes[0][j0] * n + nodes[1][j1]) * n;
                for j2 in 0..4 {
                    let w012 = w01 * weights[2][j2];
                    let k012 = (k01 + nodes[2][j2]) * n;
                    for j3 in 0..4 {
                        let w = w012 * weights[3][j3];
                        let k = k012 + nodes[3][j3];
                        for (o, v) in out.iter_mut().zip(values) {
                            *o += w * v[k];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn sample(&self, p: [f64; 4]) -> [f64; 6] {
        let v = Self::interpolate(&self.values, self.n, p);
        std::array::from_fn(|c| v[c])
    }

    /// Central difference of `f` along `axis` at node `i` (one-sided at the `u, v` edges).
    fn diff(&self, f: &[f64], i: [usize; 4], axis: usize) -> f64 {
        let n = self.n;
        let mut lo = i;
        let mut hi = i;
        let h = self.spacing(axis);
        if axis < 2 {
            lo[axis] = (i[axis] + n - 1) % n;
            hi[axis] = (i[axis] + 1) % n;
            return (f[self.index(hi)] - f[self.index(lo)]) / (2.0 * h);
        }
        let mut span = 2.0;
        if i[axis] == 0 {
            span = 1.0;
        } else {
            lo[axis] -= 1;
        }
        if i[axis] == n - 1 {
            span -= 1.0;
        } else {
            hi[axis] += 1;
        }
        (f[self.index(hi)] - f[self.index(lo)]) / (span * h)
    }

    /// Largest component of the discrete `dτ`, relative to the largest component of `τ`.
    pub fn closedness(&self) -> f64 {
        let n = self.n;
        let scale = self.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let comp = |a: usize, b: usize| -> (usize, f64) {
            let (i, j, s) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
            (PAIRS.iter().position(|&p| p == (i, j)).unwrap(), s)
        };
        let triples = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
        (0..n * n * n * n)
            .into_par_iter()
            .map(|k| {
                let i = [k / (n * n * n), (k / (n * n)) % n, (k / n) % n, k % n];
                let mut worst = 0.0f64;
                for &(a, b, c) in &triples {
                    // dτ_{abc} = ∂_a τ_bc − ∂_b τ_ac + ∂_c τ_ab
                    let mut s = 0.0;
                    for (d, (p, q), sign) in [(a, (b, c), 1.0), (b, (a, c), -1.0), (c, (a, b), 1.0)] {
                        let (ci, cs) = comp(p, q);
                        s += sign * cs * self.diff(&self.values[ci], i, d);
                    }
                    worst = worst.max(s.abs());
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
            / scale
    }

    /// Binary dump: magic `HQ2F`, then `n` and component count as little-endian
    /// `u64`, then each component's `n⁴` doubles row-major in `(x, y, u, v)`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(b"HQ2F")?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&6u64.to_le_bytes())?;
        for c in &self.values {
            for v in c {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"HQ2F" {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "not a two-form dump"));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        if u64::from_le_bytes(word) != 6 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "expected 6 components"));
        }
        let mut values: [Vec<f64>; 6] = Default::default();
        for c in values.iter_mut() {
            let mut buf = vec![0u8; 8 * n.pow(4)];
            r.read_exact(&mut buf)?;
            *c = buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        }
        Ok(DiscreteTwoForm { n, values })
    }
}

/// `τ = ω + σ + d(g du + k dv)` with `g, k` trigonometric in `(x, y)` times
/// a bump in `(u, v)` supported in `|u|, |v| < 0.8`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Perturbation {
    pub amplitude: f64,
}

const SUPPORT: f64 = 0.8;

impl Perturbation {
    pub const DEFAULT_AMPLITUDE: f64 = 0.03;

    fn profile(w: f64) -> (f64, f64) {
        let r = SUPPORT * SUPPORT;
        if w * w >= r {
            return (0.0, 0.0);
        }
        let q = 1.0 - w * w / r;
        (q.powi(4), -8.0 * w / r * q.powi(3))
    }

    /// Components in [`PAIRS`] order.
    pub fn form(&self, p: [f64; 4]) -> [f64; 6] {
        let [x, y, u, v] = p;
        let a = self.amplitude;
        let (bu, dbu) = Self::profile(u);
        let (bv, dbv) = Self::profile(v);
        let (sx, cx) = (2.0 * PI * x).sin_cos();
        let (sy, cy) = (2.0 * PI * y).sin_cos();
        // g = a sx cy bu bv, k = a/2 cx sy bu bv
        let gx = a * 2.0 * PI * cx * cy * bu * bv;
        let gy = -a * 2.0 * PI * sx * sy * bu * bv;
        let gv = a * sx * cy * bu * dbv;
        let kx = -0.5 * a * 2.0 * PI * sx * sy * bu * bv;
        let ky = 0.5 * a * 2.0 * PI * cx * cy * bu * bv;
        let ku = 0.5 * a * cx * sy * dbu * bv;
        // d(g du) = g_x dx∧du + g_y dy∧du − g_v du∧dv; d(k dv) = k_x dx∧dv + k_y dy∧dv + k_u du∧dv
        [1.0, gx, kx, gy, ky, 1.0 - gv + ku]
    }

    pub fn grid(&self, n: usize) -> DiscreteTwoForm {
        DiscreteTwoForm::from_fn(n, |p| self.form(p))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MoserReport {
    pub n: usize,
    pub min_rho: f64,
    /// Smallest Pfaffian of `τ_t` over the grid and `t ∈ {0, 0.1, …, 1}`.
    pub min_pfaffian: f64,
    pub closedness: f64,
    /// `max |h₁*τ₁ − τ₀|` over the sample points.
    pub residual: f64,
    pub samples: usize,
    pub steps: usize,
    /// Largest displacement `|h₁(p) − p|`.
    pub max_displacement: f64,
}

pub const RESIDUAL_LIMIT: f64 = 5e-2;
const STEPS: usize = 16;

fn pfaffian(c: &[f64; 6]) -> f64 {
    c[0] * c[5] - c[1] * c[4] + c[2] * c[3]
}

/// Primitive `λ` of `γ = τ − τ₀` vanishing near `∂U`: integrate `ι_{∂u}γ` in `u`
/// from `u = −1`, then subtract `d(χ(u) C(x, y, v))` where `C` is the primitive in
/// `v` of what is left on the face `u = 1`. Components in `(x, y, u, v)` order.
fn primitive(tau: &DiscreteTwoForm) -> [Vec<f64>; 4] {
    let n = tau.n;
    let total = n.pow(4);
    let idx = |i: [usize; 4]| tau.index(i);
    let gamma: [Vec<f64>; 6] = std::array::from_fn(|c| {
        let base = if c == 0 || c == 5 { 1.0 } else { 0.0 };
        tau.values[c].iter().map(|v| v - base).collect()
    });
    // ι_{∂u}γ = −γ_xu dx − γ_yu dy + γ_uv dv
    let mut lam: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; total]);
    let hu = tau.spacing(2);
    for i0 in 0..n {
        for i1 in 0..n {
            for i3 in 0..n {
                let mut acc = [0.0; 3];
                for i2 in 1..n {
                    let (a, b) = (idx([i0, i1, i2 - 1, i3]), idx([i0, i1, i2, i3]));
                    let trap = |c: usize| 0.5 * hu * (gamma[c][a] + gamma[c][b]);
                    acc[0] -= trap(1);
                    acc[1] -= trap(3);
                    acc[2] += trap(5);
                    lam[0][b] = acc[0];
                    lam[1][b] = acc[1];
                    lam[3][b] = acc[2];
                }
            }
        }
    }
    let hv = tau.spacing(3);
    let mut face = vec![0.0; n * n * n];
    let mut big_c = vec![0.0; n * n * n];
    let fidx = |i0: usize, i1: usize, i3: usize| (i0 * n + i1) * n + i3;
    for i0 in 0..n {
        for i1 in 0..n {
            for i3 in 0..n {
                face[fidx(i0, i1, i3)] = lam[3][idx([i0, i1, n - 1, i3])];
                if i3 > 0 {
                    big_c[fidx(i0, i1, i3)] =
                        big_c[fidx(i0, i1, i3 - 1)] + 0.5 * hv * (face[fidx(i0, i1, i3 - 1)] + face[fidx(i0, i1, i3)]);
                }
            }
        }
    }
    let hx = tau.spacing(0);
    let chi = |u: f64| 1.0 - bump_value(u + 0.5, 1.0, 0);
    let dchi = |u: f64| -bump_value(u + 0.5, 1.0, 1);
    for i0 in 0..n {
        for i1 in 0..n {
            for i3 in 0..n {
                let c = big_c[fidx(i0, i1, i3)];
                let cx = (big_c[fidx((i0 + 1) % n, i1, i3)] - big_c[fidx((i0 + n - 1) % n, i1, i3)]) / (2.0 * hx);
                let cy = (big_c[fidx(i0, (i1 + 1) % n, i3)] - big_c[fidx(i0, (i1 + n - 1) % n, i3)]) / (2.0 * hx);
                let cv = face[fidx(i0, i1, i3)];
                for i2 in 0..n {
                    let u = tau.coord(2, i2);
                    let k = idx([i0, i1, i2, i3]);
                    lam[0][k] -= chi(u) * cx;
                    lam[1][k] -= chi(u) * cy;
                    lam[2][k] -= dchi(u) * c;
                    lam[3][k] -= chi(u) * cv;
                }
            }
        }
    }
    lam
}

struct MoserField<'a> {
    tau: &'a DiscreteTwoForm,
    lam: [Vec<f64>; 4],
}

impl MoserField<'_> {
    /// `τ_t` at `p` as a 4×4 antisymmetric matrix.
    fn tau_t(&self, t: f64, p: [f64; 4]) -> Matrix4<f64> {
        let mut c = self.tau.sample(p);
        c[0] = 1.0 + t * (c[0] - 1.0);
        c[5] = 1.0 + t * (c[5] - 1.0);
        for v in &mut c[1..5] {
            *v *= t;
        }
        DiscreteTwoForm::matrix(&c)
    }

    /// `X_t` with `ι_X τ_t = −λ`, i.e. `τ_t X = λ`.
    fn field(&self, t: f64, p: [f64; 4]) -> [f64; 4] {
        let l = DiscreteTwoForm::interpolate(&self.lam, self.tau.n, p);
        let x = self
            .tau_t(t, p)
            .lu()
            .solve(&Vector4::new(l[0], l[1], l[2], l[3]))
            .unwrap_or_else(Vector4::zeros);
        [x[0], x[1], x[2], x[3]]
    }

    fn flow(&self, mut p: [f64; 4]) -> [f64; 4] {
        let h = 1.0 / STEPS as f64;
        let shift = |p: [f64; 4], k: [f64; 4], s: f64| -> [f64; 4] { std::array::from_fn(|a| p[a] + s * k[a]) };
        for step in 0..STEPS {
            let t = step as f64 * h;
            let k1 = self.field(t, p);
            let k2 = self.field(t + 0.5 * h, shift(p, k1, 0.5 * h));
            let k3 = self.field(t + 0.5 * h, shift(p, k2, 0.5 * h));
            let k4 = self.field(t + h, shift(p, k3, h));
            p = std::array::from_fn(|a| p[a] + h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]));
        }
        p
    }
}

/// Split the quasi-cylinder form `tau` by the Moser flow and measure `h₁*τ₁ − τ₀`
/// on a `sample_grid⁴` lattice of cell centres.
pub fn moser_split(tau: &DiscreteTwoForm, sample_grid: usize) -> Result<MoserReport, QuasiCylError> {
    let n = tau.n;
    if n < 4 || sample_grid == 0 {
        return Err(QuasiCylError::InvalidParameter(format!("grid {n}, samples {sample_grid}")));
    }
    let nodes = n.pow(4);
    let unpack = |k: usize| [k / (n * n * n), (k / (n * n)) % n, (k / n) % n, k % n];
    let (min_rho, rho_at) = (0..nodes)
        .map(|k| (tau.values[5][k], k))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
    if !(min_rho > 0.0) {
        return Err(QuasiCylError::NondegeneracyFailed {
            rho: min_rho,
            at: unpack(rho_at),
        });
    }
    let (min_pf, pf_at) = (0..nodes)
        .into_par_iter()
        .map(|k| {
            let c = tau.at_node(k);
            let worst = (0..=10)
                .map(|j| {
                    let t = j as f64 / 10.0;
                    let ct: [f64; 6] = std::array::from_fn(|i| match i {
                        0 | 5 => 1.0 + t * (c[i] - 1.0),
                        _ => t * c[i],
                    });
                    pfaffian(&ct)
                })
                .fold(f64::INFINITY, f64::min);
            (worst, k)
        })
        .reduce(|| (f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
    if !(min_pf > 0.0) {
        return Err(QuasiCylError::NondegeneracyFailed {
            rho: min_pf,
            at: unpack(pf_at),
        });
    }
    let field = MoserField { tau, lam: primitive(tau) };
    let m = sample_grid;
    let fd = 1e-5;
    let tau0 = DiscreteTwoForm::matrix(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let (residual, max_displacement) = (0..m.pow(4))
        .into_par_iter()
        .map(|k| {
            let i = [k / (m * m * m), (k / (m * m)) % m, (k / m) % m, k % m];
            let p: [f64; 4] = std::array::from_fn(|a| {
                let s = (i[a] as f64 + 0.5) / m as f64;
                if a < 2 {
                    s
                } else {
                    -1.0 + 2.0 * s
                }
            });
            let image = field.flow(p);
            let mut jac = Matrix4::zeros();
            for a in 0..4 {
                let mut lo = p;
                let mut hi = p;
                lo[a] -= fd;
                hi[a] += fd;
                let (l, h) = (field.flow(lo), field.flow(hi));
                for b in 0..4 {
                    jac[(b, a)] = (h[b] - l[b]) / (2.0 * fd);
                }
            }
            let pulled = jac.transpose() * DiscreteTwoForm::matrix(&tau.sample(image)) * jac;
            let r = (pulled - tau0).abs().max();
            let d = (0..4).map(|a| (image[a] - p[a]).powi(2)).sum::<f64>().sqrt();
            (r, d)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let report = MoserReport {
        n,
        min_rho,
        min_pfaffian: min_pf,
        closedness: tau.closedness(),
        residual,
        samples: m.pow(4),
        steps: STEPS,
        max_displacement,
    };
    if residual > RESIDUAL_LIMIT {
        return Err(QuasiCylError::ResidualTooLarge {
            residual,
            limit: RESIDUAL_LIMIT,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_form_needs_no_flow() {
        let r = moser_split(&DiscreteTwoForm::split(8), 4).unwrap();
        assert!(r.residual < 1e-10, "{}", r.residual);
        assert_eq!(r.max_displacement, 0.0);
    }

    #[test]
    fn perturbation_is_closed() {
        let p = Perturbation { amplitude: 0.05 };
        let coarse = p.grid(12).closedness();
        let fine = p.grid(16).closedness();
        assert!(fine < coarse, "{coarse} {fine}");
        assert!(fine < 0.1, "{fine}");
    }

    #[test]
    fn small_perturbation_is_split() {
        let p = Perturbation { amplitude: Perturbation::DEFAULT_AMPLITUDE };
        let coarse = moser_split(&p.grid(12), 6).unwrap();
        let fine = moser_split(&p.grid(16), 6).unwrap();
        assert!(coarse.residual < 5e-2, "{coarse:?}");
        assert!(fine.residual < 2e-2, "{fine:?}");
        assert!(coarse.max_displacement > 1e-3);
    }

    #[test]
    fn degenerate_disc_form_is_rejected() {
        let p = Perturbation { amplitude: 0.5 };
        match moser_split(&p.grid(12), 4) {
            Err(QuasiCylError::NondegeneracyFailed { rho, .. }) => assert!(rho <= 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binary_dump_round_trips() {
        let g = Perturbation { amplitude: 0.05 }.grid(5);
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 16 + 6 * 8 * 625);
        assert_eq!(DiscreteTwoForm::read_binary(&buf[..]).unwrap(), g);
    }
}
