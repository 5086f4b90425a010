//! Small numerical helpers shared by the modules: low-discrepancy points,
//! adaptive Gauss–Kronrod quadrature, and 1D search routines.

use serde::Serialize;

/// Radical inverse of `i` in base `base` (the Halton sequence component).
pub fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Quadrature result with an absolute error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl Quad {
    pub fn zero() -> Self {
        Quad {
            value: 0.0,
            error: 0.0,
            converged: true,
        }
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the total
/// estimate drops below `max(abs_tol, rel_tol·|I|)` or `max_intervals` is reached.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    integrate_with(&mut f, a, b, abs_tol, rel_tol, 2000)
}

pub fn integrate_with<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Quad {
    if a == b {
        return Quad::zero();
    }
    let (v, e) = gk15(f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if parts.len() >= max_intervals {
            return Quad {
                value: total,
                error: err,
                converged: false,
            };
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, pv, pe) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Quad {
                value: total,
                error: err,
                converged: false,
            };
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        if parts.len() % 64 == 0 {
            // resum to keep rounding from accumulating
            total = parts.iter().map(|p| p.2).sum();
            err = parts.iter().map(|p| p.3).sum();
        }
    }
    total = parts.iter().map(|p| p.2).sum();
    err = parts.iter().map(|p| p.3).sum();
    Quad {
        value: total,
        error: err,
        converged: true,
    }
}

/// Adaptive Gauss–Kronrod quadrature whose integrand evaluates a whole
/// panel of nodes at once (so callers can fan the nodes out in parallel).
pub fn integrate_batched<F, E>(mut f: F, a: f64, b: f64, abs_tol: f64, max_intervals: usize) -> Result<Quad, E>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
{
    if a == b {
        return Ok(Quad::zero());
    }
    let mut panel = |lo: f64, hi: f64| -> Result<(f64, f64), E> {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        let mut xs = Vec::with_capacity(15);
        for j in 0..7 {
            xs.push(c - h * XGK[j]);
            xs.push(c + h * XGK[j]);
        }
        xs.push(c);
        let v = f(&xs)?;
        let mut kron = v[14] * WGK[7];
        let mut gauss = v[14] * WG[3];
        for j in 0..7 {
            let s = v[2 * j] + v[2 * j + 1];
            kron += WGK[j] * s;
            if j % 2 == 1 {
                gauss += WG[j / 2] * s;
            }
        }
        Ok((kron * h, ((kron - gauss) * h).abs()))
    };
    let (v, e) = panel(a, b)?;
    let mut parts = vec![(a, b, v, e)];
    loop {
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let total: f64 = parts.iter().map(|p| p.2).sum();
        if err <= abs_tol {
            return Ok(Quad { value: total, error: err, converged: true });
        }
        if parts.len() >= max_intervals {
            return Ok(Quad { value: total, error: err, converged: false });
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = parts.remove(k);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = panel(lo, mid)?;
        let (v2, e2) = panel(mid, hi)?;
        parts.insert(k, (mid, hi, v2, e2));
        parts.insert(k, (lo, mid, v1, e1));
    }
}

/// Iterated adaptive quadrature over the rectangle `[ax, bx] × [ay, by]`.
pub fn integrate2<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    (ax, bx): (f64, f64),
    (ay, by): (f64, f64),
    abs_tol: f64,
) -> Quad {
    let mut inner_ok = true;
    let mut inner_err = 0.0f64;
    let span = (bx - ax).abs().max(1e-300);
    let outer = integrate_with(
        &mut |x| {
            let q = integrate_with(&mut |y| f(x, y), ay, by, 0.1 * abs_tol / span, 1e-13, 500);
            inner_ok &= q.converged;
            inner_err = inner_err.max(q.error);
            q.value
        },
        ax,
        bx,
        abs_tol,
        1e-13,
        500,
    );
    Quad {
        value: outer.value,
        error: outer.error + inner_err * span,
        converged: outer.converged && inner_ok,
    }
}

/// Composite Gauss–Legendre rule on `n` equal panels (15-point Kronrod nodes).
///
/// Used where an integrand is known smooth and a fixed, deterministic node set
/// is wanted (e.g. grids evaluated in parallel).
pub fn fixed_panels(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(15 * n);
    let w = (b - a) / n as f64;
    for k in 0..n {
        let c = a + (k as f64 + 0.5) * w;
        let h = 0.5 * w;
        for j in 0..7 {
            out.push((c - h * XGK[j], h * WGK[j]));
            out.push((c + h * XGK[j], h * WGK[j]));
        }
        out.push((c, h * WGK[7]));
    }
    out
}

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Bisection for a sign change of `f` on `[a, b]`; `None` if the signs agree.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

pub fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Wrap into `[-1/2, 1/2)`.
pub fn wrap_half(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base_two() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn gauss_kronrod_polynomial_and_kink() {
        let q = integrate(|x| x.powi(5) - 3.0 * x, 0.0, 2.0, 1e-12, 1e-12);
        assert!((q.value - (64.0 / 6.0 - 6.0)).abs() < 1e-12);
        let q = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-10, 1e-12);
        assert!(q.converged);
        assert!((q.value - (0.045 + 0.245)).abs() < 1e-9);
    }

    #[test]
    fn batched_matches_scalar() {
        let q: Quad = integrate_batched::<_, ()>(
            |xs| Ok(xs.iter().map(|&x| (x - 0.3f64).abs()).collect()),
            0.0,
            1.0,
            1e-10,
            500,
        )
        .unwrap();
        assert!((q.value - 0.29).abs() < 1e-9);
    }

    #[test]
    fn iterated_quadrature_of_gaussian() {
        let q = integrate2(|x, y| (-(x * x + y * y)).exp(), (-6.0, 6.0), (-6.0, 6.0), 1e-10);
        assert!((q.value - std::f64::consts::PI).abs() < 1e-8, "{q:?}");
    }

    #[test]
    fn panels_integrate_cubic_exactly() {
        let s: f64 = fixed_panels(0.0, 1.0, 3).iter().map(|&(x, w)| w * x * x * x).sum();
        assert!((s - 0.25).abs() < 1e-14);
    }

    #[test]
    fn golden_and_bisect() {
        let (x, _) = golden_min(|x| (x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-9).is_none());
    }

    #[test]
    fn wrap() {
        assert_eq!(wrap_half(0.75), -0.25);
        assert_eq!(wrap_half(-0.5), -0.5);
        assert_eq!(wrap_half(1.2).to_bits(), (1.2f64 - 1.0).to_bits());
    }
}
