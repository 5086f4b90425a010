//! Dormand–Prince 5(4) adaptive integrator on fixed-size state vectors.

use std::ops::ControlFlow;

use super::FlowError;

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    /// Per-step error bound, relative to `1 + |y|`.
    pub tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn new(tol: f64) -> Self {
        OdeOptions {
            tol,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }

    pub fn max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Time reached (equals the end of the span unless the observer stopped early).
    pub t_end: f64,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// `project` is applied to every accepted state; `observe(t, y)` is called at
/// the start and after every accepted step and may stop the integration.
pub fn solve<const N: usize, F, P, O>(
    mut f: F,
    y0: [f64; N],
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
    mut project: P,
    mut observe: O,
) -> Result<([f64; N], OdeStats), FlowError>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], FlowError>,
    P: FnMut([f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N]) -> ControlFlow<()>,
{
    let mut stats = OdeStats {
        t_end: t0,
        ..Default::default()
    };
    let mut y = y0;
    if observe(t0, &y).is_break() || t0 == t1 {
        return Ok((y, stats));
    }
    let span = t1 - t0;
    let dir = span.signum();
    let mut t = t0;
    let mut h = dir * (0.01 * span.abs()).min(opts.max_step).min(0.05);
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, &y)?;
    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(FlowError::TooManySteps { t });
        }
        let last = (t + h - t1) * dir >= 0.0;
        if last {
            h = t1 - t;
        }
        let mut ytmp;
        for s in 1..7 {
            ytmp = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ytmp[i] += h * a * kj[i];
                    }
                }
            }
            k[s] = f(t + C[s] * h, &ytmp)?;
        }
        // 5th-order solution is the last stage input (FSAL row)
        let mut y5 = y;
        for j in 0..6 {
            let a = A[6][j];
            for i in 0..N {
                y5[i] += h * a * k[j][i];
            }
        }
        let mut err = 0.0f64;
        for i in 0..N {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * k[j][i];
            }
            let scale = opts.tol * (1.0 + y[i].abs().max(y5[i].abs()));
            err = err.max((h * e).abs() / scale);
        }
        if !err.is_finite() {
            err = 1e10;
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y = project(y5);
            stats.accepted += 1;
            stats.t_end = t;
            if observe(t, &y).is_break() || last {
                return Ok((y, stats));
            }
            k[0] = f(t, &y)?;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = dir * (h.abs() * fac).min(opts.max_step);
        } else {
            stats.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h *= fac;
        }
        if h.abs() < 1e-14 * span.abs() {
            return Err(FlowError::StepUnderflow { t, h: h.abs() });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let tp = 2.0 * std::f64::consts::PI;
        let (y, st) = solve(
            |_, y: &[f64; 2]| Ok([y[1], -y[0]]),
            [1.0, 0.0],
            0.0,
            tp,
            &OdeOptions::new(1e-12),
            |y| y,
            |_, _| ControlFlow::Continue(()),
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9, "{y:?}");
        assert!(st.accepted > 10);
    }

    #[test]
    fn backward_integration_and_early_stop() {
        let (y, _) = solve(
            |_, y: &[f64; 1]| Ok([y[0]]),
            [1.0],
            1.0,
            0.0,
            &OdeOptions::new(1e-12),
            |y| y,
            |_, _| ControlFlow::Continue(()),
        )
        .unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-11);
        let (_, st) = solve(
            |_, _: &[f64; 1]| Ok([1.0]),
            [0.0],
            0.0,
            10.0,
            &OdeOptions::new(1e-10).max_step(0.1),
            |y| y,
            |_, y| if y[0] > 1.0 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) },
        )
        .unwrap();
        assert!(st.t_end > 1.0 && st.t_end < 1.2);
    }

    #[test]
    fn blow_up_underflows() {
        let r = solve(
            |_, y: &[f64; 1]| Ok([y[0] * y[0]]),
            [1.0],
            0.0,
            2.0,
            &OdeOptions::new(1e-10),
            |y| y,
            |_, _| ControlFlow::Continue(()),
        );
        assert!(matches!(
            r,
            Err(FlowError::StepUnderflow { .. }) | Err(FlowError::TooManySteps { .. })
        ));
    }
}
