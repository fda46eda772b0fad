//! Dormand–Prince 5(4) embedded Runge–Kutta integrator for small real
//! state vectors, with cubic Hermite dense output.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// Fifth-order weights (also the last row of the tableau, so k7 = f(t+h, y1)).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// Fifth-order minus fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on the step size; zero means unbounded.
    pub max_step: f64,
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Tolerances {
            rtol: tol,
            atol: tol,
            max_steps: 5_000_000,
            max_step: 0.0,
        }
    }
}

/// One accepted step, handed to the observer for dense output.
pub struct Step<'a, const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64; N],
    pub y1: &'a [f64; N],
    pub f0: &'a [f64; N],
    pub f1: &'a [f64; N],
}

impl<const N: usize> Step<'_, N> {
    /// Cubic Hermite interpolant of component `i` at `t` in `[t0, t1]`.
    pub fn interpolate(&self, i: usize, t: f64) -> f64 {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`, calling `observer` after
/// every accepted step. Returns the final state.
pub fn integrate<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    tol: Tolerances,
    mut observer: O,
) -> Result<([f64; N], Stats)>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
    O: FnMut(&Step<'_, N>),
{
    let mut t = t0;
    let mut y = y0;
    let mut stats = Stats {
        accepted: 0,
        rejected: 0,
    };
    if t_end <= t0 {
        return Ok((y, stats));
    }
    let span = t_end - t0;
    let max_step = if tol.max_step > 0.0 { tol.max_step } else { span };

    let mut k1 = [0.0; N];
    f(t, &y, &mut k1);
    let mut h = initial_step(&mut f, t, &y, &k1, tol).min(max_step);

    let mut k2 = [0.0; N];
    let mut k3 = [0.0; N];
    let mut k4 = [0.0; N];
    let mut k5 = [0.0; N];
    let mut k6 = [0.0; N];
    let mut k7 = [0.0; N];
    let mut tmp = [0.0; N];
    let mut y1 = [0.0; N];

    let mut steps = 0usize;
    let mut last_rejected = false;
    while t < t_end {
        steps += 1;
        if steps > tol.max_steps {
            return Err(Error::StepLimit {
                max_steps: tol.max_steps,
                t_end_us: t_end,
            });
        }
        let final_step = t + h >= t_end;
        if final_step {
            h = t_end - t;
        }

        for i in 0..N {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &tmp, &mut k2);
        for i in 0..N {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &tmp, &mut k3);
        for i in 0..N {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &tmp, &mut k4);
        for i in 0..N {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &tmp, &mut k5);
        for i in 0..N {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_next = if final_step { t_end } else { t + h };
        f(t_next, &tmp, &mut k6);
        for i in 0..N {
            y1[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        f(t_next, &y1, &mut k7);

        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = tol.atol + tol.rtol * y[i].abs().max(y1[i].abs());
            err += (e / scale).powi(2);
        }
        err = (err / N as f64).sqrt();

        if !err.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            if h < 1e-14 * span {
                return Err(Error::NonFinite { t_us: t });
            }
            h *= 0.1;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }

        if err <= 1.0 {
            observer(&Step {
                t0: t,
                t1: t_next,
                y0: &y,
                y1: &y1,
                f0: &k1,
                f1: &k7,
            });
            t = t_next;
            y = y1;
            k1 = k7;
            stats.accepted += 1;
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            // No growth directly after a rejection.
            let factor = if last_rejected { factor.min(1.0) } else { factor };
            h = (h * factor).min(max_step);
            last_rejected = false;
        } else {
            let factor = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h *= factor;
            stats.rejected += 1;
            last_rejected = true;
            if h < 1e-14 * span {
                return Err(Error::NonFinite { t_us: t });
            }
        }
    }
    Ok((y, stats))
}

/// Classical fourth-order Runge–Kutta with `steps` equal steps.
pub fn integrate_fixed<const N: usize, F>(mut f: F, t0: f64, y0: [f64; N], t_end: f64, steps: usize) -> [f64; N]
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    let steps = steps.max(1);
    let h = (t_end - t0) / steps as f64;
    let mut y = y0;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = ([0.0; N], [0.0; N], [0.0; N], [0.0; N], [0.0; N]);
    for n in 0..steps {
        let t = t0 + n as f64 * h;
        f(t, &y, &mut k1);
        for i in 0..N {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..N {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..N {
            tmp[i] = y[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4);
        for i in 0..N {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

fn initial_step<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], f0: &[f64; N], tol: Tolerances) -> f64
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    let scale = |v: f64| tol.atol + tol.rtol * v.abs();
    let rms = |a: &[f64; N]| -> f64 {
        (a.iter()
            .zip(y.iter())
            .map(|(ai, yi)| (ai / scale(*yi)).powi(2))
            .sum::<f64>()
            / N as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = [0.0; N];
    for i in 0..N {
        y1[i] = y[i] + h0 * f0[i];
    }
    let mut f1 = [0.0; N];
    f(t + h0, &y1, &mut f1);
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let (y, _) = integrate(
            |_, y: &[f64; 1], dy: &mut [f64; 1]| dy[0] = -2.0 * y[0],
            0.0,
            [1.0],
            3.0,
            Tolerances::uniform(1e-10),
            |_| {},
        )
        .unwrap();
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_with_dense_output() {
        let omega = 7.0;
        let mut max_dense_err = 0.0f64;
        let (y, stats) = integrate(
            |_, y: &[f64; 2], dy: &mut [f64; 2]| {
                dy[0] = omega * y[1];
                dy[1] = -omega * y[0];
            },
            0.0,
            [1.0, 0.0],
            10.0,
            Tolerances::uniform(1e-10),
            |step| {
                let tm = 0.5 * (step.t0 + step.t1);
                let err = (step.interpolate(0, tm) - (omega * tm).cos()).abs();
                max_dense_err = max_dense_err.max(err);
            },
        )
        .unwrap();
        assert!((y[0] - (70.0f64).cos()).abs() < 1e-7);
        assert!((y[1] + (70.0f64).sin()).abs() < 1e-7);
        assert!(max_dense_err < 1e-6, "{max_dense_err}");
        assert!(stats.accepted > 10);
    }

    #[test]
    fn fixed_step_converges_at_fourth_order() {
        let exact = (-3.0f64).exp();
        let err = |n| {
            let y = integrate_fixed(|_, y: &[f64; 1], dy: &mut [f64; 1]| dy[0] = -y[0], 0.0, [1.0], 3.0, n);
            (y[0] - exact).abs()
        };
        let ratio = err(50) / err(100);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn step_limit_is_reported() {
        let tol = Tolerances {
            max_steps: 5,
            ..Tolerances::uniform(1e-12)
        };
        let res = integrate(
            |_, y: &[f64; 2], dy: &mut [f64; 2]| {
                dy[0] = 50.0 * y[1];
                dy[1] = -50.0 * y[0];
            },
            0.0,
            [1.0, 0.0],
            100.0,
            tol,
            |_| {},
        );
        assert!(matches!(res, Err(Error::StepLimit { .. })));
    }
}
