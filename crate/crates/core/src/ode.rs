//! Dormand–Prince 5(4) with error-per-unit-step control.
//!
//! The state is a fixed-size array of complex numbers. Errors are measured
//! componentwise relative to `1 + |y|`, and a step of length `h` is accepted
//! when that error is below `tol * |h|`, so the local tolerance holds per unit
//! of integrated length.

use num_complex::Complex64 as C;

use crate::error::{HillError, Result};

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

pub(crate) const DEFAULT_TOL: f64 = 1e-12;
const MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dopri {
    pub tol: f64,
    /// Suggested step for the next call; carried between consecutive legs.
    pub h: f64,
}

impl Dopri {
    pub fn new(tol: f64, h0: f64) -> Self {
        Dopri { tol, h: h0 }
    }

    /// Advances `y` from `x0` to `x1` (either direction).
    pub fn advance<const N: usize, F>(&mut self, f: &F, x0: f64, x1: f64, y: &mut [C; N]) -> Result<()>
    where
        F: Fn(f64, &[C; N]) -> [C; N],
    {
        let span = x1 - x0;
        if span == 0.0 {
            return Ok(());
        }
        let dir = span.signum();
        let mut x = x0;
        let mut h = self.h.abs().min(span.abs()).max(1e-12) * dir;
        let mut k1 = f(x, y);
        let mut steps = 0usize;
        loop {
            let remaining = x1 - x;
            if remaining * dir <= 0.0 {
                break;
            }
            let last = h.abs() >= remaining.abs();
            let h_try = if last { remaining } else { h };

            let (y_new, k7, err) = stage(f, x, y, &k1, h_try);
            steps += 1;
            if steps > MAX_STEPS {
                return Err(HillError::Integration { x, reason: "step budget exhausted" });
            }
            if !err.is_finite() {
                return Err(HillError::Integration { x, reason: "non-finite state" });
            }
            let allowed = self.tol * h_try.abs();
            if err <= allowed {
                x = if last { x1 } else { x + h_try };
                *y = y_new;
                k1 = k7;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * (allowed / err).powf(0.25)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = h_try * fac;
                }
                if last {
                    break;
                }
            } else {
                let fac = (0.9 * (allowed / err).powf(0.25)).clamp(0.1, 0.9);
                h = h_try * fac;
                if h.abs() < 1e-14 * (1.0 + x.abs()) {
                    return Err(HillError::Integration { x, reason: "step size underflow" });
                }
            }
        }
        self.h = h.abs();
        Ok(())
    }
}

#[inline]
fn axpy<const N: usize>(y: &[C; N], h: f64, terms: &[(f64, &[C; N])]) -> [C; N] {
    let mut out = *y;
    for (coef, k) in terms {
        let s = h * coef;
        for i in 0..N {
            out[i] += k[i] * s;
        }
    }
    out
}

fn stage<const N: usize, F>(f: &F, x: f64, y: &[C; N], k1: &[C; N], h: f64) -> ([C; N], [C; N], f64)
where
    F: Fn(f64, &[C; N]) -> [C; N],
{
    let k2 = f(x + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = f(x + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(x + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(x + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(x + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y_new = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(x + h, &y_new);
    let mut err = 0.0f64;
    for i in 0..N {
        let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        let scale = 1.0 + y[i].norm().max(y_new[i].norm());
        err = err.max(e.norm() / scale);
    }
    (y_new, k7, err)
}
