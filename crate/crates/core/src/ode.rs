//! Adaptive Dormand-Prince 5(4) integration of small fixed-size systems.

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    pub initial_step: T,
    pub max_steps: usize,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        OdeOptions {
            rtol: T::lit(1e-11),
            atol: T::lit(1e-300),
            initial_step: T::zero(),
            max_steps: 5_000_000,
        }
    }
}

/// Why an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeStop {
    ReachedEnd,
    Event,
}

#[derive(Debug, Clone, Copy)]
pub struct OdeResult<T, const N: usize> {
    pub t: T,
    pub y: [T; N],
    pub stop: OdeStop,
    pub steps: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// `event` is checked after every accepted step and ends the integration
/// when it returns `true`; `observe` sees every accepted state, including
/// the initial one.
pub fn dopri5<T: Real, const N: usize>(
    mut f: impl FnMut(T, &[T; N]) -> [T; N],
    t0: T,
    y0: [T; N],
    t1: T,
    opts: &OdeOptions<T>,
    mut event: impl FnMut(T, &[T; N]) -> bool,
    mut observe: impl FnMut(T, &[T; N]),
) -> Result<OdeResult<T, N>> {
    let dir = if t1 >= t0 { T::one() } else { -T::one() };
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0;
    observe(t, &y);
    if span == T::zero() {
        return Ok(OdeResult {
            t,
            y,
            stop: OdeStop::ReachedEnd,
            steps: 0,
        });
    }
    let mut h = if opts.initial_step > T::zero() {
        opts.initial_step.min(span)
    } else {
        span * T::lit(1e-4)
    };
    let mut k: [[T; N]; 7] = [[T::zero(); N]; 7];
    k[0] = f(t, &y);
    let mut steps = 0usize;
    let safety = T::lit(0.9);
    let fifth = T::lit(0.2);
    let floor = |t: T| T::epsilon() * T::lit(16.0) * t.abs().max(span * T::lit(1e-6));
    loop {
        if steps >= opts.max_steps {
            return Err(Error::diverged(format!(
                "ODE integration exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;
        for s in 1..7 {
            let mut ys = y;
            for (i, v) in ys.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc = acc + T::lit(a) * kj[i];
                    }
                }
                *v = *v + hs * acc;
            }
            k[s] = f(t + T::lit(C[s]) * hs, &ys);
            if s == 6 {
                // Stage 7 is evaluated at the fifth-order solution (FSAL).
                let mut err = T::zero();
                for i in 0..N {
                    let mut e = T::zero();
                    for (j, kj) in k.iter().enumerate() {
                        e = e + T::lit(E[j]) * kj[i];
                    }
                    let scale = opts.atol + opts.rtol * y[i].abs().max(ys[i].abs());
                    err = err.max((hs * e).abs() / scale);
                }
                steps += 1;
                if !err.is_finite() {
                    h = h * T::lit(0.1);
                    if h < floor(t) {
                        return Err(Error::diverged(format!("ODE step underflow at t = {t}")));
                    }
                    break;
                }
                if err <= T::one() {
                    t = if last { t1 } else { t + hs };
                    y = ys;
                    k[0] = k[6];
                    observe(t, &y);
                    if event(t, &y) {
                        return Ok(OdeResult {
                            t,
                            y,
                            stop: OdeStop::Event,
                            steps,
                        });
                    }
                    if last {
                        return Ok(OdeResult {
                            t,
                            y,
                            stop: OdeStop::ReachedEnd,
                            steps,
                        });
                    }
                    let grow = if err == T::zero() {
                        T::lit(5.0)
                    } else {
                        (safety * err.powf(-fifth)).min(T::lit(5.0))
                    };
                    h = h * grow.max(T::lit(0.2));
                } else {
                    h = h * (safety * err.powf(-fifth)).max(T::lit(0.1));
                    if h < floor(t) {
                        return Err(Error::diverged(format!("ODE step underflow at t = {t}")));
                    }
                }
            }
        }
    }
}
