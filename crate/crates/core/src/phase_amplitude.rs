//! Milne phase-amplitude machinery.
//!
//! The envelope `rho_l` obeys a third-order linear equation, tends to the
//! free envelope at large `r`, and gives the absolute phase shift through
//! `eta_l = l pi/2 + int (k/rho_l - k) dr`. A second, sourced equation for
//! `rho_hat = rho_l - rho_0` yields the curvature coefficients `A_l`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchange::{delta_eta_series, SeriesOptions};
use crate::ode::{dopri5, OdeOptions, OdeStop};
use crate::potentials::{ChannelLabel, ChannelPair, Potential};
use crate::radial::{
    scattering_length, tail_phase_correction, threshold_length, u_eff, u_eff_below, RadialGrid,
    SolverSettings, StartKind,
};
use crate::real::Real;
use crate::scales::{cutoff_lambda, partial_wave_cutoff, BarrierGeometry};
use crate::special::{fold_half_pi, free_envelope, free_phase};

/// Coefficient of the `U' rho` term in the envelope equation.
///
/// `Product` (coefficient 2) is the equation satisfied by products of
/// radial solutions, and the one from which the sourced `rho_hat`
/// equation follows. `Printed` (coefficient 1) is kept to demonstrate
/// that it fails the free-particle closure for `l > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeForm {
    #[default]
    Product,
    Printed,
}

impl EnvelopeForm {
    fn coefficient<T: Real>(self) -> T {
        match self {
            EnvelopeForm::Product => T::lit(2.0),
            EnvelopeForm::Printed => T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions<T = f64> {
    pub form: EnvelopeForm,
    pub rtol: T,
    /// Inward integration stops once `rho` exceeds this (the remaining
    /// integrand `k/rho` is then negligible).
    pub rho_stop: T,
    /// Largest tolerated `(|U| rho^2 + rho'^2/4 + |rho rho''|/2) / k^2`.
    /// Beyond it the invariant `rho rho''/2 - rho'^2/4 - U rho^2 = k^2` is
    /// lost to rounding and so is the phase carried by the envelope.
    pub max_condition: T,
}

impl<T: Real> Default for EnvelopeOptions<T> {
    fn default() -> Self {
        EnvelopeOptions {
            form: EnvelopeForm::Product,
            rtol: T::lit(1e-12),
            rho_stop: T::lit(1e12),
            max_condition: T::lit(1e12),
        }
    }
}

fn condition<T: Real>(y: &[T], u: T, k: T) -> T {
    (u.abs() * y[0] * y[0] + y[1] * y[1] / T::lit(4.0) + (y[0] * y[2]).abs() / T::lit(2.0))
        / (k * k)
}

/// One accepted step of the inward envelope integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSample<T = f64> {
    pub r: T,
    pub rho: T,
    pub drho: T,
    pub d2rho: T,
    /// `int_r^{r_max} k / rho`.
    pub phase: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSolution<T = f64> {
    pub label: Option<ChannelLabel>,
    pub ell: usize,
    pub energy: T,
    pub k: T,
    pub r_max: T,
    /// Samples ordered from `r_max` inward.
    pub samples: Vec<EnvelopeSample<T>>,
    /// First-order tail phase beyond `r_max`.
    pub tail_correction: T,
    pub tail_error: T,
    /// Integration ended on a wall or at the origin rather than deep in a
    /// forbidden region.
    pub closed: bool,
    /// False when the integration stopped under a barrier outside the
    /// innermost allowed region; the phase is then only known modulo pi.
    pub absolute: bool,
    /// Estimate of `int_0^{r_stop} k/rho` below the last sample (modulo pi
    /// when the stop is under a barrier).
    pub inner_remainder: T,
    pub inner_error: T,
    /// Phase shift implied by the drift of the conserved invariant, and a
    /// bound on what remains after correcting for it.
    pub drift_correction: T,
    pub drift_error: T,
}

impl<T: Real> EnvelopeSolution<T> {
    /// `int_{r_stop}^{r_max} k / rho`.
    pub fn total_phase(&self) -> T {
        self.samples.last().map_or(T::zero(), |s| s.phase)
    }

    /// `int_r^{r_max} k / rho` by cubic Hermite interpolation between samples.
    pub fn phase_at(&self, r: T) -> T {
        let s = &self.samples;
        if r >= s[0].r {
            return T::zero();
        }
        let last = s[s.len() - 1];
        if r <= last.r {
            return last.phase;
        }
        let i = s.partition_point(|p| p.r > r);
        let (hi, lo) = (s[i - 1], s[i]);
        let h = hi.r - lo.r;
        let t = (r - lo.r) / h;
        // d(phase)/dr = -k / rho
        let (d_lo, d_hi) = (-self.k / lo.rho * h, -self.k / hi.rho * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        (two * t3 - three * t2 + T::one()) * lo.phase
            + (t3 - two * t2 + t) * d_lo
            + (-two * t3 + three * t2) * hi.phase
            + (t3 - t2) * d_hi
    }
}

/// Inward integration of the envelope equation from the free envelope at `r_max`.
///
/// For the product form the tolerance is tightened (down to `1e-13`) until
/// the uncorrected part of the invariant drift is below `1e-7` rad.
pub fn milne_envelope<T: Real, P: Potential<T>>(
    ch: &P,
    mu: T,
    e: T,
    ell: usize,
    settings: &SolverSettings<T>,
    opts: &EnvelopeOptions<T>,
) -> Result<EnvelopeSolution<T>> {
    let grid = RadialGrid::for_scattering(&[ch as &dyn Potential<T>], mu, e, ell, settings)?;
    let floor = T::lit(1e-13).min(opts.rtol);
    let mut env = envelope_pass(ch, mu, e, ell, &grid, opts, opts.rtol)?;
    let mut rtol = opts.rtol;
    while opts.form == EnvelopeForm::Product && env.drift_error > T::lit(1e-7) && rtol > floor {
        rtol = (rtol / T::lit(10.0)).max(floor);
        match envelope_pass(ch, mu, e, ell, &grid, opts, rtol) {
            Ok(finer) => env = finer,
            Err(_) => break,
        }
    }
    Ok(env)
}

#[allow(clippy::too_many_arguments)]
fn envelope_pass<T: Real, P: Potential<T>>(
    ch: &P,
    mu: T,
    e: T,
    ell: usize,
    grid: &RadialGrid<T>,
    opts: &EnvelopeOptions<T>,
    rtol: T,
) -> Result<EnvelopeSolution<T>> {
    let k = (T::lit(2.0) * mu * e).sqrt();
    let lambda = T::of(ell * (ell + 1));
    let two_mu = T::lit(2.0) * mu;
    let c = opts.form.coefficient::<T>();
    let x = k * grid.r_max;
    let f = free_envelope(ell, x);
    let mut state = [f[0], k * f[1], k * k * f[2], T::zero()];
    if opts.form == EnvelopeForm::Product {
        state[2] = consistent_curvature(
            state[0],
            state[1],
            u_eff(ch, two_mu, e, lambda, grid.r_max),
            k,
        );
    }
    let mut samples = Vec::new();
    let mut r = grid.r_max;
    let inner = match grid.start {
        StartKind::Forbidden => grid.r_min * T::lit(0.5),
        _ => grid.r_min,
    };
    let mut legs: Vec<T> = grid.breakpoints().iter().rev().copied().collect();
    legs.push(inner);
    let r_turn = innermost_allowed(ch, two_mu, e, lambda, inner, grid.r_max);
    let ode = OdeOptions {
        rtol,
        atol: T::lit(1e-300),
        initial_step: T::zero(),
        max_steps: 5_000_000,
    };
    samples.push(EnvelopeSample {
        r,
        rho: state[0],
        drho: state[1],
        d2rho: state[2],
        phase: T::zero(),
    });
    let mut closed = false;
    let mut absolute = true;
    for (i, &target) in legs.iter().enumerate() {
        let rhs = |r: T, y: &[T; 4]| {
            let u = u_eff(ch, two_mu, e, lambda, r);
            let du = two_mu * ch.derivative(r) - T::lit(2.0) * lambda / (r * r * r);
            [
                y[1],
                y[2],
                T::lit(4.0) * u * y[1] + c * du * y[0],
                -k / y[0],
            ]
        };
        let stop = opts.rho_stop;
        let mut bad = false;
        let res = dopri5(
            rhs,
            r,
            state,
            target,
            &ode,
            |t, y| {
                bad |= !(y[0] > T::zero());
                bad || y[0] > stop
                    || (t >= r_turn
                        && condition(y, u_eff(ch, two_mu, e, lambda, t), k) > opts.max_condition)
            },
            |t, y| {
                if t != r {
                    samples.push(EnvelopeSample {
                        r: t,
                        rho: y[0],
                        drho: y[1],
                        d2rho: y[2],
                        phase: y[3],
                    });
                }
            },
        )?;
        if bad {
            return Err(Error::diverged(format!(
                "envelope lost positivity near r = {}; use a finer tolerance",
                res.t
            )));
        }
        state = res.y;
        r = res.t;
        if res.stop == OdeStop::Event {
            if !(r < r_turn) && !(u_eff(ch, two_mu, e, lambda, r) > T::zero()) {
                return Err(Error::diverged(format!(
                    "envelope lost precision in a classically allowed region near r = {r} (condition above {})",
                    opts.max_condition
                )));
            }
            absolute = r < r_turn;
            break;
        }
        if i + 1 == legs.len() {
            closed = grid.start != StartKind::Forbidden;
            break;
        }
        // rho'' - c U rho is continuous across a jump of U.
        let above = u_eff(ch, two_mu, e, lambda, r);
        let below = u_eff_below(ch, two_mu, e, lambda, r);
        state[2] = state[2] + c * (below - above) * state[0];
    }
    let (tail_correction, tail_error) = tail_phase_correction(ch, mu, k, ell, grid.r_max);
    let last = samples[samples.len() - 1];
    // In a forbidden region rho grows inward at the rate g = -rho'/rho, so
    // the rest of the integral is k/(g rho) up to a relative g'/g^2.
    let g = -last.drho / last.rho;
    let (inner_remainder, inner_error) = if closed {
        (T::zero(), T::zero())
    } else if g > T::zero() && u_eff(ch, two_mu, e, lambda, last.r) > T::zero() {
        let rem = k / (g * last.rho);
        let dg = -last.d2rho / last.rho + g * g;
        (rem, rem * (dg.abs() / (g * g)).min(T::one()))
    } else {
        (T::zero(), k * last.r / last.rho)
    };
    // A relative drift of I shifts the phase rate by half as much. Summed
    // against the accumulated phase this gives a correction (applied in
    // `phase_integral`) and, at 1% of its absolute value, a bound on what the
    // correction misses. Samples where rounding alone could produce the
    // drift are skipped.
    let k2 = k * k;
    let mut drift_error = T::zero();
    let mut drift_correction = T::zero();
    if opts.form == EnvelopeForm::Product {
        for pair in samples.windows(2) {
            let s = pair[1];
            let u = u_eff(ch, two_mu, e, lambda, s.r);
            if condition(&[s.rho, s.drho, s.d2rho], u, k) > T::lit(1e6) {
                continue;
            }
            let inv =
                s.rho * s.d2rho / T::lit(2.0) - s.drho * s.drho / T::lit(4.0) - u * s.rho * s.rho;
            let d = (inv / k2 - T::one()) / T::lit(2.0) * (s.phase - pair[0].phase);
            if !d.is_finite() {
                continue;
            }
            drift_error = drift_error + d.abs();
            drift_correction = drift_correction + d;
        }
        drift_error = drift_error * T::lit(0.01);
    }
    Ok(EnvelopeSolution {
        label: None,
        ell,
        energy: e,
        k,
        r_max: grid.r_max,
        samples,
        tail_correction,
        tail_error,
        closed,
        absolute,
        inner_remainder,
        inner_error,
        drift_correction,
        drift_error,
    })
}

/// `rho''` that makes `rho rho''/2 - rho'^2/4 - U rho^2 = k^2` at the start.
///
/// Envelopes of the product form conserve this combination; seeding with the
/// bare free envelope would leave it off by the residual potential at
/// `r_max` and bias every phase increment by the same relative amount.
fn consistent_curvature<T: Real>(rho: T, drho: T, u: T, k: T) -> T {
    let two = T::lit(2.0);
    two * (k * k + drho * drho / T::lit(4.0) + u * rho * rho) / rho
}

/// Smallest sampled radius where the motion is classically allowed.
fn innermost_allowed<T: Real, P: Potential<T> + ?Sized>(
    ch: &P,
    two_mu: T,
    e: T,
    lambda: T,
    lo: T,
    hi: T,
) -> T {
    let n = 4000usize;
    let span = (hi / lo).ln();
    (0..=n)
        .map(|i| lo * (span * T::of(i) / T::of(n)).exp())
        .find(|&r| u_eff(ch, two_mu, e, lambda, r) <= T::zero())
        .unwrap_or(hi)
}

/// Absolute phase from an envelope, with the estimated truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseIntegral<T = f64> {
    pub eta: T,
    pub tail_error: T,
    /// See [`EnvelopeSolution::absolute`].
    pub absolute: bool,
}

/// `eta = l pi/2 + int_0^{r_max} (k/rho - k) dr + remainder`, where the
/// remainder is the free-envelope tail `k r_max - l pi/2 - psi(k r_max)` plus
/// the first-order tail phase of the potential.
pub fn phase_integral<T: Real>(env: &EnvelopeSolution<T>) -> Result<PhaseIntegral<T>> {
    let last = env
        .samples
        .last()
        .ok_or_else(|| Error::invalid("empty envelope"))?;
    let tail_error = env.tail_error + env.inner_error + env.drift_error;
    if tail_error > T::lit(1e-6) {
        return Err(Error::diverged(format!(
            "phase integral truncation error {tail_error} exceeds 1e-6 rad"
        )));
    }
    let half_pi_l = T::FRAC_PI_2() * T::of(env.ell);
    let body = env.total_phase() - env.k * (env.r_max - last.r);
    let x = env.k * env.r_max;
    let remainder = x - half_pi_l - free_phase(env.ell, x) + env.tail_correction;
    // The region below the last sample carries no phase (wall, origin, or
    // deep forbidden region) but still contributes -k r to the body.
    let eta =
        half_pi_l + body + env.inner_remainder + env.drift_correction - env.k * last.r + remainder;
    Ok(PhaseIntegral {
        eta,
        tail_error,
        absolute: env.absolute,
    })
}

/// Zero-energy limit of the absolute s-wave phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPhase<T = f64> {
    pub eta0: T,
    /// Change between the last point and the extrapolated value.
    pub error: T,
    /// Scattering length used to remove the linear term.
    pub scattering_length: T,
    /// Largest energy used.
    pub energy: T,
}

/// `lim_{E->0} eta_0` from envelope phases at `k R* = 0.01, 0.005, 0.0025`.
///
/// `g(k) = eta_0(k) + atan(k a)` has no linear term; the quadratic
/// and cubic ones by Richardson extrapolation. Much smaller `k` is avoided on
/// purpose: the free envelope then enters the well with a ripple of order
/// `(k a)^-2`, which the envelope equation cannot carry in floating point.
pub fn threshold_phase<T: Real, P: Potential<T>>(
    ch: &P,
    mu: T,
    settings: &SolverSettings<T>,
    opts: &EnvelopeOptions<T>,
) -> Result<ThresholdPhase<T>> {
    let len = threshold_length(ch, mu)?;
    let a = scattering_length(ch, mu, settings)?.a;
    let k0 = T::lit(1e-2) / len;
    let two = T::lit(2.0);
    let mut g = [T::zero(); 3];
    for (i, slot) in g.iter_mut().enumerate() {
        let k = k0 / T::of(1 << i);
        let env = milne_envelope(ch, mu, k * k / (two * mu), 0, settings, opts)?;
        *slot = phase_integral(&env)?.eta + (k * a).atan();
    }
    // Quadratic and cubic terms.
    let four = T::lit(4.0);
    let r2a = (four * g[1] - g[0]) / T::lit(3.0);
    let r2b = (four * g[2] - g[1]) / T::lit(3.0);
    let eta0 = (T::lit(8.0) * r2b - r2a) / T::lit(7.0);
    Ok(ThresholdPhase {
        eta0,
        error: (eta0 - r2b).abs(),
        scattering_length: a,
        energy: k0 * k0 / (two * mu),
    })
}

/// Inner/outer decomposition of the phase for partial waves above the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSplit<T = f64> {
    pub n_inner: usize,
    pub eta_out: T,
    pub split_radius: T,
    /// `int_0^{s'} k/rho - pi N`; nonzero when the phase never crosses
    /// `pi N` inside the barrier and `s'` is the nearer edge.
    pub residual: T,
}

/// Largest accepted `|int_0^{s'} k/rho - pi N|`, radians.
pub const SPLIT_TOLERANCE: f64 = 0.05;

/// Splits `eta = pi N + eta_out` at a point `s'` under the centrifugal
/// barrier where the inner phase integral is an exact multiple of `pi`.
///
/// `s'` is searched in the classically forbidden stretch of samples that
/// contains the barrier top `s` (or lies nearest to it); `U` there follows
/// from the envelope invariant, so no potential is needed.
pub fn split_phase<T: Real>(
    env: &EnvelopeSolution<T>,
    barrier: &BarrierGeometry<T>,
) -> Result<PhaseSplit<T>> {
    if !(barrier.e_top > env.energy) {
        return Err(Error::domain(
            "phase splitting needs the barrier top above the energy",
        ));
    }
    if !env.absolute {
        return Err(Error::domain(format!(
            "envelope for l = {} stopped under the barrier; the inner phase is only known modulo pi",
            env.ell
        )));
    }
    let k2 = env.k * env.k;
    let forbidden: Vec<bool> = env
        .samples
        .iter()
        .map(|p| {
            (p.rho * p.d2rho / T::lit(2.0) - p.drho * p.drho / T::lit(4.0) - k2) / (p.rho * p.rho)
                > T::zero()
        })
        .collect();
    // Samples run inward; pick the forbidden run closest to s.
    let mut best: Option<(usize, usize, T)> = None;
    let mut i = 0;
    while i < forbidden.len() {
        if !forbidden[i] {
            i += 1;
            continue;
        }
        let j = (i..forbidden.len())
            .find(|&j| !forbidden[j])
            .unwrap_or(forbidden.len())
            - 1;
        let (r_hi, r_lo) = (env.samples[i].r, env.samples[j].r);
        let d = if barrier.s_ell >= r_lo && barrier.s_ell <= r_hi {
            T::zero()
        } else {
            (barrier.s_ell - r_lo)
                .abs()
                .min((barrier.s_ell - r_hi).abs())
        };
        if best.map_or(true, |b| d < b.2) {
            best = Some((i, j, d));
        }
        i = j + 1;
    }
    let Some((i, j, _)) = best else {
        return Err(Error::domain(format!(
            "no classically forbidden region near the barrier top for l = {}",
            env.ell
        )));
    };
    let (lo0, hi0) = (env.samples[j].r, env.samples[i].r);
    let total = env.total_phase();
    let inner = |s: T| total - env.phase_at(s);
    let centre = barrier.s_ell.max(lo0).min(hi0);
    let n = (inner(centre) / T::PI()).round();
    let target = n * T::PI();
    let split_radius = if inner(lo0) > target {
        lo0
    } else if inner(hi0) < target {
        hi0
    } else {
        let (mut lo, mut hi) = (lo0, hi0);
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if inner(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= hi0 * T::lit(1e-14) {
                break;
            }
        }
        (lo + hi) / T::lit(2.0)
    };
    let residual = inner(split_radius) - target;
    if residual.abs() > T::lit(SPLIT_TOLERANCE) {
        return Err(Error::domain(format!(
            "inner phase stays {residual:.3e} rad from {n} pi across the barrier (E too close to the barrier top, l = {})",
            env.ell
        )));
    }
    let eta = phase_integral(env)?.eta;
    Ok(PhaseSplit {
        n_inner: n.to_usize().unwrap_or(0),
        eta_out: eta - target,
        split_radius,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureMethod {
    Fit,
    EnvelopeIntegral,
}

/// Curvature coefficient `Delta A` of `Delta eta(lambda) = Delta delta_0 - lambda Delta A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureCoefficient<T = f64> {
    pub value: T,
    pub energy: T,
    pub ell_range: (usize, usize),
    pub method: CurvatureMethod,
    /// Linear model residual exceeds 0.05 rad.
    pub nonlinear: bool,
    pub max_residual: T,
    /// Fitted intercept minus `Delta delta_0`, folded modulo pi.
    pub intercept_offset: T,
    /// The envelope method failed and the fit was used instead.
    pub fell_back: bool,
}

/// Removes multiples of pi so that consecutive values vary continuously,
/// starting from `start`.
pub fn unwrap_from<T: Real>(start: T, values: &[T]) -> Vec<T> {
    let mut prev = start;
    values
        .iter()
        .map(|&v| {
            let m = ((prev - v) / T::PI()).round();
            let w = v + m * T::PI();
            prev = w;
            w
        })
        .collect()
}

/// Least-squares slope of `-Delta eta` against `lambda = l(l+1)`.
///
/// `points` are `(l, Delta eta_l)` with arbitrary multiples of pi; they are
/// unwrapped by continuity from `delta_delta0`, which also anchors the
/// intercept check.
pub fn fit_delta_a<T: Real>(
    delta_delta0: T,
    points: &[(usize, T)],
    energy: T,
) -> Result<CurvatureCoefficient<T>> {
    if points.len() < 4 {
        return Err(Error::invalid(format!(
            "slope fit needs at least 4 partial waves, got {}",
            points.len()
        )));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.0);
    let raw: Vec<T> = sorted.iter().map(|p| p.1).collect();
    let unwrapped = unwrap_from(delta_delta0, &raw);
    let xs: Vec<T> = sorted.iter().map(|p| T::of(p.0 * (p.0 + 1))).collect();
    let ys: Vec<T> = unwrapped.iter().map(|v| -*v).collect();
    let n = T::of(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy: T = xs.iter().zip(&ys).map(|(x, y)| (*x - mx) * (*y - my)).sum();
    let sxx: T = xs.iter().map(|x| (*x - mx) * (*x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (*y - intercept - slope * *x).abs())
        .fold(T::zero(), T::max);
    Ok(CurvatureCoefficient {
        value: slope,
        energy,
        ell_range: (sorted[0].0, sorted[sorted.len() - 1].0),
        method: CurvatureMethod::Fit,
        nonlinear: max_residual > T::lit(0.05),
        max_residual,
        intercept_offset: fold_half_pi(-intercept - delta_delta0),
        fell_back: false,
    })
}

/// `Delta A_0` from exact `Delta eta_l` over `l = 1 ..= min(8, ceil L)`.
///
/// Below four usable partial waves the envelope integral in the `l -> 0`
/// limit is returned instead.
pub fn delta_a_fit<T: Real>(
    pair: &ChannelPair<T>,
    e: T,
    settings: &SolverSettings<T>,
    env_opts: &EnvelopeOptions<T>,
) -> Result<CurvatureCoefficient<T>> {
    if fit_top(pair, e)? < 4 {
        return curvature_pair(pair, e, 0, settings, env_opts);
    }
    fit_over_series(pair, e, settings)
}

/// Highest partial wave entering the slope fit.
fn fit_top<T: Real>(pair: &ChannelPair<T>, e: T) -> Result<usize> {
    Ok(partial_wave_cutoff(cutoff_lambda(&pair.tail(), pair.mu, e)?).min(8))
}

fn fit_over_series<T: Real>(
    pair: &ChannelPair<T>,
    e: T,
    settings: &SolverSettings<T>,
) -> Result<CurvatureCoefficient<T>> {
    let top = fit_top(pair, e)?;
    let series = delta_eta_series(
        pair,
        e,
        settings,
        &SeriesOptions {
            margin: 0,
            max_ell: Some(top),
            ..Default::default()
        },
    )?;
    let d0 = fold_half_pi(series.entries[0].delta_eta);
    let points: Vec<(usize, T)> = series.entries[1..=top]
        .iter()
        .map(|en| (en.ell, en.delta_eta))
        .collect();
    fit_delta_a(d0, &points, e)
}

/// `Delta A_l = A_l^b - A_l^a` from the sourced envelope equation,
/// integrated over the region where the channels differ. `ell = 0` means
/// the `lambda -> 0` limit.
pub fn delta_a_envelope<T: Real>(
    pair: &ChannelPair<T>,
    e: T,
    ell: usize,
    settings: &SolverSettings<T>,
    opts: &EnvelopeOptions<T>,
) -> Result<CurvatureCoefficient<T>> {
    match curvature_pair(pair, e, ell, settings, opts) {
        Err(Error::NonConvergence(_)) if fit_top(pair, e)? >= 4 => {
            let mut fit = fit_over_series(pair, e, settings)?;
            fit.fell_back = true;
            Ok(fit)
        }
        other => other,
    }
}

fn curvature_pair<T: Real>(
    pair: &ChannelPair<T>,
    e: T,
    ell: usize,
    settings: &SolverSettings<T>,
    opts: &EnvelopeOptions<T>,
) -> Result<CurvatureCoefficient<T>> {
    let a = curvature_integral(pair, ChannelLabel::A, e, ell, settings, opts)?;
    let b = curvature_integral(pair, ChannelLabel::B, e, ell, settings, opts)?;
    Ok(CurvatureCoefficient {
        value: b - a,
        energy: e,
        ell_range: (ell, ell),
        method: CurvatureMethod::EnvelopeIntegral,
        nonlinear: false,
        max_residual: T::zero(),
        intercept_offset: T::zero(),
        fell_back: false,
    })
}

/// `d rho_l / d lambda` of the free envelope at `lambda = 0`, from the
/// asymptotic series `sum_m C(2m,m) (4x^2)^-m prod_{j<=m} (lambda - j(j-1))`.
/// Returns the value and first two `x` derivatives.
fn free_envelope_dlambda<T: Real>(x: T) -> [T; 3] {
    let mut out = [T::zero(); 3];
    let inv = T::one() / (T::lit(4.0) * x * x);
    let mut coeff = T::lit(2.0) * inv; // C(2,1) / (4x^2), product = 1
    let mut prev_mag = T::infinity();
    for m in 1..40usize {
        if m > 1 {
            let mm = T::of(m);
            let binom_ratio = T::lit(2.0) * (T::lit(2.0) * mm - T::one()) / mm;
            coeff = coeff * binom_ratio * inv * (-T::of(m * (m - 1)));
        }
        let mag = coeff.abs();
        if mag > prev_mag || mag < T::lit(1e-18) {
            break;
        }
        prev_mag = mag;
        let p = T::of(2 * m);
        out[0] = out[0] + coeff;
        out[1] = out[1] - p * coeff / x;
        out[2] = out[2] + p * (p + T::one()) * coeff / (x * x);
    }
    out
}

/// `A_l = int k rho_bar / (rho_l rho_0)` over `r < boundary_R` for one channel.
fn curvature_integral<T: Real>(
    pair: &ChannelPair<T>,
    label: ChannelLabel,
    e: T,
    ell: usize,
    settings: &SolverSettings<T>,
    opts: &EnvelopeOptions<T>,
) -> Result<T> {
    let ch = pair.channel(label);
    let mu = pair.mu;
    let both: [&dyn Potential<T>; 2] = [&pair.va, &pair.vb];
    let grid = RadialGrid::for_scattering(&both, mu, e, ell.max(1), settings)?;
    let k = (T::lit(2.0) * mu * e).sqrt();
    let lambda = T::of(ell * (ell + 1));
    let two_mu = T::lit(2.0) * mu;
    let c = opts.form.coefficient::<T>();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let x = k * grid.r_max;
    let f0 = free_envelope(0, x);
    let bar = if ell == 0 {
        free_envelope_dlambda(x)
    } else {
        let fl = free_envelope(ell, x);
        [
            (fl[0] - f0[0]) / lambda,
            (fl[1] - f0[1]) / lambda,
            (fl[2] - f0[2]) / lambda,
        ]
    };
    let mut state = [
        f0[0],
        k * f0[1],
        k * k * f0[2],
        bar[0],
        k * bar[1],
        k * k * bar[2],
        T::zero(),
    ];
    if opts.form == EnvelopeForm::Product {
        // Same invariant for rho_0, and its lambda-derivative for rho_bar.
        let r = grid.r_max;
        let u0 = u_eff(ch, two_mu, e, T::zero(), r);
        state[2] = consistent_curvature(state[0], state[1], u0, k);
        let (p, dp, d2p) = (state[0], state[1], state[2]);
        let (q, dq) = (state[3], state[4]);
        state[5] = (-q * d2p + dp * dq + two * p * p / (r * r) + four * u0 * p * q) / p;
    }
    let mut r = grid.r_max;
    let inner = match grid.start {
        StartKind::Forbidden => grid.r_min * T::lit(0.5),
        _ => grid.r_min,
    };
    let mut legs: Vec<(T, bool)> = grid
        .breakpoints()
        .iter()
        .rev()
        .map(|b| (*b, false))
        .collect();
    legs.push((pair.boundary_r, true));
    legs.push((inner, false));
    legs.retain(|(b, _)| *b < grid.r_max);
    legs.sort_by(|p, q| q.0.partial_cmp(&p.0).expect("finite"));
    let ode = OdeOptions {
        rtol: opts.rtol,
        atol: T::lit(1e-300),
        initial_step: T::zero(),
        max_steps: 5_000_000,
    };
    let mut accumulate = false;
    for &(target, is_boundary) in legs.iter() {
        if target >= r {
            accumulate |= is_boundary;
            continue;
        }
        let acc = if accumulate { T::one() } else { T::zero() };
        let rhs = |r: T, y: &[T; 7]| {
            let u0 = u_eff(ch, two_mu, e, T::zero(), r);
            let du0 = two_mu * ch.derivative(r);
            let r2 = r * r;
            let ul = u0 + lambda / r2;
            let dul = du0 - two * lambda / (r2 * r);
            let src = four / r2 * (y[1] - y[0] / r);
            let rho_l = y[0] + lambda * y[3];
            [
                y[1],
                y[2],
                four * u0 * y[1] + c * du0 * y[0],
                y[4],
                y[5],
                four * ul * y[4] + two * dul * y[3] + src,
                -acc * k * y[3] / (rho_l * y[0]),
            ]
        };
        let stop = opts.rho_stop;
        let mut bad = false;
        let res = dopri5(
            rhs,
            r,
            state,
            target,
            &ode,
            |t, y| {
                bad |= !(y[0] > T::zero()) || !(y[0] + lambda * y[3] > T::zero());
                bad || y[0] > stop
                    || condition(y, u_eff(ch, two_mu, e, T::zero(), t), k) > opts.max_condition
            },
            |_, _| {},
        )?;
        if bad {
            return Err(Error::diverged(format!(
                "perturbation envelope unstable near r = {}",
                res.t
            )));
        }
        state = res.y;
        r = res.t;
        if res.stop == OdeStop::Event {
            break;
        }
        accumulate |= is_boundary;
        let above = u_eff(ch, two_mu, e, T::zero(), r);
        let below = u_eff_below(ch, two_mu, e, T::zero(), r);
        state[2] = state[2] + c * (below - above) * state[0];
        state[5] = state[5] + two * (below - above) * state[3];
    }
    Ok(state[6])
}
