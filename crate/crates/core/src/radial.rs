//! Single-channel radial Schrodinger integration.
//!
//! The regular solution of `u'' = U u` with
//! `U(r) = 2 mu (V(r) - E) + lambda / r^2` is propagated outward with the
//! Numerov recurrence. The step follows the shortest local wavelength still
//! ahead of the current radius, so it only ever grows; growth is done by the
//! exact "skip every other node" doubling. Discontinuities of `V` restart
//! the recurrence from a high-order estimate of `(u, u')`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::real::Real;
use crate::scales::derive_scales;
use crate::special::{fold_half_pi, fold_pi, free_phase_from, riccati};

/// Numerical knobs of the radial and envelope solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings<T = f64> {
    /// Numerov steps per shortest local wavelength (at least 20).
    pub steps_per_wavelength: T,
    /// Matching radius satisfies `|V(r_max)| / E` below this.
    pub match_tolerance: T,
    /// Start the regular solution where `V_eff` exceeds `E` by this factor.
    pub forbidden_factor: T,
    /// ... and where the WKB decay integral to the turning point reaches this.
    pub decay_depth: T,
    /// Upper bound on `h / r`, which governs steps where the wavelength diverges.
    pub max_relative_step: T,
    /// Matching radii beyond this are refused.
    pub r_max_cap: T,
    pub max_steps: usize,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        SolverSettings {
            steps_per_wavelength: T::lit(40.0),
            match_tolerance: T::lit(1e-8),
            forbidden_factor: T::lit(10.0),
            decay_depth: T::lit(20.0),
            max_relative_step: T::lit(0.005),
            r_max_cap: T::lit(1e12),
            max_steps: 50_000_000,
        }
    }
}

impl<T: Real> SolverSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.steps_per_wavelength >= T::lit(20.0)) {
            return Err(Error::invalid(format!(
                "grid too coarse: {} steps per wavelength, at least 20 required",
                self.steps_per_wavelength
            )));
        }
        let positive = [
            self.match_tolerance,
            self.forbidden_factor,
            self.decay_depth,
            self.max_relative_step,
            self.r_max_cap,
        ];
        if positive.iter().any(|v| !(*v > T::zero())) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        Ok(())
    }

    pub fn with_steps(mut self, steps_per_wavelength: T) -> Self {
        self.steps_per_wavelength = steps_per_wavelength;
        self
    }
}

/// How the regular solution is seeded at `r_start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartKind {
    /// `u(0) = 0` for a potential finite at the origin (s-wave only).
    Origin,
    /// `u = 0` on an impenetrable wall.
    Wall,
    /// WKB-growing seed deep in a classically forbidden region.
    Forbidden,
}

/// Step plan shared by every channel integrated at one `(E, l)`.
///
/// The plan stores the suffix maximum of `|U(r)|` over all channels, so two
/// channels integrated on the same grid take bit-identical steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid<T = f64> {
    pub r_min: T,
    pub r_max: T,
    pub start: StartKind,
    pub base_step: T,
    pub steps_per_wavelength: T,
    max_relative_step: T,
    max_steps: usize,
    table_r: Vec<T>,
    table_u: Vec<T>,
    breakpoints: Vec<T>,
}

#[inline]
pub(crate) fn u_eff<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    two_mu: T,
    e: T,
    lambda: T,
    r: T,
) -> T {
    let cent = if lambda == T::zero() {
        T::zero()
    } else {
        lambda / (r * r)
    };
    two_mu * (p.value(r) - e) + cent
}

#[inline]
pub(crate) fn u_eff_below<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    two_mu: T,
    e: T,
    lambda: T,
    r: T,
) -> T {
    let cent = if lambda == T::zero() {
        T::zero()
    } else {
        lambda / (r * r)
    };
    two_mu * (p.value_below(r) - e) + cent
}

fn find_start<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    mu: T,
    e: T,
    lambda: T,
    s: &SolverSettings<T>,
) -> Result<(StartKind, T)> {
    if let Some(rw) = p.hard_core() {
        return Ok((StartKind::Wall, rw));
    }
    let two_mu = T::lit(2.0) * mu;
    let scale = p.inner_scale();
    let floor = scale * T::lit(1e-12);
    let mut r = scale;
    while u_eff(p, two_mu, e, lambda, r) <= T::zero() {
        r = r * T::lit(0.9);
        if r < floor {
            if lambda > T::zero() {
                return Err(Error::domain(
                    "no classically forbidden region near the origin",
                ));
            }
            return Ok((StartKind::Origin, T::zero()));
        }
    }
    let need_u = two_mu * (s.forbidden_factor - T::one()) * e;
    let mut depth = T::zero();
    let mut u_prev = u_eff(p, two_mu, e, lambda, r);
    for _ in 0..100_000 {
        if u_prev >= need_u && depth >= s.decay_depth {
            return Ok((StartKind::Forbidden, r));
        }
        let r_next = r * T::lit(0.98);
        let u_next = u_eff(p, two_mu, e, lambda, r_next);
        if !u_next.is_finite() {
            return Ok((StartKind::Forbidden, r));
        }
        depth = depth
            + (r - r_next) * (u_prev.max(T::zero()).sqrt() + u_next.max(T::zero()).sqrt())
                / T::lit(2.0);
        r = r_next;
        u_prev = u_next;
    }
    Err(Error::diverged(
        "inner starting radius search did not terminate",
    ))
}

/// Matching radius: `|V|/E` below tolerance for tails, just past the range
/// for finite-range potentials, and always beyond the centrifugal turning
/// point by a couple of wavelengths.
fn matching_radius<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    mu: T,
    e: T,
    lambda: T,
    s: &SolverSettings<T>,
) -> Result<T> {
    let k = (T::lit(2.0) * mu * e).sqrt();
    let mut r = T::zero();
    if let Some(tail) = p.tail() {
        r = r.max((tail.c_n / (s.match_tolerance * e)).powf(T::one() / tail.n_real()));
    }
    if let Some(range) = p.range() {
        r = r.max(range);
    }
    if p.tail().is_none() && p.range().is_none() {
        return Err(Error::invalid(
            "potential declares neither a tail nor a finite range",
        ));
    }
    for b in p.breakpoints() {
        r = r.max(b);
    }
    let nu = lambda.sqrt() + T::lit(0.5);
    let turning = nu / k;
    let wavelength = T::TAU() / k;
    let r = if p.tail().is_some() {
        r.max(T::lit(1.5) * turning + T::lit(2.0) * wavelength)
    } else {
        r.max(T::lit(1.5) * turning) + T::lit(2.0) * wavelength
    };
    if !(r <= s.r_max_cap) || !r.is_finite() {
        return Err(Error::domain(format!(
            "matching radius {r} exceeds the cap {}; lower the energy cutoff or use a tail-correction treatment",
            s.r_max_cap
        )));
    }
    Ok(r)
}

impl<T: Real> RadialGrid<T> {
    /// Grid for scattering at energy `e > 0` in partial wave `ell`, shared by all `channels`.
    pub fn for_scattering(
        channels: &[&dyn Potential<T>],
        mu: T,
        e: T,
        ell: usize,
        s: &SolverSettings<T>,
    ) -> Result<Self> {
        if !(e > T::zero()) {
            return Err(Error::invalid(format!(
                "scattering energy {e} must be positive"
            )));
        }
        let lambda = T::of(ell * (ell + 1));
        let mut r_max = T::zero();
        for p in channels {
            r_max = r_max.max(matching_radius(*p, mu, e, lambda, s)?);
        }
        Self::build(channels, mu, e, lambda, r_max, s)
    }

    /// Grid for an arbitrary energy (including zero) ending at `r_end`.
    pub fn build(
        channels: &[&dyn Potential<T>],
        mu: T,
        e: T,
        lambda: T,
        r_end: T,
        s: &SolverSettings<T>,
    ) -> Result<Self> {
        s.validate()?;
        if channels.is_empty() {
            return Err(Error::invalid("no channels supplied"));
        }
        let mut start: Option<(StartKind, T)> = None;
        for p in channels {
            let (kind, r) = find_start(*p, mu, e, lambda, s)?;
            start = Some(match start {
                None => (kind, r),
                Some((k0, r0)) => {
                    if k0 != kind || (kind == StartKind::Wall && r0 != r) {
                        return Err(Error::invalid(
                            "channels on one grid need the same kind of inner boundary",
                        ));
                    }
                    (kind, r0.min(r))
                }
            });
        }
        let (start, r_min) = start.expect("non-empty");
        if !(r_end > r_min) {
            return Err(Error::invalid(format!(
                "grid end {r_end} not beyond start {r_min}"
            )));
        }
        let mut breakpoints: Vec<T> = channels
            .iter()
            .flat_map(|p| p.breakpoints())
            .filter(|b| *b > r_min && *b < r_end)
            .collect();
        breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        breakpoints.dedup();

        // Logarithmic sampling of |U| plus both sides of every breakpoint.
        let two_mu = T::lit(2.0) * mu;
        let lo = if r_min > T::zero() {
            r_min
        } else {
            r_end * T::lit(1e-9)
        };
        let per_efold = 200usize;
        let span = (r_end / lo).ln();
        let count = (span * T::of(per_efold))
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(2);
        let mut table_r: Vec<T> = (0..=count)
            .map(|i| lo * (span * T::of(i) / T::of(count)).exp())
            .collect();
        table_r.extend(breakpoints.iter().copied());
        table_r.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut table_u: Vec<T> = table_r
            .iter()
            .map(|&r| {
                channels.iter().fold(T::zero(), |m, p| {
                    let a = u_eff(*p, two_mu, e, lambda, r).abs();
                    let b = u_eff_below(*p, two_mu, e, lambda, r).abs();
                    m.max(a).max(b)
                })
            })
            .collect();
        for i in (0..table_u.len() - 1).rev() {
            table_u[i] = table_u[i].max(table_u[i + 1]);
        }
        let mut grid = RadialGrid {
            r_min,
            r_max: r_end,
            start,
            base_step: T::zero(),
            steps_per_wavelength: s.steps_per_wavelength,
            max_relative_step: s.max_relative_step,
            max_steps: s.max_steps,
            table_r,
            table_u,
            breakpoints,
        };
        let mut cursor = 0;
        grid.base_step = match start {
            StartKind::Origin => grid.wave_step(r_min, &mut cursor).min(r_end / T::lit(20.0)),
            _ => grid.allowed_step(r_min, &mut cursor),
        };
        Ok(grid)
    }

    fn wave_step(&self, r: T, cursor: &mut usize) -> T {
        while *cursor + 1 < self.table_r.len() && self.table_r[*cursor + 1] <= r {
            *cursor += 1;
        }
        let u = self.table_u[*cursor];
        if u > T::zero() {
            T::TAU() / (self.steps_per_wavelength * u.sqrt())
        } else {
            T::infinity()
        }
    }

    /// Largest admissible step at `r` (`cursor` caches the table position).
    fn allowed_step(&self, r: T, cursor: &mut usize) -> T {
        self.wave_step(r, cursor).min(self.max_relative_step * r)
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }
}

/// Result of one outward integration.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSolution<T = f64> {
    /// Sign changes of `u` on `(r_min, r_last]`.
    pub nodes: usize,
    /// The final two grid points `(r, u)`.
    pub tail: [(T, T); 2],
    /// All grid points when requested (common normalization).
    pub samples: Option<Vec<(T, T)>>,
    pub steps: usize,
}

const HISTORY: usize = 7;

struct History<T> {
    r: [T; HISTORY],
    y: [T; HISTORY],
    u: [T; HISTORY],
    len: usize,
}

impl<T: Real> History<T> {
    fn new() -> Self {
        History {
            r: [T::zero(); HISTORY],
            y: [T::zero(); HISTORY],
            u: [T::zero(); HISTORY],
            len: 0,
        }
    }

    fn push(&mut self, r: T, y: T, u: T) {
        if self.len == HISTORY {
            self.r.rotate_left(1);
            self.y.rotate_left(1);
            self.u.rotate_left(1);
            self.len -= 1;
        }
        self.r[self.len] = r;
        self.y[self.len] = y;
        self.u[self.len] = u;
        self.len += 1;
    }

    /// Entry `back` positions before the newest.
    fn at(&self, back: usize) -> (T, T, T) {
        let i = self.len - 1 - back;
        (self.r[i], self.y[i], self.u[i])
    }

    /// Keeps every other entry ending at the newest (step doubling).
    fn thin(&mut self) {
        let mut keep = Self::new();
        let mut back = (self.len - 1) & !1;
        loop {
            let (r, y, u) = self.at(back);
            keep.push(r, y, u);
            if back == 0 {
                break;
            }
            back -= 2;
        }
        *self = keep;
    }

    fn scale(&mut self, f: T) {
        for v in self.y.iter_mut().take(self.len) {
            *v = *v * f;
        }
    }

    /// `u'` at the newest node: `(y_n - y_{n-1})/h` plus the integral of
    /// `u''` against an interpolating polynomial through up to six entries.
    fn derivative(&self, h: T) -> T {
        let (_, y0, u0) = self.at(0);
        let (_, y1, u1) = self.at(1);
        let g0 = u0 * y0;
        let g1 = u1 * y1;
        if self.len >= 6 {
            const W: [f64; 6] = [2462.0, 4315.0, -3044.0, 1882.0, -682.0, 107.0];
            let acc = (0..6).fold(T::zero(), |acc, j| {
                let (_, y, u) = self.at(j);
                acc + T::lit(W[j]) * u * y
            });
            (y0 - y1) / h + h * acc / T::lit(10080.0)
        } else if self.len >= 4 {
            let (_, y2, u2) = self.at(2);
            let (_, y3, u3) = self.at(3);
            let g2 = u2 * y2;
            let g3 = u3 * y3;
            (y0 - y1) / h
                + h * (T::lit(97.0) * g0 + T::lit(114.0) * g1 - T::lit(39.0) * g2
                    + T::lit(8.0) * g3)
                    / T::lit(360.0)
        } else {
            (y0 - y1) / h + h * (T::lit(2.0) * g0 + g1) / T::lit(6.0)
        }
    }
}

/// Numerov weight for `z = h^2 U`: `z/12` up to `O(z^3)`, tuned so the
/// recurrence is exact when `U` is locally constant. This removes the
/// phase drift of plain Numerov over long free propagation.
#[inline]
fn fitted<T: Real>(z: T) -> T {
    let small = T::lit(1e-4);
    if z.abs() < small {
        return z / T::lit(12.0) - z * z * z / T::lit(2880.0);
    }
    let c_minus_1 = if z > T::zero() {
        let s = (z.sqrt() / T::lit(2.0)).sinh();
        T::lit(2.0) * s * s
    } else {
        let s = ((-z).sqrt() / T::lit(2.0)).sin();
        -T::lit(2.0) * s * s
    };
    c_minus_1 / (c_minus_1 + T::lit(6.0))
}

/// Classical RK4 on `(u, u')` over `[a, b]` with `m` sub-steps.
fn rk4_span<T: Real>(
    mut y: T,
    mut p: T,
    a: T,
    b: T,
    m: usize,
    u_at: &dyn Fn(T) -> T,
    nodes: &mut usize,
) -> (T, T) {
    let h = (b - a) / T::of(m);
    let half = h / T::lit(2.0);
    for i in 0..m {
        let r = a + T::of(i) * h;
        let rn = if i + 1 == m { b } else { r + h };
        let rm = r + half;
        let (um, ue) = (u_at(rm), u_at(rn));
        let ub = u_at(r);
        let k1y = p;
        let k1p = ub * y;
        let k2y = p + half * k1p;
        let k2p = um * (y + half * k1y);
        let k3y = p + half * k2p;
        let k3p = um * (y + half * k2y);
        let k4y = p + h * k3p;
        let k4p = ue * (y + h * k3y);
        let y_new = y + h / T::lit(6.0) * (k1y + T::lit(2.0) * (k2y + k3y) + k4y);
        p = p + h / T::lit(6.0) * (k1p + T::lit(2.0) * (k2p + k3p) + k4p);
        if y_new * y < T::zero() {
            *nodes += 1;
        }
        y = y_new;
    }
    (y, p)
}

/// Integrates the regular solution outward on `grid`.
pub fn integrate_radial<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    mu: T,
    e: T,
    lambda: T,
    grid: &RadialGrid<T>,
    keep_samples: bool,
) -> Result<RadialSolution<T>> {
    let two_mu = T::lit(2.0) * mu;
    let u_at = |r: T| u_eff(p, two_mu, e, lambda, r);
    let big = T::max_value().sqrt().sqrt();
    let mut samples: Option<Vec<(T, T)>> = if keep_samples { Some(Vec::new()) } else { None };
    let mut hist = History::new();
    let mut cursor = 0usize;
    let mut nodes = 0usize;
    let mut bp = grid.breakpoints.iter().copied().peekable();

    let r0 = grid.r_min;
    let mut h = grid.base_step;
    let (y0, y1) = match grid.start {
        StartKind::Origin | StartKind::Wall => (T::zero(), h),
        StartKind::Forbidden => {
            let k0 = u_at(r0).max(T::zero()).sqrt();
            let k1 = u_at(r0 + h).max(T::zero()).sqrt();
            let growth = (k0 / k1).sqrt() * (h * (k0 + k1) / T::lit(2.0)).exp();
            (T::one(), if growth.is_finite() { growth } else { T::one() })
        }
    };
    let u0 = if grid.start == StartKind::Origin && lambda == T::zero() {
        two_mu * (p.value(r0) - e)
    } else {
        u_at(r0)
    };
    hist.push(r0, y0, u0);
    hist.push(r0 + h, y1, u_at(r0 + h));
    if let Some(s) = samples.as_mut() {
        s.push((r0, y0));
        s.push((r0 + h, y1));
    }
    let mut seg_origin = r0;
    let mut seg_count = 1usize;
    let mut steps = 1usize;

    loop {
        let (r_n, y_n, u_n) = hist.at(0);
        if r_n >= grid.r_max && hist.len >= 2 {
            break;
        }
        if steps > grid.max_steps {
            return Err(Error::diverged(format!(
                "radial integration exceeded {} steps before reaching r = {}",
                grid.max_steps, grid.r_max
            )));
        }
        while let Some(&b) = bp.peek() {
            if b <= r_n {
                bp.next();
            } else {
                break;
            }
        }
        let next_bp = bp.peek().copied();

        // Step doubling, kept away from discontinuities.
        if hist.len >= 3 && seg_count >= 2 {
            let room = next_bp.map_or(true, |b| r_n + T::lit(8.0) * h < b);
            if room && grid.allowed_step(r_n, &mut cursor) >= T::lit(2.0) * h {
                hist.thin();
                h = h + h;
                seg_origin = r_n;
                seg_count = 0;
            }
        }

        if let Some(b) = next_bp {
            if r_n + h >= b - T::lit(1e-9) * h {
                // Restart across the discontinuity at b.
                let dy = hist.derivative(h);
                let sub = ((b - r_n) / h * T::lit(8.0))
                    .ceil()
                    .to_usize()
                    .unwrap_or(8)
                    .max(4);
                let below = |r: T| {
                    if r >= b {
                        u_eff_below(p, two_mu, e, lambda, b)
                    } else {
                        u_at(r)
                    }
                };
                let (yb, pb) = rk4_span(y_n, dy, r_n, b, sub, &below, &mut nodes);
                let h_new = grid.allowed_step(b, &mut cursor).min(h);
                let (y1, _) = rk4_span(yb, pb, b, b + h_new, 16, &u_at, &mut nodes);
                hist = History::new();
                hist.push(b, yb, u_at(b));
                hist.push(b + h_new, y1, u_at(b + h_new));
                if let Some(s) = samples.as_mut() {
                    s.push((b, yb));
                    s.push((b + h_new, y1));
                }
                h = h_new;
                seg_origin = b;
                seg_count = 1;
                steps += 2;
                bp.next();
                continue;
            }
        }

        let (_, y_m, u_m) = hist.at(1);
        seg_count += 1;
        let r_next = seg_origin + T::of(seg_count) * h;
        let u_next = u_at(r_next);
        let hh = h * h;
        let (a_m, a_n, a_next) = (fitted(hh * u_m), fitted(hh * u_n), fitted(hh * u_next));
        let mut y_next = (T::lit(2.0) * (T::one() + T::lit(5.0) * a_n) * y_n
            - (T::one() - a_m) * y_m)
            / (T::one() - a_next);
        if y_next * y_n < T::zero() {
            nodes += 1;
        }
        if y_next.abs() > big {
            let f = big.recip();
            hist.scale(f);
            y_next = y_next * f;
            if let Some(s) = samples.as_mut() {
                for v in s.iter_mut() {
                    v.1 = v.1 * f;
                }
            }
        }
        if !y_next.is_finite() {
            return Err(Error::diverged(
                "radial solution overflowed despite rescaling",
            ));
        }
        hist.push(r_next, y_next, u_next);
        if let Some(s) = samples.as_mut() {
            s.push((r_next, y_next));
        }
        steps += 1;
    }
    let (r2, y2, _) = hist.at(0);
    let (r1, y1, _) = hist.at(1);
    Ok(RadialSolution {
        nodes,
        tail: [(r1, y1), (r2, y2)],
        samples,
        steps,
    })
}

/// How an absolute phase shift was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMethod {
    Matching,
    Milne,
    Hybrid,
}

/// Absolute phase shift with its modulo-pi representative and node count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseShiftRecord<T = f64> {
    pub ell: usize,
    pub energy: T,
    pub eta: T,
    pub eta_mod_pi: T,
    pub nodes: usize,
    pub method: PhaseMethod,
    /// `|sin|` of the free-phase separation of the two matching points.
    pub conditioning: T,
    /// Energy was nudged to escape an ill-conditioned match.
    pub perturbed: bool,
    /// First-order tail phase beyond the matching radius, already included.
    pub tail_correction: T,
}

/// Smooth first-order phase picked up by an inverse-power tail beyond
/// `r_max`, `-(mu/k) int V(r) rho_free(kr) dr`, with an error estimate
/// covering the neglected oscillatory part and the next series term.
pub fn tail_phase_correction<T: Real, P: Potential<T> + ?Sized>(
    p: &P,
    mu: T,
    k: T,
    ell: usize,
    r_max: T,
) -> (T, T) {
    let Some(tail) = p.tail() else {
        return (T::zero(), T::zero());
    };
    let n = tail.n_real();
    let lambda = T::of(ell * (ell + 1));
    let k2 = k * k;
    let one = T::one();
    let pref = mu * tail.c_n / k;
    let t0 = r_max.powf(one - n) / (n - one);
    let t1 = lambda / (T::lit(2.0) * k2) * r_max.powf(-one - n) / (n + one);
    let t2 = T::lit(3.0) * lambda * (lambda - T::lit(2.0)) / (T::lit(8.0) * k2 * k2)
        * r_max.powf(-T::lit(3.0) - n)
        / (n + T::lit(3.0));
    let value = pref * (t0 + t1 + t2);
    let oscillatory = mu * tail.c_n / (T::lit(2.0) * k2) * r_max.powf(-n);
    (value, oscillatory + (pref * t2).abs())
}

/// Matches the last two grid points to Riccati-Bessel functions.
///
/// The absolute phase follows from the Milne phase of the numerical
/// solution, which is a multiple of pi at every node: it equals
/// `pi * nodes + frac`, where `frac` is the fractional part implied by the
/// match, and the free phase is subtracted.
pub fn match_solution<T: Real>(sol: &RadialSolution<T>, ell: usize, k: T) -> (T, T, T) {
    let [(r1, y1), (r2, y2)] = sol.tail;
    let a = riccati(ell, k * r1);
    let b = riccati(ell, k * r2);
    let num = y1 * b.j - y2 * a.j;
    let den = y1 * b.y - y2 * a.y;
    let eta_mod = fold_pi(num.atan2(den));
    let wr = (a.j * b.y - b.j * a.y).abs();
    let conditioning = wr / ((a.j * a.j + a.y * a.y).sqrt() * (b.j * b.j + b.y * b.y).sqrt());
    let psi = free_phase_from(ell, k * r2, &b);
    let pi = T::PI();
    let mut frac = fold_pi(psi + eta_mod);
    let edge = T::lit(1e-6);
    if frac < edge || pi - frac < edge {
        let leaving_node = y2 * (y2 - y1) > T::zero();
        if leaving_node && frac > T::FRAC_PI_2() {
            frac = frac - pi;
        } else if !leaving_node && frac < T::FRAC_PI_2() {
            frac = frac + pi;
        }
    }
    let theta = pi * T::of(sol.nodes) + frac;
    (theta - psi, eta_mod, conditioning)
}

const ILL_CONDITIONED: f64 = 1e-10;

/// Absolute phase shifts of several channels integrated on one shared grid.
pub fn phase_shifts_shared<T: Real>(
    channels: &[&dyn Potential<T>],
    mu: T,
    e: T,
    ell: usize,
    s: &SolverSettings<T>,
) -> Result<Vec<PhaseShiftRecord<T>>> {
    let mut energy = e;
    let mut perturbed = false;
    for _ in 0..4 {
        let grid = RadialGrid::for_scattering(channels, mu, energy, ell, s)?;
        let k = (T::lit(2.0) * mu * energy).sqrt();
        let lambda = T::of(ell * (ell + 1));
        let mut out = Vec::with_capacity(channels.len());
        let mut bad = false;
        for p in channels {
            let sol = integrate_radial(*p, mu, energy, lambda, &grid, false)?;
            let (eta, eta_mod_pi, conditioning) = match_solution(&sol, ell, k);
            let (tail_correction, _) = tail_phase_correction(*p, mu, k, ell, grid.r_max);
            let (eta, eta_mod_pi) = (eta + tail_correction, fold_pi(eta_mod_pi + tail_correction));
            bad |= conditioning < T::lit(ILL_CONDITIONED);
            out.push(PhaseShiftRecord {
                ell,
                energy,
                eta,
                eta_mod_pi,
                nodes: sol.nodes,
                method: PhaseMethod::Matching,
                conditioning,
                perturbed,
                tail_correction,
            });
        }
        if !bad {
            return Ok(out);
        }
        energy = energy * (T::one() + T::lit(1e-9));
        perturbed = true;
    }
    Err(Error::diverged(format!(
        "matching stayed ill-conditioned near E = {e}, l = {ell}"
    )))
}

/// Absolute phase shift of one channel.
pub fn phase_shift<T: Real, P: Potential<T>>(
    p: &P,
    mu: T,
    e: T,
    ell: usize,
    s: &SolverSettings<T>,
) -> Result<PhaseShiftRecord<T>> {
    let recs = phase_shifts_shared(&[p as &dyn Potential<T>], mu, e, ell, s)?;
    Ok(recs[0])
}

/// Phase shift folded into `[0, pi)`.
pub fn phase_shift_mod_pi<T: Real, P: Potential<T>>(
    p: &P,
    mu: T,
    e: T,
    ell: usize,
    s: &SolverSettings<T>,
) -> Result<T> {
    Ok(phase_shift(p, mu, e, ell, s)?.eta_mod_pi)
}

/// Bound-state count, possibly ambiguous near a zero-energy resonance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundStateCount {
    pub count: usize,
    /// Counts at the two extrapolation radii when they disagree.
    pub ambiguous: Option<(usize, usize)>,
}

/// Reference length for threshold quantities: `R*` for tails, else the range.
pub(crate) fn threshold_length<T: Real, P: Potential<T> + ?Sized>(p: &P, mu: T) -> Result<T> {
    if let Some(tail) = p.tail() {
        return Ok(derive_scales(&tail, mu)?.r_star);
    }
    if let Some(range) = p.range() {
        if range > T::zero() {
            return Ok(range);
        }
        return Ok(p.inner_scale());
    }
    Err(Error::invalid(
        "potential declares neither a tail nor a finite range",
    ))
}

fn zero_energy_nodes<T: Real, P: Potential<T>>(
    p: &P,
    mu: T,
    lambda: T,
    r_end: T,
    s: &SolverSettings<T>,
) -> Result<usize> {
    let grid = RadialGrid::build(&[p as &dyn Potential<T>], mu, T::zero(), lambda, r_end, s)?;
    let sol = integrate_radial(p, mu, T::zero(), lambda, &grid, false)?;
    // Beyond r_end: u = A t^(l+1) + B t^-l with t = r / r2.
    let [(r1, y1), (r2, y2)] = sol.tail;
    let l = (lambda * T::lit(4.0) + T::one()).sqrt() / T::lit(2.0) - T::lit(0.5);
    let t1 = r1 / r2;
    let p_hi = t1.powf(l + T::one());
    let p_lo = t1.powf(-l);
    let det = p_hi - p_lo;
    let a = (y1 - p_lo * y2) / det;
    let b = y2 - a;
    let extra = if a != T::zero() && -b / a > T::one() {
        1
    } else {
        0
    };
    Ok(sol.nodes + extra)
}

/// Number of bound states of `V + l(l+1)/(2 mu r^2)` from the zero-energy node count.
pub fn count_bound_states<T: Real, P: Potential<T>>(
    p: &P,
    mu: T,
    ell: usize,
    s: &SolverSettings<T>,
) -> Result<BoundStateCount> {
    let lambda = T::of(ell * (ell + 1));
    let len = threshold_length(p, mu)?;
    let r1 = (T::lit(100.0) * len).max(T::lit(10.0) * p.inner_scale());
    let n1 = zero_energy_nodes(p, mu, lambda, r1, s)?;
    let n2 = zero_energy_nodes(p, mu, lambda, T::lit(10.0) * r1, s)?;
    Ok(BoundStateCount {
        count: n2,
        ambiguous: if n1 == n2 { None } else { Some((n1, n2)) },
    })
}

/// Scattering length with a Richardson error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringLength<T = f64> {
    pub a: T,
    pub error: T,
    /// Extrapolation did not settle (zero-energy resonance nearby).
    pub uncertain: bool,
}

/// `a = -lim tan(delta_0)/k` from `k0 = 1e-2 / R*`, `k0/2`, `k0/4`.
pub fn scattering_length<T: Real, P: Potential<T>>(
    p: &P,
    mu: T,
    s: &SolverSettings<T>,
) -> Result<ScatteringLength<T>> {
    if let Some(tail) = p.tail() {
        if tail.n <= 3 {
            return Err(Error::domain(
                "scattering length undefined for tails with n <= 3",
            ));
        }
    }
    let len = threshold_length(p, mu)?;
    let k0 = T::lit(1e-2) / len;
    let mut a_k = [T::zero(); 3];
    for (i, slot) in a_k.iter_mut().enumerate() {
        let k = k0 / T::of(1 << i);
        let e = k * k / (T::lit(2.0) * mu);
        let eta = phase_shift(p, mu, e, 0, s)?.eta_mod_pi;
        *slot = -fold_half_pi(eta).tan() / k;
    }
    let r1a = T::lit(2.0) * a_k[1] - a_k[0];
    let r1b = T::lit(2.0) * a_k[2] - a_k[1];
    let a = (T::lit(4.0) * r1b - r1a) / T::lit(3.0);
    let error = (a - r1b).abs();
    let uncertain = !(error <= T::lit(1e-3) * a.abs().max(len * T::lit(1e-3)));
    Ok(ScatteringLength {
        a,
        error,
        uncertain,
    })
}
