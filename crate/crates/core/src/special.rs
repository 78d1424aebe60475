//! Riccati-Bessel functions and the free-particle envelope and phase.
//!
//! Conventions: `jh(x) = x j_l(x) ~ sin(x - l pi/2)` and
//! `yh(x) = x y_l(x) ~ -cos(x - l pi/2)`, so the regular free solution with
//! phase shift `eta` is `jh cos(eta) - yh sin(eta)`.

use crate::real::Real;

/// Riccati-Bessel values and first derivatives at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Riccati<T> {
    pub j: T,
    pub y: T,
    pub dj: T,
    pub dy: T,
}

/// Continued fraction for `j_l / j_{l-1}` (modified Lentz).
fn ratio_cf<T: Real>(ell: usize, x: T) -> T {
    let tiny = T::min_positive_value().sqrt();
    let eps = T::epsilon();
    let b = |m: usize| T::of(2 * m + 1) / x;
    // f = 1 / (b_l - 1 / (b_{l+1} - ...)), evaluated as g = b_l - 1/(b_{l+1} - ...).
    let mut g = b(ell);
    if g == T::zero() {
        g = tiny;
    }
    let mut c = g;
    let mut d = T::zero();
    let max_iter = 100_000 + 4 * (x.to_usize().unwrap_or(usize::MAX / 8));
    for m in (ell + 1..).take(max_iter) {
        d = b(m) - d;
        if d == T::zero() {
            d = tiny;
        }
        c = b(m) - c.recip();
        if c == T::zero() {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        g = g * delta;
        if (delta - T::one()).abs() < eps {
            break;
        }
    }
    // The CF above represents b_l - a/(...) with a = 1: g_l = b_l - 1/g_{l+1}.
    g.recip()
}

/// `(jh_l, jh_{l-1})` for `l >= 1` via continued-fraction-seeded downward recurrence.
fn regular_pair<T: Real>(ell: usize, x: T) -> (T, T) {
    debug_assert!(ell >= 1);
    let (s, c) = x.sin_cos();
    let y0 = -c;
    let y1 = -c / x - s;
    let big = T::max_value().sqrt().sqrt();
    let f = ratio_cf(ell, x);
    let mut hi = T::one(); // scaled jh_l
    let mut lo = hi / f; // scaled jh_{l-1}
    let (top, below) = (hi, lo);
    let mut scale = T::one();
    // Walk down to (jh_1, jh_0).
    for m in (1..ell).rev() {
        let next = T::of(2 * m + 1) / x * lo - hi;
        hi = lo;
        lo = next;
        if lo.abs() > big {
            hi = hi / big;
            lo = lo / big;
            scale = scale * big;
        }
    }
    // Wronskian jh_1 yh_0 - jh_0 yh_1 = 1 fixes the normalization.
    let w = hi * y0 - lo * y1;
    let norm = w * scale;
    (top / norm, below / norm)
}

/// Irregular pair `(yh_l, yh_{l-1})` by upward recurrence.
fn irregular_pair<T: Real>(ell: usize, x: T) -> (T, T) {
    let (s, c) = x.sin_cos();
    let mut prev = -c;
    if ell == 0 {
        return (prev, s); // yh_{-1} = sin x
    }
    let mut cur = -c / x - s;
    for m in 1..ell {
        let next = T::of(2 * m + 1) / x * cur - prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Riccati-Bessel functions `jh_l(x)`, `yh_l(x)` and their derivatives.
pub fn riccati<T: Real>(ell: usize, x: T) -> Riccati<T> {
    let (s, c) = x.sin_cos();
    if ell == 0 {
        return Riccati {
            j: s,
            y: -c,
            dj: c,
            dy: s,
        };
    }
    let (j, jm) = if x > T::of(ell) {
        upward_regular(ell, x)
    } else {
        regular_pair(ell, x)
    };
    let (y, ym) = irregular_pair(ell, x);
    let l_over_x = T::of(ell) / x;
    Riccati {
        j,
        y,
        dj: jm - l_over_x * j,
        dy: ym - l_over_x * y,
    }
}

/// Upward recurrence for the regular function, stable once `x > l`.
fn upward_regular<T: Real>(ell: usize, x: T) -> (T, T) {
    let (s, c) = x.sin_cos();
    let mut prev = s;
    let mut cur = s / x - c;
    for m in 1..ell {
        let next = T::of(2 * m + 1) / x * cur - prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Regular Riccati-Bessel function by the downward recurrence only.
///
/// Exposed for cross-checking [`riccati`], which switches to upward
/// recurrence above the turning point.
pub fn riccati_j_downward<T: Real>(ell: usize, x: T) -> T {
    if ell == 0 {
        x.sin()
    } else {
        regular_pair(ell, x).0
    }
}

/// Free-particle envelope `rho(x) = jh^2 + yh^2` with its first two
/// derivatives with respect to `x`.
pub fn free_envelope<T: Real>(ell: usize, x: T) -> [T; 3] {
    let r = riccati(ell, x);
    let q = T::of(ell * (ell + 1)) / (x * x) - T::one();
    let two = T::lit(2.0);
    let rho = r.j * r.j + r.y * r.y;
    let d1 = two * (r.j * r.dj + r.y * r.dy);
    let d2 = two * (r.dj * r.dj + r.dy * r.dy + q * rho);
    [rho, d1, d2]
}

/// Uniform (Debye) estimate of the free Milne phase; good to well under
/// `pi/2` for every `x`, which is all the branch selection needs.
fn free_phase_estimate<T: Real>(ell: usize, x: T) -> T {
    let nu = T::of(ell) + T::lit(0.5);
    if x <= nu {
        return T::zero();
    }
    (x * x - nu * nu).sqrt() - nu * (nu / x).acos() + T::FRAC_PI_4()
}

/// Absolute free Milne phase `psi(x) = int_0^x dt / (jh^2 + yh^2)`.
///
/// Tends to `x - l pi/2` for large `x` and to zero at the origin.
pub fn free_phase<T: Real>(ell: usize, x: T) -> T {
    let r = riccati(ell, x);
    free_phase_from(ell, x, &r)
}

pub(crate) fn free_phase_from<T: Real>(ell: usize, x: T, r: &Riccati<T>) -> T {
    let two_pi = T::TAU();
    let mut base = r.j.atan2(-r.y);
    if base < T::zero() {
        base = base + two_pi;
    }
    let est = free_phase_estimate(ell, x);
    base + two_pi * ((est - base) / two_pi).round()
}

/// Hard-sphere phase shift `atan2(j_l(kR), y_l(kR))` folded to `[0, pi)`;
/// with the `jh cos - yh sin` convention this is `tan(eta) = jh/yh`.
pub fn hard_sphere_phase<T: Real>(ell: usize, kr: T) -> T {
    let r = riccati(ell, kr);
    fold_pi(r.j.atan2(r.y))
}

/// Folds an angle into `[0, pi)`.
pub fn fold_pi<T: Real>(a: T) -> T {
    let pi = T::PI();
    let mut v = a - pi * (a / pi).floor();
    if v >= pi {
        v = v - pi;
    }
    if v < T::zero() {
        v = v + pi;
    }
    v
}

/// Folds an angle into `(-pi/2, pi/2]`.
pub fn fold_half_pi<T: Real>(a: T) -> T {
    let pi = T::PI();
    let half = T::FRAC_PI_2();
    let mut v = a - pi * (a / pi).round();
    if v <= -half {
        v = v + pi;
    }
    if v > half {
        v = v - pi;
    }
    v
}
