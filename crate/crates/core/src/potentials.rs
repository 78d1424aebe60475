//! Channel potentials with a shared inverse-power tail.
//!
//! The default short-range family is a repulsive `C_rep / r^12` wall on top
//! of the tail, one tunable coefficient per channel. Tabulated curves are
//! supported through a natural cubic spline spliced onto the tail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::scales::{derive_scales, TailSpec};

/// Radial potential seen by the single-channel solvers.
pub trait Potential<T: Real>: Sync {
    fn value(&self, r: T) -> T;

    /// Left-hand limit at a discontinuity; equal to `value` elsewhere.
    fn value_below(&self, r: T) -> T {
        self.value(r)
    }

    fn derivative(&self, r: T) -> T {
        let h = r * T::lit(1e-5);
        (self.value(r + h) - self.value(r - h)) / (h + h)
    }

    /// Radii where the potential jumps.
    fn breakpoints(&self) -> Vec<T> {
        Vec::new()
    }

    /// Radius of an impenetrable wall, if any.
    fn hard_core(&self) -> Option<T> {
        None
    }

    /// Inverse-power tail governing the matching radius, if any.
    fn tail(&self) -> Option<TailSpec<T>> {
        None
    }

    /// Radius beyond which the potential vanishes identically.
    fn range(&self) -> Option<T> {
        None
    }

    /// Typical short-range length, used to start turning-point searches.
    fn inner_scale(&self) -> T {
        T::one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelLabel {
    A,
    B,
}

/// Natural cubic spline on strictly increasing abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline<T> {
    x: Vec<T>,
    y: Vec<T>,
    m: Vec<T>,
}

impl<T: Real> CubicSpline<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::invalid("spline needs at least three (r, V) pairs"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "tabulated radii must be strictly increasing",
            ));
        }
        // Tridiagonal solve for second derivatives with natural end conditions.
        let two = T::lit(2.0);
        let six = T::lit(6.0);
        let mut m = vec![T::zero(); n];
        let mut c = vec![T::zero(); n];
        let mut d = vec![T::zero(); n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let rhs = six * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            let diag = two * (h0 + h1) - h0 * c[i - 1];
            c[i] = h1 / diag;
            d[i] = (rhs - h0 * d[i - 1]) / diag;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        Ok(CubicSpline { x, y, m })
    }

    pub fn eval(&self, t: T) -> T {
        let n = self.x.len();
        let i = match self
            .x
            .binary_search_by(|v| v.partial_cmp(&t).expect("finite radius"))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let six = T::lit(6.0);
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / six
    }

    pub fn domain(&self) -> (T, T) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

/// Short-range part of a channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ShortRange<T> {
    /// `C_rep / r^12` added to the tail.
    Power12 { c_rep: T },
    /// Spline through samples, replaced by the bare tail beyond `splice`.
    Tabulated { spline: CubicSpline<T>, splice: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPotential<T = f64> {
    pub label: ChannelLabel,
    pub short: ShortRange<T>,
    pub tail: TailSpec<T>,
}

impl<T: Real> ChannelPotential<T> {
    pub fn power12(label: ChannelLabel, c_rep: T, tail: TailSpec<T>) -> Result<Self> {
        tail.validate()?;
        if !(c_rep > T::zero()) || !c_rep.is_finite() {
            return Err(Error::invalid(format!(
                "repulsive coefficient {c_rep} must be positive"
            )));
        }
        if tail.n >= 12 {
            return Err(Error::invalid("r^-12 core needs a tail exponent below 12"));
        }
        Ok(ChannelPotential {
            label,
            short: ShortRange::Power12 { c_rep },
            tail,
        })
    }

    /// Spline through `(r, V)` samples spliced onto the tail at `splice`.
    ///
    /// Inside the first sample the wall is continued as `V(r0) (r0/r)^12`.
    pub fn tabulated(
        label: ChannelLabel,
        r: Vec<T>,
        v: Vec<T>,
        tail: TailSpec<T>,
        splice: T,
    ) -> Result<Self> {
        tail.validate()?;
        let spline = CubicSpline::new(r, v)?;
        let (lo, hi) = spline.domain();
        if !(splice > lo && splice <= hi) {
            return Err(Error::invalid(format!(
                "splice radius {splice} outside tabulated range [{lo}, {hi}]"
            )));
        }
        if !(spline.eval(lo) > T::zero()) {
            return Err(Error::invalid(
                "tabulated curve must start on the repulsive wall (V > 0)",
            ));
        }
        Ok(ChannelPotential {
            label,
            short: ShortRange::Tabulated { spline, splice },
            tail,
        })
    }

    pub fn c_rep(&self) -> Option<T> {
        match self.short {
            ShortRange::Power12 { c_rep } => Some(c_rep),
            ShortRange::Tabulated { .. } => None,
        }
    }
}

impl<T: Real> Potential<T> for ChannelPotential<T> {
    fn value(&self, r: T) -> T {
        match &self.short {
            ShortRange::Power12 { c_rep } => {
                let r2 = r * r;
                let r4 = r2 * r2;
                let r12 = r4 * r4 * r4;
                *c_rep / r12 + self.tail.potential(r)
            }
            ShortRange::Tabulated { spline, splice } => {
                let (lo, _) = spline.domain();
                if r >= *splice {
                    self.tail.potential(r)
                } else if r < lo {
                    spline.eval(lo) * (lo / r).powi(12)
                } else {
                    spline.eval(r)
                }
            }
        }
    }

    fn value_below(&self, r: T) -> T {
        match &self.short {
            ShortRange::Tabulated { spline, splice } if r == *splice => spline.eval(r),
            _ => self.value(r),
        }
    }

    fn derivative(&self, r: T) -> T {
        match &self.short {
            ShortRange::Power12 { c_rep } => {
                let n = self.tail.n as i32;
                T::lit(-12.0) * *c_rep / r.powi(13)
                    + T::from_i32(n).expect("small") * self.tail.c_n / r.powi(n + 1)
            }
            ShortRange::Tabulated { .. } => {
                let h = r * T::lit(1e-5);
                (self.value(r + h) - self.value(r - h)) / (h + h)
            }
        }
    }

    fn breakpoints(&self) -> Vec<T> {
        match &self.short {
            ShortRange::Tabulated { splice, .. } => vec![*splice],
            ShortRange::Power12 { .. } => Vec::new(),
        }
    }

    fn tail(&self) -> Option<TailSpec<T>> {
        Some(self.tail)
    }

    fn inner_scale(&self) -> T {
        match &self.short {
            ShortRange::Power12 { c_rep } => zero_crossing_12n(*c_rep, &self.tail),
            ShortRange::Tabulated { spline, .. } => spline.domain().0,
        }
    }
}

/// Radius where `C_rep/r^12` and the tail cancel.
fn zero_crossing_12n<T: Real>(c_rep: T, tail: &TailSpec<T>) -> T {
    let n = tail.n as i32;
    (c_rep / tail.c_n).powf(T::one() / T::from_i32(12 - n).expect("small"))
}

/// Two channels with one tail and one reduced mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair<T = f64> {
    pub va: ChannelPotential<T>,
    pub vb: ChannelPotential<T>,
    pub boundary_r: T,
    pub mu: T,
}

impl<T: Real> ChannelPair<T> {
    pub fn tail(&self) -> TailSpec<T> {
        self.va.tail
    }

    pub fn channel(&self, label: ChannelLabel) -> &ChannelPotential<T> {
        match label {
            ChannelLabel::A => &self.va,
            ChannelLabel::B => &self.vb,
        }
    }

    /// Identical potentials in both channels.
    pub fn is_degenerate(&self) -> bool {
        self.va.short == self.vb.short
    }

    /// Depth of the shallower well, the short-range energy scale.
    pub fn shallow_depth(&self) -> Result<T> {
        let a = well_summary(&self.va)?.v_depth;
        let b = well_summary(&self.vb)?.v_depth;
        Ok(a.min(b))
    }
}

/// Builds a channel pair; the boundary is where the short-range parts fall
/// below `1e-10 E*`.
pub fn make_pair<T: Real>(
    va: ChannelPotential<T>,
    vb: ChannelPotential<T>,
    mu: T,
) -> Result<ChannelPair<T>> {
    if va.tail != vb.tail {
        return Err(Error::invalid("channels must share one tail specification"));
    }
    let tail = va.tail;
    let scales = derive_scales(&tail, mu)?;
    let threshold = T::lit(1e-10) * scales.e_star;
    let mut boundary = T::zero();
    for ch in [&va, &vb] {
        let r = match &ch.short {
            ShortRange::Power12 { c_rep } => (*c_rep / threshold).powf(T::one() / T::lit(12.0)),
            ShortRange::Tabulated { splice, .. } => *splice,
        };
        boundary = boundary.max(r);
        // Every channel needs an attractive well capable of supporting a barrier.
        well_summary(ch)?;
    }
    Ok(ChannelPair {
        va,
        vb,
        boundary_r: boundary,
        mu,
    })
}

/// Location and depth of a channel's potential minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellSummary<T = f64> {
    pub r_min: T,
    pub v_depth: T,
}

/// Finds the well minimum: a coarse logarithmic scan brackets it, then the
/// zero of `dV/dr` is refined by bisection.
pub fn well_summary<T: Real, P: Potential<T> + ?Sized>(ch: &P) -> Result<WellSummary<T>> {
    let scale = ch.inner_scale();
    let lo = scale * T::lit(0.05);
    let hi = scale * T::lit(1e4);
    let steps = 4000usize;
    let ratio = (hi / lo).powf(T::one() / T::of(steps));
    let mut best = (lo, ch.value(lo));
    let mut r = lo;
    for _ in 0..steps {
        r = r * ratio;
        let v = ch.value(r);
        if v < best.1 {
            best = (r, v);
        }
    }
    if !(best.1 < T::zero()) || best.0 >= hi / ratio || best.0 <= lo * ratio {
        return Err(Error::domain(
            "potential has no interior attractive minimum",
        ));
    }
    let (mut a, mut b) = (best.0 / ratio, best.0 * ratio);
    if !(ch.derivative(a) < T::zero() && ch.derivative(b) > T::zero()) {
        return Err(Error::domain("could not bracket the potential minimum"));
    }
    let tol = T::lit(1e-13);
    for _ in 0..200 {
        let m = (a + b) / T::lit(2.0);
        if ch.derivative(m) < T::zero() {
            a = m;
        } else {
            b = m;
        }
        if (b - a) <= tol * m {
            break;
        }
    }
    let r_min = (a + b) / T::lit(2.0);
    Ok(WellSummary {
        r_min,
        v_depth: -ch.value(r_min),
    })
}

/// Analytic potentials used as oracles for the radial solvers.
pub mod oracle {
    use super::*;

    /// No interaction.
    #[derive(Debug, Clone, Copy, Default)]
    pub struct Free;

    impl<T: Real> Potential<T> for Free {
        fn value(&self, _r: T) -> T {
            T::zero()
        }
        fn range(&self) -> Option<T> {
            Some(T::zero())
        }
    }

    /// Attractive square well of depth `v0` and radius `radius`.
    #[derive(Debug, Clone, Copy)]
    pub struct SquareWell<T> {
        pub v0: T,
        pub radius: T,
    }

    impl<T: Real> Potential<T> for SquareWell<T> {
        fn value(&self, r: T) -> T {
            if r < self.radius {
                -self.v0
            } else {
                T::zero()
            }
        }
        fn value_below(&self, r: T) -> T {
            if r <= self.radius {
                -self.v0
            } else {
                T::zero()
            }
        }
        fn derivative(&self, _r: T) -> T {
            T::zero()
        }
        fn breakpoints(&self) -> Vec<T> {
            vec![self.radius]
        }
        fn range(&self) -> Option<T> {
            Some(self.radius)
        }
        fn inner_scale(&self) -> T {
            self.radius
        }
    }

    /// Impenetrable sphere of radius `radius`.
    #[derive(Debug, Clone, Copy)]
    pub struct HardSphere<T> {
        pub radius: T,
    }

    impl<T: Real> Potential<T> for HardSphere<T> {
        fn value(&self, _r: T) -> T {
            T::zero()
        }
        fn hard_core(&self) -> Option<T> {
            Some(self.radius)
        }
        fn range(&self) -> Option<T> {
            Some(self.radius)
        }
        fn inner_scale(&self) -> T {
            self.radius
        }
    }
}
