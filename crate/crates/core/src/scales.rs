//! Characteristic scales of an attractive inverse-power tail, the Langevin
//! capture cutoff, and centrifugal-barrier geometry.
//!
//! Everything is in atomic units with hbar = 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Long-range tail `V(r) = -C_n / r^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec<T = f64> {
    pub n: u32,
    pub c_n: T,
}

impl<T: Real> TailSpec<T> {
    pub fn new(n: u32, c_n: T) -> Result<Self> {
        let tail = TailSpec { n, c_n };
        tail.validate()?;
        Ok(tail)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::invalid(format!(
                "tail exponent n = {} must be at least 3",
                self.n
            )));
        }
        if !(self.c_n > T::zero()) || !self.c_n.is_finite() {
            return Err(Error::invalid(format!(
                "tail coefficient C_n = {} must be positive",
                self.c_n
            )));
        }
        Ok(())
    }

    /// `-C_n / r^n`.
    #[inline]
    pub fn potential(&self, r: T) -> T {
        -self.c_n / r.powi(self.n as i32)
    }

    #[inline]
    pub fn n_real(&self) -> T {
        T::from_u32(self.n).expect("small integer")
    }
}

/// `R*`, `E*` and `k* = 1/R*` for a tail and reduced mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet<T = f64> {
    pub r_star: T,
    pub e_star: T,
    pub k_star: T,
}

/// Radius and height of the centrifugal barrier top for (continuous) `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierGeometry<T = f64> {
    pub ell: T,
    pub s_ell: T,
    pub e_top: T,
}

fn check_mu<T: Real>(mu: T) -> Result<()> {
    if mu > T::zero() && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "reduced mass {mu} must be positive"
        )))
    }
}

fn check_energy<T: Real>(e: T) -> Result<()> {
    if e > T::zero() && e.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "collision energy {e} must be positive"
        )))
    }
}

pub fn derive_scales<T: Real>(tail: &TailSpec<T>, mu: T) -> Result<ScaleSet<T>> {
    tail.validate()?;
    check_mu(mu)?;
    let two = T::lit(2.0);
    let r_star = (two * mu * tail.c_n).powf(T::one() / (tail.n_real() - two));
    let e_star = T::one() / (two * mu * r_star * r_star);
    Ok(ScaleSet {
        r_star,
        e_star,
        k_star: r_star.recip(),
    })
}

/// `g_n = n/(n-2) * ((n-2)/2)^(2/n)`; equals 2 at `n = 4` and tends to 1 as `n` grows.
pub fn g_factor<T: Real>(n: u32) -> Result<T> {
    if n < 3 {
        return Err(Error::invalid(format!("g_n undefined for n = {n}")));
    }
    if n == 4 {
        return Ok(T::lit(2.0));
    }
    let n = T::from_u32(n).expect("small integer");
    let two = T::lit(2.0);
    Ok(n / (n - two) * ((n - two) / two).powf(two / n))
}

/// Relative wavenumber `k = sqrt(2 mu E)`.
#[inline]
pub fn wavenumber<T: Real>(mu: T, e: T) -> T {
    (T::lit(2.0) * mu * e).sqrt()
}

/// Langevin cutoff `Lambda = g_n (E/E*)^((n-2)/n)`.
pub fn cutoff_lambda<T: Real>(tail: &TailSpec<T>, mu: T, e: T) -> Result<T> {
    check_energy(e)?;
    let scales = derive_scales(tail, mu)?;
    let n = tail.n_real();
    let g = g_factor::<T>(tail.n)?;
    Ok(g * (e / scales.e_star).powf((n - T::lit(2.0)) / n))
}

/// Energy at which the cutoff equals `lambda` (inverse of [`cutoff_lambda`]).
pub fn energy_for_lambda<T: Real>(tail: &TailSpec<T>, mu: T, lambda: T) -> Result<T> {
    if !(lambda > T::zero()) {
        return Err(Error::invalid(format!("cutoff {lambda} must be positive")));
    }
    let scales = derive_scales(tail, mu)?;
    let n = tail.n_real();
    let g = g_factor::<T>(tail.n)?;
    Ok(scales.e_star * (lambda / g).powf(n / (n - T::lit(2.0))))
}

/// Generalized Langevin cross section `pi g_n (C_n/E)^(2/n)`.
pub fn langevin_sigma<T: Real>(tail: &TailSpec<T>, mu: T, e: T) -> Result<T> {
    check_energy(e)?;
    tail.validate()?;
    check_mu(mu)?;
    let g = g_factor::<T>(tail.n)?;
    Ok(T::PI() * g * (tail.c_n / e).powf(T::lit(2.0) / tail.n_real()))
}

/// Critical angular momentum `L` solving `L(L+1) = Lambda`.
#[inline]
pub fn critical_l<T: Real>(lambda: T) -> T {
    ((T::one() + T::lit(4.0) * lambda).sqrt() - T::one()) / T::lit(2.0)
}

/// Highest partial wave kept in the exchange sum, `ceil(L)`.
pub fn partial_wave_cutoff<T: Real>(lambda: T) -> usize {
    critical_l(lambda).ceil().to_usize().unwrap_or(0)
}

pub fn barrier_geometry<T: Real>(tail: &TailSpec<T>, mu: T, ell: T) -> Result<BarrierGeometry<T>> {
    tail.validate()?;
    check_mu(mu)?;
    let lam = ell * (ell + T::one());
    if !(lam > T::zero()) {
        return Err(Error::invalid(format!(
            "no centrifugal barrier for ell = {ell}"
        )));
    }
    let two = T::lit(2.0);
    let n = tail.n_real();
    let s_ell = (n * tail.c_n * mu / lam).powf(T::one() / (n - two));
    let e_top = tail.potential(s_ell) + lam / (two * mu * s_ell * s_ell);
    Ok(BarrierGeometry { ell, s_ell, e_top })
}
