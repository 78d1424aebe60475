//! Resonant-exchange observables assembled from phase-shift differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{ChannelPair, Potential};
use crate::radial::{count_bound_states, phase_shifts_shared, SolverSettings};
use crate::real::Real;
use crate::scales::{critical_l, cutoff_lambda, langevin_sigma, partial_wave_cutoff, wavenumber};
use crate::special::fold_half_pi;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    /// Partial waves computed beyond `ceil(L)`.
    pub margin: usize,
    /// Hard upper limit on `l`, overriding the cutoff rule.
    pub max_ell: Option<usize>,
    /// Refuse energies above `0.2 V_depth`.
    pub enforce_ceiling: bool,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            margin: 5,
            max_ell: None,
            enforce_ceiling: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEtaEntry<T = f64> {
    pub ell: usize,
    /// Absolute `eta_b - eta_a`.
    pub delta_eta: T,
    pub sin2: T,
    pub eta_a: T,
    pub eta_b: T,
    /// The solve was repeated at a slightly shifted energy.
    pub perturbed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEtaSeries<T = f64> {
    pub energy: T,
    pub entries: Vec<DeltaEtaEntry<T>>,
    /// Continuous critical partial wave `L`.
    pub cutoff_l: T,
    pub truncated_at: usize,
    pub warnings: Vec<String>,
}

impl<T: Real> DeltaEtaSeries<T> {
    pub fn delta_eta0(&self) -> T {
        self.entries[0].delta_eta
    }
}

/// Checks the energy against the validity ceiling of the model.
fn energy_ceiling<T: Real>(
    pair: &ChannelPair<T>,
    e: T,
    enforce: bool,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let depth = pair.shallow_depth()?;
    if enforce && e >= T::lit(0.2) * depth {
        return Err(Error::domain(format!(
            "energy {e:e} exceeds 0.2 of the shallow well depth {depth:e}"
        )));
    }
    if e > T::lit(0.01) * depth {
        warnings.push(format!(
            "energy {e:e} above 0.01 of the shallow well depth; high-energy regime"
        ));
    }
    Ok(())
}

/// Absolute `Delta eta_l` for `l = 0 ..= ceil(L) + margin`, both channels on one grid per `l`.
pub fn delta_eta_series<T: Real>(
    pair: &ChannelPair<T>,
    e: T,
    settings: &SolverSettings<T>,
    opts: &SeriesOptions,
) -> Result<DeltaEtaSeries<T>> {
    if !(e > T::zero()) {
        return Err(Error::invalid(format!("energy {e} must be positive")));
    }
    let mut warnings = Vec::new();
    energy_ceiling(pair, e, opts.enforce_ceiling, &mut warnings)?;
    let lambda = cutoff_lambda(&pair.tail(), pair.mu, e)?;
    let cutoff = partial_wave_cutoff(lambda);
    let top = opts.max_ell.unwrap_or(cutoff + opts.margin);
    let channels: [&dyn Potential<T>; 2] = [&pair.va, &pair.vb];
    let entries: Vec<DeltaEtaEntry<T>> = (0..=top)
        .into_par_iter()
        .map(|ell| {
            let recs = phase_shifts_shared(&channels, pair.mu, e, ell, settings)?;
            let (a, b) = (recs[0], recs[1]);
            let d = b.eta - a.eta;
            let s = d.sin();
            Ok(DeltaEtaEntry {
                ell,
                delta_eta: d,
                sin2: s * s,
                eta_a: a.eta,
                eta_b: b.eta,
                perturbed: a.perturbed || b.perturbed,
            })
        })
        .collect::<Result<_>>()?;
    if entries.iter().any(|en| en.perturbed) {
        warnings.push("ill-conditioned match re-solved at a shifted energy".to_string());
    }
    Ok(DeltaEtaSeries {
        energy: e,
        entries,
        cutoff_l: critical_l(lambda),
        truncated_at: top,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSections<T = f64> {
    pub sigma_exc: T,
    pub sigma0: T,
    /// `(pi/k^2) sum (2l+1) 1e-6` over the partial waves beyond the series.
    pub truncation_bound: T,
}

/// `sigma_exc = (pi/k^2) sum (2l+1) sin^2 Delta eta_l` and its s-wave part.
pub fn exchange_cross_section<T: Real>(series: &DeltaEtaSeries<T>, k: T) -> CrossSections<T> {
    let pref = T::PI() / (k * k);
    let sigma0 = pref * series.entries[0].sin2;
    let higher: T = series.entries[1..]
        .iter()
        .map(|en| T::of(2 * en.ell + 1) * en.sin2)
        .sum();
    let next = series.truncated_at + 1;
    let bound = pref * T::lit(1e-6) * (next..next + 10).map(|l| T::of(2 * l + 1)).sum::<T>();
    CrossSections {
        sigma_exc: sigma0 + pref * higher,
        sigma0,
        truncation_bound: bound,
    }
}

/// Levinson split of `Delta eta_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevinsonSplit<T = f64> {
    /// Integer removed when folding `Delta eta_0` into `(-pi/2, pi/2]`.
    pub delta_n0: i64,
    pub delta_delta0: T,
    /// `N_b - N_a` from zero-energy node counts.
    pub bound_difference: i64,
    pub ambiguous: bool,
}

/// `Delta eta_0 = pi Delta N_0 + Delta delta_0` with `Delta delta_0` in `(-pi/2, pi/2]`.
pub fn fold_levinson<T: Real>(delta_eta0: T) -> (i64, T) {
    let d = fold_half_pi(delta_eta0);
    let n = ((delta_eta0 - d) / T::PI()).round().to_i64().unwrap_or(0);
    (n, d)
}

pub fn levinson_decompose<T: Real>(
    pair: &ChannelPair<T>,
    e: T,
    settings: &SolverSettings<T>,
) -> Result<LevinsonSplit<T>> {
    let channels: [&dyn Potential<T>; 2] = [&pair.va, &pair.vb];
    let recs = phase_shifts_shared(&channels, pair.mu, e, 0, settings)?;
    let (delta_n0, delta_delta0) = fold_levinson(recs[1].eta - recs[0].eta);
    let na = count_bound_states(&pair.va, pair.mu, 0, settings)?;
    let nb = count_bound_states(&pair.vb, pair.mu, 0, settings)?;
    Ok(LevinsonSplit {
        delta_n0,
        delta_delta0,
        bound_difference: nb.count as i64 - na.count as i64,
        ambiguous: na.ambiguous.is_some() || nb.ambiguous.is_some(),
    })
}

/// Exchange observables at one energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangePoint<T = f64> {
    pub energy: T,
    pub sigma0: T,
    pub sigma_exc: T,
    pub sigma_l: T,
    pub lambda: T,
    pub f_exact: T,
    pub delta_delta0: T,
    pub delta_n0: i64,
    pub truncation_bound: T,
    pub series: DeltaEtaSeries<T>,
}

/// `F = (sigma_exc - sigma0) / sigma_L`, unclamped.
pub fn exact_correction<T: Real>(pt: &ExchangePoint<T>) -> Result<T> {
    if !(pt.energy > T::zero()) || !(pt.sigma_l > T::zero()) {
        return Err(Error::invalid(
            "exact correction needs E > 0 and sigma_L > 0",
        ));
    }
    Ok((pt.sigma_exc - pt.sigma0) / pt.sigma_l)
}

pub fn exchange_point<T: Real>(
    pair: &ChannelPair<T>,
    e: T,
    settings: &SolverSettings<T>,
    opts: &SeriesOptions,
) -> Result<ExchangePoint<T>> {
    let series = delta_eta_series(pair, e, settings, opts)?;
    let k = wavenumber(pair.mu, e);
    let cs = exchange_cross_section(&series, k);
    let tail = pair.tail();
    let sigma_l = langevin_sigma(&tail, pair.mu, e)?;
    let lambda = cutoff_lambda(&tail, pair.mu, e)?;
    let (delta_n0, delta_delta0) = fold_levinson(series.delta_eta0());
    let mut pt = ExchangePoint {
        energy: e,
        sigma0: cs.sigma0,
        sigma_exc: cs.sigma_exc,
        sigma_l,
        lambda,
        f_exact: T::zero(),
        delta_delta0,
        delta_n0,
        truncation_bound: cs.truncation_bound,
        series,
    };
    pt.f_exact = exact_correction(&pt)?;
    Ok(pt)
}
