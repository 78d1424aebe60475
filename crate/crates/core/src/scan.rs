//! Energy scans of the exchange observables.
//!
//! Every energy is an independent task; results are collected in input
//! order and all reductions run serially afterwards, so the thread count
//! never changes a single bit of the output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::plateau_phase;
use crate::correction::{
    classify, f_closed, f_locking, ClassifyOptions, CorrectionInputs, RegimeLabel, RegimeSample,
};
use crate::error::{Error, Result};
use crate::exchange::{exchange_point, ExchangePoint, SeriesOptions};
use crate::phase_amplitude::{delta_a_envelope, delta_a_fit, CurvatureMethod, EnvelopeOptions};
use crate::potentials::ChannelPair;
use crate::radial::SolverSettings;
use crate::scales::{critical_l, derive_scales, partial_wave_cutoff};
use crate::special::fold_half_pi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaASource {
    /// Sourced envelope equation in the `l -> 0` limit, fit as fallback.
    Envelope,
    /// Slope fit over low partial waves.
    Fit,
    /// Skip the curvature coefficient (`F` is then not available).
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub series: SeriesOptions,
    pub envelope: EnvelopeOptions<f64>,
    pub delta_a: DeltaASource,
    /// A derivative this many times the local median marks a resonance.
    pub resonance_factor: f64,
    pub classify: ClassifyOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            series: SeriesOptions::default(),
            envelope: EnvelopeOptions::default(),
            delta_a: DeltaASource::Envelope,
            resonance_factor: 1e3,
            classify: ClassifyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub energy: f64,
    /// `E / E*`.
    pub e_rel: f64,
    pub point: ExchangePoint<f64>,
    pub delta_a0: Option<f64>,
    pub delta_a_method: Option<CurvatureMethod>,
    pub f_model: Option<f64>,
    pub f_lock: f64,
    pub resonance: bool,
    /// `(pi/k^2) sum (2l+1) sin^2 Delta eta_l` over `l > ceil(L)` in the series.
    pub beyond_cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeScan {
    pub rows: Vec<ScanRow>,
    pub label: Option<RegimeLabel>,
}

/// `n` log-spaced energies per decade over `[lo, hi]` (inclusive), in
/// units of `E*`; the exponent is computed from integer indices so the
/// grid is reproducible.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || per_decade == 0 {
        return Err(Error::invalid(format!(
            "bad log grid [{lo}, {hi}] with {per_decade} per decade"
        )));
    }
    let a = lo.log10();
    let steps = ((hi.log10() - a) * per_decade as f64 + 1e-9).floor() as usize;
    Ok((0..=steps)
        .map(|i| 10f64.powf(a + i as f64 / per_decade as f64))
        .collect())
}

fn row_at(
    pair: &ChannelPair<f64>,
    e: f64,
    e_star: f64,
    settings: &SolverSettings<f64>,
    opts: &ScanOptions,
) -> Result<ScanRow> {
    let point = exchange_point(pair, e, settings, &opts.series)?;
    let coefficient = match opts.delta_a {
        DeltaASource::Envelope => Some(delta_a_envelope(pair, e, 0, settings, &opts.envelope)?),
        DeltaASource::Fit => Some(delta_a_fit(pair, e, settings, &opts.envelope)?),
        DeltaASource::None => None,
    };
    let f_lock = f_locking(point.delta_delta0);
    let f_model = coefficient.map(|c| {
        f_closed(&CorrectionInputs {
            delta_delta0: point.delta_delta0,
            delta_a0: c.value,
            lambda: point.lambda,
        })
    });
    let k2 = 2.0 * pair.mu * e;
    let cut = partial_wave_cutoff(point.lambda);
    let beyond = std::f64::consts::PI / k2
        * point
            .series
            .entries
            .iter()
            .filter(|en| en.ell > cut)
            .map(|en| (2 * en.ell + 1) as f64 * en.sin2)
            .sum::<f64>();
    Ok(ScanRow {
        energy: e,
        e_rel: e / e_star,
        point,
        delta_a0: coefficient.map(|c| c.value),
        delta_a_method: coefficient.map(|c| c.method),
        f_model,
        f_lock,
        resonance: false,
        beyond_cutoff: beyond,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Half-width, in grid points, of the window behind the local median.
const MEDIAN_HALF_WIDTH: usize = 3;

/// Marks rows where some partial wave has `|d Delta eta_l / dE|` above
/// `factor` times its own median over neighbouring energies.
///
/// A wave only takes part at energies where it sits above its barrier top
/// at both ends of the difference stencil; crossing the barrier moves a
/// wave by up to `Delta delta_0` within one step, which is the cutoff
/// moving rather than a resonance.
pub fn flag_resonances(rows: &mut [ScanRow], factor: f64) {
    let n = rows.len();
    if n < 3 {
        for row in rows.iter_mut() {
            row.resonance = row.point.series.entries.iter().any(|en| en.perturbed);
        }
        return;
    }
    let stencil = |i: usize| {
        if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        }
    };
    // rate[i][l], None where the wave is under its barrier somewhere in the stencil.
    let rates: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            let (p, q) = stencil(i);
            let de = rows[q].energy - rows[p].energy;
            let lam = rows[p].point.lambda.min(rows[i].point.lambda);
            let top = critical_l(lam).floor() as usize;
            (0..=top)
                .map(|l| {
                    let a = rows[p].point.series.entries.get(l)?;
                    let b = rows[q].point.series.entries.get(l)?;
                    Some(fold_half_pi(b.delta_eta - a.delta_eta).abs() / de)
                })
                .collect()
        })
        .collect();
    let flags: Vec<bool> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(MEDIAN_HALF_WIDTH);
            let hi = (i + MEDIAN_HALF_WIDTH).min(n - 1);
            rates[i].iter().enumerate().any(|(l, r)| {
                let Some(r) = *r else { return false };
                let local: Vec<f64> = (lo..=hi)
                    .filter_map(|j| rates[j].get(l).copied().flatten())
                    .collect();
                local.len() >= 3 && r > 0.0 && r > factor * median(local)
            })
        })
        .collect();
    for (row, flag) in rows.iter_mut().zip(flags) {
        row.resonance = flag || row.point.series.entries.iter().any(|en| en.perturbed);
    }
}

/// Computes every energy (in units of `E*`) on the current rayon pool.
pub fn run_scan(
    pair: &ChannelPair<f64>,
    energies_rel: &[f64],
    settings: &SolverSettings<f64>,
    opts: &ScanOptions,
) -> Result<ExchangeScan> {
    if energies_rel.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("scan energies must be strictly increasing"));
    }
    let e_star = derive_scales(&pair.tail(), pair.mu)?.e_star;
    let mut rows: Vec<ScanRow> = energies_rel
        .par_iter()
        .map(|&x| row_at(pair, x * e_star, e_star, settings, opts))
        .collect::<Result<_>>()?;
    flag_resonances(&mut rows, opts.resonance_factor);
    let label = if opts.delta_a == DeltaASource::None {
        None
    } else {
        let plateau = plateau_phase(pair, opts.classify.plateau * e_star, settings)?;
        let samples: Vec<RegimeSample> = rows
            .iter()
            .map(|r| RegimeSample {
                e_rel: r.e_rel,
                f_model: r.f_model.unwrap_or(f64::NAN),
                f_lock: r.f_lock,
                delta_delta0: r.point.delta_delta0,
                resonance: r.resonance,
            })
            .collect();
        Some(classify(plateau, &samples, &opts.classify)?)
    };
    Ok(ExchangeScan { rows, label })
}
