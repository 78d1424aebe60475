//! Closed-form quantal correction, its locking limit, model cross sections
//! and the Wigner / locking / unlocking classification of a scan.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::calibration::CaseTag;
use crate::error::{Error, Result};
use crate::quad::integrate;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionInputs<T = f64> {
    pub delta_delta0: T,
    pub delta_a0: T,
    pub lambda: T,
}

/// `sin(x)/x` with a Taylor expansion below `|x| = 1e-6`.
fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-6) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}

/// `F = 1/2 - [sin x / (2x)] cos(2 Delta delta_0 - x)` with `x = Lambda Delta A_0`.
pub fn f_closed<T: Real>(inp: &CorrectionInputs<T>) -> T {
    let x = inp.lambda * inp.delta_a0;
    let half = T::lit(0.5);
    half - half * sinc(x) * (T::lit(2.0) * inp.delta_delta0 - x).cos()
}

/// `(1/Lambda) int_0^Lambda sin^2(Delta eta(lambda)) d lambda`, adaptive to `1e-8`.
pub fn f_quadrature<T: Real>(delta_eta: impl Fn(T) -> T, lambda: T) -> Result<T> {
    if !(lambda > T::zero()) {
        return Err(Error::invalid(format!("cutoff {lambda} must be positive")));
    }
    // The tolerance applies to the mean, so the integral is held to Lambda times it.
    let q = integrate(
        |l: T| delta_eta(l).sin().powi(2),
        T::zero(),
        lambda,
        T::lit(1e-8) * lambda,
        20_000,
    )?;
    Ok(q.value / lambda)
}

/// Locking limit `f = sin^2 Delta delta_0`.
pub fn f_locking<T: Real>(delta_delta0: T) -> T {
    delta_delta0.sin().powi(2)
}

/// Model cross section `sigma_0 + F sigma_L`.
pub fn sigma_model<T: Real>(sigma0: T, f: T, sigma_l: T) -> Result<T> {
    if !(sigma0 >= T::zero() && f >= T::zero() && sigma_l >= T::zero()) {
        return Err(Error::invalid(
            "model cross section needs non-negative inputs",
        ));
    }
    Ok(sigma0 + f * sigma_l)
}

/// Locking approximation `(pi/k^2 + sigma_L) sin^2 Delta delta_0`.
pub fn sigma_lock<T: Real>(k: T, sigma_l: T, delta_delta0: T) -> T {
    (T::PI() / (k * k) + sigma_l) * f_locking(delta_delta0)
}

/// Oscillatory part in `sigma_exc = sigma_0 + sigma_L/2 - sigma_osc`.
pub fn sigma_osc<T: Real>(sigma_l: T, inp: &CorrectionInputs<T>) -> T {
    let x = inp.lambda * inp.delta_a0;
    sigma_l * sinc(x) / T::lit(2.0) * (T::lit(2.0) * inp.delta_delta0 - x).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Wigner,
    Locking,
    Unlocking,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Wigner => "wigner",
            Regime::Locking => "locking",
            Regime::Unlocking => "unlocking",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What `classify` needs from one scan energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSample {
    /// Energy in units of `E*`.
    pub e_rel: f64,
    pub f_model: f64,
    pub f_lock: f64,
    pub delta_delta0: f64,
    pub resonance: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Plateau energy in units of `E*`; the unlocking search starts here.
    pub plateau: f64,
    /// Relative gap `|F - f| / f` that marks unlocking.
    pub unlock_gap: f64,
    /// Decades over which the gap must persist.
    pub sustain_decades: f64,
    /// Plateau drift (relative) above which the label is low-confidence.
    pub max_drift: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            plateau: 100.0,
            unlock_gap: 0.1,
            sustain_decades: 0.5,
            max_drift: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub case_tag: CaseTag,
    /// Upper edge of the Wigner regime, `E/E*`.
    pub e_wigner: f64,
    /// Onset of unlocking, `E/E*`; `None` when the scan never unlocks.
    pub e_unlock: Option<f64>,
    pub plateau_delta0: f64,
    pub plateau_drift: f64,
    pub low_confidence: bool,
}

impl RegimeLabel {
    pub fn regime(&self, e_rel: f64) -> Regime {
        if e_rel < self.e_wigner {
            Regime::Wigner
        } else if self.e_unlock.is_some_and(|u| e_rel >= u) {
            Regime::Unlocking
        } else {
            Regime::Locking
        }
    }
}

fn unlocked(s: &RegimeSample, gap: f64) -> bool {
    (s.f_model - s.f_lock).abs() > gap * s.f_lock
}

/// Labels a scan (rows sorted by energy) given its plateau `Delta delta_0`.
///
/// The Wigner edge is `E*`. Unlocking starts at the first non-resonant
/// energy at or above the plateau from which `|F - f| > gap f` holds at
/// every non-resonant point of the following `sustain_decades`.
pub fn classify(
    plateau_delta0: f64,
    scan: &[RegimeSample],
    opts: &ClassifyOptions,
) -> Result<RegimeLabel> {
    if scan.is_empty() {
        return Err(Error::invalid("cannot classify an empty scan"));
    }
    if scan.windows(2).any(|w| !(w[0].e_rel < w[1].e_rel)) {
        return Err(Error::invalid("scan energies must be strictly increasing"));
    }
    let usable: Vec<&RegimeSample> = scan.iter().filter(|s| !s.resonance).collect();
    let span = 10f64.powf(opts.sustain_decades);
    let mut e_unlock = None;
    for (i, s) in usable.iter().enumerate() {
        if s.e_rel < opts.plateau * (1.0 - 1e-12) || !unlocked(s, opts.unlock_gap) {
            continue;
        }
        let window: Vec<_> = usable[i..]
            .iter()
            .take_while(|t| t.e_rel <= s.e_rel * span)
            .collect();
        let reaches = usable.last().is_some_and(|t| t.e_rel >= s.e_rel * span);
        if window.iter().all(|t| unlocked(t, opts.unlock_gap)) && (reaches || window.len() > 1) {
            e_unlock = Some(s.e_rel);
            break;
        }
    }
    let lo = opts.plateau / span.sqrt();
    let hi = opts.plateau * span.sqrt();
    let centre = plateau_delta0.abs();
    let drift = scan
        .iter()
        .filter(|s| s.e_rel >= lo && s.e_rel <= hi && !s.resonance)
        .map(|s| (s.delta_delta0.abs() - centre).abs() / centre.max(1e-3))
        .fold(0.0, f64::max);
    Ok(RegimeLabel {
        case_tag: CaseTag::of_phase(plateau_delta0),
        e_wigner: 1.0,
        e_unlock,
        plateau_delta0,
        plateau_drift: drift,
        low_confidence: drift > opts.max_drift,
    })
}
