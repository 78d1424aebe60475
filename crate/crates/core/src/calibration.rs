//! Tuning a channel pair so that its plateau phase difference lands in a
//! chosen suppression band.

use core::f64::consts::PI;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{make_pair, ChannelLabel, ChannelPair, ChannelPotential, Potential};
use crate::radial::{phase_shifts_shared, scattering_length, SolverSettings};
use crate::real::Real;
use crate::scales::derive_scales;
use crate::special::fold_half_pi;

/// Case taxonomy by the size of the plateau `|Delta delta_0|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseTag {
    Suppressed,
    Average,
    Enhanced,
}

impl CaseTag {
    pub const ALL: [CaseTag; 3] = [CaseTag::Suppressed, CaseTag::Average, CaseTag::Enhanced];

    /// `|Delta delta_0|` interval, closed on the left.
    pub fn band(self) -> (f64, f64) {
        match self {
            CaseTag::Suppressed => (0.0, PI / 6.0),
            CaseTag::Average => (PI / 6.0, PI / 3.0),
            CaseTag::Enhanced => (PI / 3.0, PI / 2.0 + 1e-12),
        }
    }

    /// Band midpoint, aimed at when the template misses the band.
    pub fn aim(self) -> f64 {
        let (lo, hi) = self.band();
        (lo + hi.min(PI / 2.0)) / 2.0
    }

    pub fn of_phase(delta_delta0: f64) -> CaseTag {
        let d = delta_delta0.abs();
        if d < PI / 6.0 {
            CaseTag::Suppressed
        } else if d < PI / 3.0 {
            CaseTag::Average
        } else {
            CaseTag::Enhanced
        }
    }

    pub fn contains(self, delta_delta0: f64) -> bool {
        CaseTag::of_phase(delta_delta0) == self
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CaseTag::Suppressed => "suppressed",
            CaseTag::Average => "average",
            CaseTag::Enhanced => "enhanced",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for CaseTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "suppressed" => Ok(CaseTag::Suppressed),
            "average" => Ok(CaseTag::Average),
            "enhanced" => Ok(CaseTag::Enhanced),
            other => Err(Error::invalid(format!(
                "unknown case '{other}' (suppressed | average | enhanced)"
            ))),
        }
    }
}

/// Pair whose channel-b repulsive coefficient is free.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTemplate<T = f64> {
    pub va: ChannelPotential<T>,
    pub vb: ChannelPotential<T>,
    pub mu: T,
    /// Search interval for channel b's `C_rep`.
    pub bounds: (T, T),
}

impl<T: Real> PairTemplate<T> {
    pub fn new(
        va: ChannelPotential<T>,
        vb: ChannelPotential<T>,
        mu: T,
        bounds: (T, T),
    ) -> Result<Self> {
        let c = vb
            .c_rep()
            .ok_or_else(|| Error::invalid("the free parameter is channel b's r^-12 coefficient"))?;
        if !(bounds.0 > T::zero() && bounds.0 < bounds.1) {
            return Err(Error::invalid(format!(
                "calibration bounds ({}, {}) must be positive and increasing",
                bounds.0, bounds.1
            )));
        }
        if c < bounds.0 || c > bounds.1 {
            return Err(Error::invalid(format!(
                "template coefficient {c:e} lies outside the calibration bounds"
            )));
        }
        Ok(PairTemplate { va, vb, mu, bounds })
    }

    pub fn with_c_rep(&self, c_rep: T) -> Result<ChannelPair<T>> {
        let vb = ChannelPotential::power12(ChannelLabel::B, c_rep, self.vb.tail)?;
        make_pair(self.va.clone(), vb, self.mu)
    }

    pub fn c_rep(&self) -> T {
        self.vb.c_rep().expect("checked at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Plateau energy in units of `E*`.
    pub plateau: f64,
    /// Geometric seed grid over the bounds.
    pub seeds: usize,
    pub max_bisections: usize,
    /// Accepted distance of `|Delta delta_0|` from the aim, radians.
    pub tolerance: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            plateau: 100.0,
            seeds: 41,
            max_bisections: 60,
            tolerance: 1e-4,
        }
    }
}

/// One evaluated parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub c_rep: f64,
    pub delta_delta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauDiagnostics {
    /// `(E/E*, Delta delta_0)` at a third, one and three times the plateau energy.
    pub samples: Vec<(f64, f64)>,
    /// Largest relative deviation of `|Delta delta_0|` from its plateau value.
    pub drift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub target: CaseTag,
    pub c_rep: f64,
    pub delta_delta0: f64,
    pub achieved: CaseTag,
    pub a_a: f64,
    pub a_b: f64,
    /// `a_b - a_a`.
    pub delta_a: f64,
    /// Number of evaluations beyond the template itself.
    pub iterations: usize,
    pub plateau: PlateauDiagnostics,
    pub trace: Vec<CalibrationStep>,
}

/// Folded s-wave phase difference `eta_0^b - eta_0^a` at `e`.
pub fn plateau_phase<T: Real>(
    pair: &ChannelPair<T>,
    e: T,
    settings: &SolverSettings<T>,
) -> Result<T> {
    let channels: [&dyn Potential<T>; 2] = [&pair.va, &pair.vb];
    let recs = phase_shifts_shared(&channels, pair.mu, e, 0, settings)?;
    Ok(fold_half_pi(recs[1].eta_mod_pi - recs[0].eta_mod_pi))
}

fn plateau_diagnostics<T: Real>(
    pair: &ChannelPair<T>,
    e_star: T,
    opts: &CalibrationOptions,
    settings: &SolverSettings<T>,
) -> Result<PlateauDiagnostics> {
    let mut samples = Vec::new();
    for factor in [1.0 / 3.0, 1.0, 3.0] {
        let e_rel = opts.plateau * factor;
        let d = plateau_phase(pair, T::lit(e_rel) * e_star, settings)?.as_f64();
        samples.push((e_rel, d));
    }
    let centre = samples[1].1.abs();
    let drift = samples
        .iter()
        .map(|s| (s.1.abs() - centre).abs() / centre.max(1e-3))
        .fold(0.0, f64::max);
    Ok(PlateauDiagnostics { samples, drift })
}

/// Searches channel b's `C_rep` for a plateau `|Delta delta_0|` inside the
/// target band.
///
/// A template already inside the band is returned unchanged. Otherwise the
/// seed grid is scanned for sign changes of `|Delta delta_0| - aim`, the
/// bracket nearest the template is bisected, and the trace of every
/// evaluation is kept for the report or the error.
pub fn calibrate_case<T: Real>(
    template: &PairTemplate<T>,
    target: CaseTag,
    settings: &SolverSettings<T>,
    opts: &CalibrationOptions,
) -> Result<CalibrationReport> {
    if opts.seeds < 2 || !(opts.plateau > 0.0) || !(opts.tolerance > 0.0) {
        return Err(Error::invalid(
            "calibration needs at least two seeds, a positive plateau and a positive tolerance",
        ));
    }
    let scales = derive_scales(&template.va.tail, template.mu)?;
    let e = T::lit(opts.plateau) * scales.e_star;
    let mut trace = Vec::new();
    let eval = |c: T, trace: &mut Vec<CalibrationStep>| -> Result<f64> {
        let d = plateau_phase(&template.with_c_rep(c)?, e, settings)?.as_f64();
        trace.push(CalibrationStep {
            c_rep: c.as_f64(),
            delta_delta0: d,
        });
        Ok(d)
    };
    let c0 = template.c_rep();
    let d0 = eval(c0, &mut trace)?;
    let (c_best, d_best) = if target.contains(d0) {
        (c0, d0)
    } else {
        let aim = target.aim();
        let (lo, hi) = template.bounds;
        let ratio = (hi / lo).ln();
        let grid: Vec<T> = (0..opts.seeds)
            .map(|i| lo * (ratio * T::of(i) / T::of(opts.seeds - 1)).exp())
            .collect();
        let mut values = Vec::with_capacity(grid.len());
        for &c in &grid {
            values.push(eval(c, &mut trace)?.abs() - aim);
        }
        let centre = (c0 / lo).ln();
        let bracket = (0..grid.len() - 1)
            .filter(|&i| values[i].signum() != values[i + 1].signum())
            .min_by(|&i, &j| {
                let di = ((grid[i] / lo).ln() - centre)
                    .abs()
                    .min(((grid[i + 1] / lo).ln() - centre).abs());
                let dj = ((grid[j] / lo).ln() - centre)
                    .abs()
                    .min(((grid[j + 1] / lo).ln() - centre).abs());
                di.partial_cmp(&dj).unwrap_or(core::cmp::Ordering::Equal)
            });
        let Some(i) = bracket else {
            return Err(Error::Calibration {
                message: format!(
                    "no parameter in [{lo:e}, {hi:e}] brings |Delta delta_0| to {aim:.4} ({target} band)"
                ),
                trace: trace.iter().map(|s| (s.c_rep, s.delta_delta0)).collect(),
            });
        };
        let (mut a, mut b) = (grid[i], grid[i + 1]);
        let mut fa = values[i];
        let mut best = (a, fa + aim, fa.abs());
        for _ in 0..opts.max_bisections {
            let m = (a * b).sqrt();
            let d = eval(m, &mut trace)?;
            let fm = d.abs() - aim;
            if fm.abs() < best.2 {
                best = (m, d, fm.abs());
            }
            if fm.abs() <= opts.tolerance {
                break;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        let d = trace
            .iter()
            .find(|s| s.c_rep == best.0.as_f64())
            .map(|s| s.delta_delta0)
            .unwrap_or(best.1);
        (best.0, d)
    };
    let pair = template.with_c_rep(c_best)?;
    if !target.contains(d_best) {
        return Err(Error::Calibration {
            message: format!("best plateau phase {d_best:.4} is outside the {target} band"),
            trace: trace.iter().map(|s| (s.c_rep, s.delta_delta0)).collect(),
        });
    }
    let a_a = scattering_length(&pair.va, pair.mu, settings)?.a.as_f64();
    let a_b = scattering_length(&pair.vb, pair.mu, settings)?.a.as_f64();
    let plateau = plateau_diagnostics(&pair, scales.e_star, opts, settings)?;
    Ok(CalibrationReport {
        target,
        c_rep: c_best.as_f64(),
        delta_delta0: d_best,
        achieved: CaseTag::of_phase(d_best),
        a_a,
        a_b,
        delta_a: a_b - a_a,
        iterations: trace.len() - 1,
        plateau,
        trace,
    })
}
