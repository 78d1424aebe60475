//! Agreement metrics between the exact correction and its models over a
//! finished scan. Resonant rows are always excluded.

use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::correction::Regime;
use crate::error::{Error, Result};
use crate::scan::{ExchangeScan, ScanRow};

/// Largest deviation seen over a set of rows, with where it happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub e_rel: f64,
    /// Signed difference at the worst row.
    pub value: f64,
    pub rows: usize,
}

impl Extremum {
    fn of(points: impl Iterator<Item = (f64, f64)>) -> Option<Self> {
        let mut best: Option<Extremum> = None;
        let mut n = 0;
        for (e_rel, v) in points {
            n += 1;
            if best.map_or(true, |b| v.abs() > b.value.abs()) {
                best = Some(Extremum {
                    e_rel,
                    value: v,
                    rows: 0,
                });
            }
        }
        best.map(|b| Extremum { rows: n, ..b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockingAgreement {
    pub e_unlock: Option<f64>,
    /// `F_exact - f` over the locking regime.
    pub locking_gap: Option<Extremum>,
    /// `F_exact - F_model` from `E_unlock` to ten times `E_unlock`.
    pub unlocking_gap: Option<Extremum>,
    /// The scan reaches ten times `E_unlock`.
    pub covers_decade: bool,
}

fn usable(scan: &ExchangeScan) -> impl Iterator<Item = &ScanRow> {
    scan.rows.iter().filter(|r| !r.resonance)
}

pub fn locking_agreement(scan: &ExchangeScan) -> Result<LockingAgreement> {
    let label = scan
        .label
        .ok_or_else(|| Error::invalid("agreement needs a classified scan"))?;
    let locking_gap = Extremum::of(
        usable(scan)
            .filter(|r| label.regime(r.e_rel) == Regime::Locking)
            .map(|r| (r.e_rel, r.point.f_exact - r.f_lock)),
    );
    let (unlocking_gap, covers_decade) = match label.e_unlock {
        Some(u) => {
            let gap = Extremum::of(
                usable(scan)
                    .filter(|r| r.e_rel >= u && r.e_rel <= 10.0 * u * (1.0 + 1e-12))
                    .filter_map(|r| Some((r.e_rel, r.point.f_exact - r.f_model?))),
            );
            let top = scan.rows.last().map_or(0.0, |r| r.e_rel);
            (gap, top >= 10.0 * u * (1.0 - 1e-12))
        }
        None => (None, false),
    };
    Ok(LockingAgreement {
        e_unlock: label.e_unlock,
        locking_gap,
        unlocking_gap,
        covers_decade,
    })
}

/// Mean of non-resonant `F_exact` over `[plateau / sqrt 10, plateau * sqrt 10]`.
pub fn plateau_mean(scan: &ExchangeScan, plateau: f64) -> Option<f64> {
    let (lo, hi) = (plateau / 10f64.sqrt(), plateau * 10f64.sqrt());
    let v: Vec<f64> = usable(scan)
        .filter(|r| r.e_rel >= lo && r.e_rel <= hi)
        .map(|r| r.point.f_exact)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighEnergyLimit {
    /// Lower edge of the analysed range, `E/E*`.
    pub from_e_rel: f64,
    /// `(E/E*, mean)` of `F_exact` over one period in `x = Lambda Delta A_0`, by window start.
    pub period_means: Vec<(f64, f64)>,
    pub max_offset: f64,
    /// Fitted power of `E` in the `|F - 1/2|` envelope.
    pub exponent: f64,
    pub rms_residual: f64,
}

struct Sample {
    e_rel: f64,
    x: f64,
    f: f64,
    d: f64,
}

/// Running means over one oscillation period and the envelope exponent,
/// over the top `decades` of the scan.
///
/// `F - 1/2` is fitted to `E^p [c1 sin 2d + c2 sin(2x - 2d) + c3 cos(2x - 2d)]`
/// with the row's own `d = Delta delta_0`, linear in `c` for each `p` on a
/// grid of step `1e-3` over `[-1.5, 0.5]`.
pub fn high_energy_limit(scan: &ExchangeScan, decades: f64) -> Result<HighEnergyLimit> {
    let top = scan
        .rows
        .last()
        .ok_or_else(|| Error::invalid("empty scan"))?
        .e_rel;
    let from = top / 10f64.powf(decades);
    let samples: Vec<Sample> = usable(scan)
        .filter(|r| r.e_rel >= from)
        .filter_map(|r| {
            Some(Sample {
                e_rel: r.e_rel,
                x: r.point.lambda * r.delta_a0?,
                f: r.point.f_exact,
                d: r.point.delta_delta0,
            })
        })
        .collect();
    if samples.len() < 8 {
        return Err(Error::invalid(format!(
            "only {} usable rows in the top {decades} decades",
            samples.len()
        )));
    }
    let period_means = period_means(&samples);
    if period_means.is_empty() {
        return Err(Error::invalid(
            "the top of the scan spans less than one oscillation period",
        ));
    }
    let max_offset = period_means
        .iter()
        .map(|m| (m.1 - 0.5).abs())
        .fold(0.0, f64::max);
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 0..=2000 {
        let p = -1.5 + i as f64 * 1e-3;
        if let Some(rss) = envelope_rss(&samples, p) {
            if rss < best.1 {
                best = (p, rss);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::diverged("envelope fit is singular"));
    }
    Ok(HighEnergyLimit {
        from_e_rel: from,
        period_means,
        max_offset,
        exponent: best.0,
        rms_residual: (best.1 / samples.len() as f64).sqrt(),
    })
}

/// Trapezoid means of `F` along `x`, each over an arc length of `pi`.
fn period_means(s: &[Sample]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..s.len() {
        let mut length = 0.0;
        let mut area = 0.0;
        let mut j = i;
        while j + 1 < s.len() {
            let dx = (s[j + 1].x - s[j].x).abs();
            if length + dx >= PI {
                let t = if dx > 0.0 { (PI - length) / dx } else { 0.0 };
                let f_end = s[j].f + t * (s[j + 1].f - s[j].f);
                area += 0.5 * (s[j].f + f_end) * (PI - length);
                length = PI;
                break;
            }
            area += 0.5 * (s[j].f + s[j + 1].f) * dx;
            length += dx;
            j += 1;
        }
        if length < PI {
            break;
        }
        out.push((s[i].e_rel, area / PI));
    }
    out
}

fn envelope_rss(s: &[Sample], p: f64) -> Option<f64> {
    let e0 = s[0].e_rel;
    let rows: Vec<([f64; 3], f64)> = s
        .iter()
        .map(|r| {
            let w = (r.e_rel / e0).powf(p);
            let ph = 2.0 * r.x - 2.0 * r.d;
            (
                [w * (2.0 * r.d).sin(), w * ph.sin(), w * ph.cos()],
                r.f - 0.5,
            )
        })
        .collect();
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (g, y) in &rows {
        for i in 0..3 {
            b[i] += g[i] * y;
            for j in 0..3 {
                a[i][j] += g[i] * g[j];
            }
        }
    }
    let c = solve3(a, b)?;
    Some(
        rows.iter()
            .map(|(g, y)| (y - g[0] * c[0] - g[1] * c[1] - g[2] * c[2]).powi(2))
            .sum(),
    )
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[piv][col].abs() > 1e-14 * scale) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let m = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= m * p;
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(p: f64) -> Vec<Sample> {
        (0..60)
            .map(|i| {
                let e_rel = 1e6 * 10f64.powf(i as f64 / 40.0);
                let x = 2e-3 * e_rel.sqrt();
                let d = 0.3f64;
                let f = 0.5
                    - ((2.0 * d).sin() + (2.0 * x - 2.0 * d).sin()) * 0.25 * (e_rel / 1e6).powf(p);
                Sample { e_rel, x, f, d }
            })
            .collect()
    }

    #[test]
    fn recovers_a_synthetic_exponent() {
        let s = samples(-0.5);
        let best = (0..=2000)
            .map(|i| -1.5 + i as f64 * 1e-3)
            .filter_map(|p| envelope_rss(&s, p).map(|r| (p, r)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((best.0 + 0.5).abs() < 2e-3, "{best:?}");
    }

    #[test]
    fn period_means_of_a_pure_oscillation() {
        let s: Vec<Sample> = (0..400)
            .map(|i| {
                let x = i as f64 * 0.05f64;
                Sample {
                    e_rel: 1.0 + i as f64,
                    x,
                    f: 0.5 + 0.3 * (2.0 * x).sin(),
                    d: 0.0,
                }
            })
            .collect();
        let m = period_means(&s);
        assert!(!m.is_empty());
        assert!(m.iter().all(|v| (v.1 - 0.5).abs() < 2e-3));
    }

    #[test]
    fn solves_a_small_system() {
        let x = solve3(
            [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]],
            [3.0, 5.0, 5.0],
        )
        .unwrap();
        for v in x.iter().copied() {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(solve3(
            [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [1.0; 3]
        )
        .is_none());
    }
}
