mod common;

use std::f64::consts::PI;

use common::{c12, channel, e_star, mu, pair, template};
use rexch_core::calibration::{calibrate_case, CalibrationOptions, CaseTag, PairTemplate};
use rexch_core::exchange::{
    delta_eta_series, exchange_cross_section, exchange_point, fold_levinson, levinson_decompose,
    DeltaEtaEntry, DeltaEtaSeries, ExchangePoint, SeriesOptions,
};
use rexch_core::potentials::ChannelLabel;
use rexch_core::radial::{scattering_length, SolverSettings};
use rexch_core::scales::{partial_wave_cutoff, wavenumber};
use rexch_core::scan::{flag_resonances, log_grid, run_scan, DeltaASource, ScanOptions, ScanRow};
use rexch_core::special::fold_half_pi;
use rexch_core::Error;

#[test]
fn identical_channels_do_not_exchange() {
    let p = pair(15.0, 15.0);
    let s = SolverSettings::default();
    for e_rel in [1e-2, 1.0, 1e3] {
        let pt = exchange_point(&p, e_rel * e_star(), &s, &SeriesOptions::default()).unwrap();
        assert!(pt.series.entries.iter().all(|en| en.delta_eta == 0.0));
        assert_eq!((pt.sigma_exc, pt.sigma0, pt.f_exact), (0.0, 0.0, 0.0));
    }
    let lv = levinson_decompose(&p, e_star(), &s).unwrap();
    assert_eq!(
        (lv.delta_n0, lv.delta_delta0, lv.bound_difference),
        (0, 0.0, 0)
    );
}

#[test]
fn levinson_split_is_consistent() {
    let p = pair(15.0, 27.8);
    let s = SolverSettings::default();
    for e_rel in [1e-3, 1.0, 100.0] {
        let pt = exchange_point(&p, e_rel * e_star(), &s, &SeriesOptions::default()).unwrap();
        let d0 = pt.series.delta_eta0();
        assert!((PI * pt.delta_n0 as f64 + pt.delta_delta0 - d0).abs() < 1e-6);
        assert!(pt.delta_delta0 > -PI / 2.0 && pt.delta_delta0 <= PI / 2.0);
    }
    // Near threshold the integer is the bound-state difference.
    let lv = levinson_decompose(&p, 1e-3 * e_star(), &s).unwrap();
    assert!(!lv.ambiguous);
    assert_eq!(lv.delta_n0, lv.bound_difference);
    assert_eq!(fold_levinson(2.0 * PI + 0.3).0, 2);
    assert!((fold_levinson(-PI - 0.2).1 + 0.2).abs() < 1e-15);
}

#[test]
fn phase_difference_is_continuous() {
    let p = pair(15.0, 27.8);
    let s = SolverSettings::default();
    let grid = log_grid(1e-2, 1e3, 10).unwrap();
    let phases: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let lv = levinson_decompose(&p, x * e_star(), &s).unwrap();
            lv.delta_delta0
        })
        .collect();
    for w in phases.windows(2) {
        assert!(fold_half_pi(w[1] - w[0]).abs() < PI / 2.0);
    }
}

#[test]
fn wigner_limit_and_constancy() {
    let p = pair(15.0, 27.8);
    let s = SolverSettings::default();
    let a_a = scattering_length(&p.va, mu(), &s).unwrap().a;
    let a_b = scattering_length(&p.vb, mu(), &s).unwrap().a;
    let target = PI * (a_a - a_b).powi(2);
    let low = exchange_point(&p, 1e-3 * e_star(), &s, &SeriesOptions::default()).unwrap();
    assert!(
        (low.sigma_exc / target - 1.0).abs() < 0.03,
        "{:e} vs {target:e}",
        low.sigma_exc
    );
    // The k-linear threshold term of the r^-4 tail reaches 4% over [1e-3, 1e-2] E*.
    let sig: Vec<f64> = [3e-6, 3e-5, 3e-4, 3e-3]
        .iter()
        .map(|&x| {
            exchange_point(&p, x * e_star(), &s, &SeriesOptions::default())
                .unwrap()
                .sigma_exc
        })
        .collect();
    for w in sig.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.02, "{w:?}");
    }
}

#[test]
fn high_partial_waves_vanish() {
    let p = pair(15.0, 27.8);
    let s = SolverSettings::default();
    let opts = SeriesOptions {
        margin: 10,
        ..Default::default()
    };
    for e_rel in [0.3, 10.0, 300.0, 1e4] {
        let e = e_rel * e_star();
        let series = delta_eta_series(&p, e, &s, &opts).unwrap();
        let cut = partial_wave_cutoff(series.cutoff_l * (series.cutoff_l + 1.0));
        assert_eq!(series.truncated_at, cut + 10);
        assert!(series.truncated_at as f64 >= series.cutoff_l.ceil());
        for en in &series.entries[cut + 2..] {
            assert!(
                en.sin2 < 1e-6,
                "E = {e_rel} E*, l = {}: {:e}",
                en.ell,
                en.sin2
            );
        }
        let k = wavenumber(mu(), e);
        let cs = exchange_cross_section(&series, k);
        let beyond: f64 = series.entries[cut + 1..]
            .iter()
            .map(|en| (2 * en.ell + 1) as f64 * en.sin2)
            .sum::<f64>()
            * PI
            / (k * k);
        assert!(beyond < 1e-3 * cs.sigma_exc, "E = {e_rel} E*");
        assert!(cs.truncation_bound > 0.0);
    }
}

#[test]
fn exchange_respects_unitarity_and_langevin_bounds() {
    let p = pair(15.0, 27.8);
    let s = SolverSettings::default();
    for e_rel in [30.0, 1e3, 3e4] {
        let pt = exchange_point(&p, e_rel * e_star(), &s, &SeriesOptions::default()).unwrap();
        let top = pt.series.truncated_at as f64;
        let k = wavenumber(mu(), pt.energy);
        assert!(pt.sigma_exc >= pt.sigma0 && pt.sigma0 >= 0.0 && pt.f_exact >= 0.0);
        assert!(pt.sigma_exc <= PI / (k * k) * (top + 1.0).powi(2) * (1.0 + 1e-12));
        let lc = pt.series.cutoff_l.ceil();
        if pt.series.cutoff_l >= 3.0 {
            assert!(pt.sigma_exc <= pt.sigma0 + pt.sigma_l * (1.0 + 3.0 / lc));
        }
    }
}

#[test]
fn energy_ceiling_is_enforced() {
    let p = pair(15.0, 27.8);
    let s = SolverSettings::default();
    let depth = p.shallow_depth().unwrap();
    let err = exchange_point(&p, 0.25 * depth, &s, &SeriesOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
    assert!(delta_eta_series(&p, -1.0, &s, &SeriesOptions::default()).is_err());
}

#[test]
fn log_grid_layout() {
    let g = log_grid(1e-3, 1e3, 5).unwrap();
    assert_eq!(g.len(), 31);
    assert_eq!(g[0], 1e-3);
    assert!((g[30] / 1e3 - 1.0).abs() < 1e-12);
    assert!(g.windows(2).all(|w| w[1] > w[0]));
    assert!(log_grid(0.0, 1.0, 4).is_err());
    assert!(log_grid(1.0, 10.0, 0).is_err());
    assert_eq!(log_grid(2.0, 2.0, 4).unwrap(), vec![2.0]);
}

fn synthetic_row(e: f64, delta_eta: &[f64]) -> ScanRow {
    let entries: Vec<DeltaEtaEntry> = delta_eta
        .iter()
        .enumerate()
        .map(|(ell, &d)| DeltaEtaEntry {
            ell,
            delta_eta: d,
            sin2: d.sin().powi(2),
            eta_a: 0.0,
            eta_b: d,
            perturbed: false,
        })
        .collect();
    let n = entries.len();
    ScanRow {
        energy: e,
        e_rel: e,
        point: ExchangePoint {
            energy: e,
            sigma0: 0.0,
            sigma_exc: 0.0,
            sigma_l: 1.0,
            lambda: 100.0,
            f_exact: 0.0,
            delta_delta0: delta_eta[0],
            delta_n0: 0,
            truncation_bound: 0.0,
            series: DeltaEtaSeries {
                energy: e,
                entries,
                cutoff_l: 9.5,
                truncated_at: n - 1,
                warnings: vec![],
            },
        },
        delta_a0: None,
        delta_a_method: None,
        f_model: None,
        f_lock: 0.0,
        resonance: false,
        beyond_cutoff: 0.0,
    }
}

#[test]
fn resonance_flags_follow_steep_waves() {
    let mut rows: Vec<ScanRow> = (0..20)
        .map(|i| {
            let e = 1.0 + i as f64;
            let d: Vec<f64> = (0..6)
                .map(|l| 0.4 - 1e-6 * (l * (l + 1)) as f64 * e)
                .collect();
            synthetic_row(e, &d)
        })
        .collect();
    flag_resonances(&mut rows, 1e3);
    assert!(rows.iter().all(|r| !r.resonance));
    // A sharp step of l = 3 between two energies.
    for r in rows.iter_mut().skip(10) {
        let en = &mut r.point.series.entries[3];
        en.delta_eta += 1.5;
        en.sin2 = en.delta_eta.sin().powi(2);
    }
    flag_resonances(&mut rows, 1e3);
    let flagged: Vec<usize> = (0..20).filter(|&i| rows[i].resonance).collect();
    assert_eq!(flagged, vec![9, 10]);
    rows[2].point.series.entries[1].perturbed = true;
    flag_resonances(&mut rows, 1e3);
    assert!(rows[2].resonance);
}

fn quick_options() -> ScanOptions {
    ScanOptions {
        delta_a: DeltaASource::Fit,
        ..Default::default()
    }
}

#[test]
fn scan_is_independent_of_thread_count() {
    let p = pair(15.0, 27.8);
    let s = SolverSettings::default();
    let grid = log_grid(1e-1, 3e3, 3).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_scan(&p, &grid, &s, &quick_options()).unwrap())
    };
    let serial = run(1);
    let parallel = run(4);
    assert_eq!(serial.rows.len(), grid.len());
    // Debug output of f64 round-trips, so equal strings mean equal bits.
    assert_eq!(format!("{serial:?}"), format!("{parallel:?}"));
    assert!(serial.rows.windows(2).all(|w| w[0].energy < w[1].energy));
    assert!(serial.label.is_some());
    assert!(run_scan(&p, &[2.0, 1.0], &s, &quick_options()).is_err());
}

#[test]
fn calibration_keeps_a_template_already_in_band() {
    let s = SolverSettings::default();
    let opts = CalibrationOptions::default();
    let rep = calibrate_case(&template(), CaseTag::Average, &s, &opts).unwrap();
    assert_eq!(rep.iterations, 0);
    assert_eq!(rep.c_rep, c12(27.8));
    assert_eq!(rep.achieved, CaseTag::Average);
    assert!((rep.delta_a - (rep.a_b - rep.a_a)).abs() < 1e-9);
}

#[test]
fn calibration_is_deterministic_and_lands_in_band() {
    let s = SolverSettings::default();
    let opts = CalibrationOptions::default();
    let a = calibrate_case(&template(), CaseTag::Suppressed, &s, &opts).unwrap();
    let b = calibrate_case(&template(), CaseTag::Suppressed, &s, &opts).unwrap();
    assert_eq!(a.c_rep.to_bits(), b.c_rep.to_bits());
    assert_eq!(a.trace, b.trace);
    assert!(CaseTag::Suppressed.contains(a.delta_delta0));
    assert!((a.delta_delta0.abs() - CaseTag::Suppressed.aim()).abs() <= opts.tolerance);
    assert!(a.iterations > 0 && a.trace.len() == a.iterations + 1);
}

#[test]
fn identical_cores_are_already_suppressed() {
    let t = PairTemplate::new(
        channel(ChannelLabel::A, 15.0),
        channel(ChannelLabel::B, 15.0),
        mu(),
        (c12(14.0), c12(16.0)),
    )
    .unwrap();
    let s = SolverSettings::default();
    let rep = calibrate_case(&t, CaseTag::Suppressed, &s, &CalibrationOptions::default()).unwrap();
    assert_eq!((rep.iterations, rep.delta_delta0), (0, 0.0));
}

#[test]
fn unreachable_band_reports_the_sweep() {
    let t = PairTemplate::new(
        channel(ChannelLabel::A, 15.0),
        channel(ChannelLabel::B, 27.8),
        mu(),
        (c12(27.79), c12(27.81)),
    )
    .unwrap();
    let s = SolverSettings::default();
    let opts = CalibrationOptions {
        seeds: 5,
        ..Default::default()
    };
    match calibrate_case(&t, CaseTag::Enhanced, &s, &opts) {
        Err(Error::Calibration { trace, .. }) => assert_eq!(trace.len(), 6),
        other => panic!("expected a calibration failure, got {other:?}"),
    }
    assert!(PairTemplate::new(
        channel(ChannelLabel::A, 15.0),
        channel(ChannelLabel::B, 30.0),
        mu(),
        (c12(27.79), c12(27.81)),
    )
    .is_err());
}
