use std::f64::consts::PI;

use proptest::prelude::*;
use rexch_core::calibration::CaseTag;
use rexch_core::correction::{
    classify, f_closed, f_locking, f_quadrature, sigma_lock, sigma_model, sigma_osc,
    ClassifyOptions, CorrectionInputs, Regime, RegimeSample,
};

fn inputs(d: f64, a: f64, lambda: f64) -> CorrectionInputs<f64> {
    CorrectionInputs {
        delta_delta0: d,
        delta_a0: a,
        lambda,
    }
}

/// `(1/L) int_0^L sin^2(d - l a) dl` integrated by hand.
fn linear_model_mean(d: f64, a: f64, lambda: f64) -> f64 {
    if a == 0.0 {
        return d.sin().powi(2);
    }
    0.5 - ((2.0 * d).sin() - (2.0 * d - 2.0 * lambda * a).sin()) / (4.0 * lambda * a)
}

proptest! {
    #[test]
    fn closed_form_is_a_probability(d in -4.0f64..4.0, a in -1e-2f64..1e-2, lambda in 0.0f64..3e4) {
        let f = f_closed(&inputs(d, a, lambda));
        prop_assert!((-1e-15..=1.0 + 1e-15).contains(&f), "F = {}", f);
    }

    #[test]
    fn closed_form_is_pi_periodic(d in -2.0f64..2.0, a in -1e-2f64..1e-2, lambda in 0.0f64..3e4) {
        let f0 = f_closed(&inputs(d, a, lambda));
        let f1 = f_closed(&inputs(d + PI, a, lambda));
        prop_assert!((f0 - f1).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_hand_integral(d in -2.0f64..2.0, a in -1e-2f64..1e-2, lambda in 1e-3f64..3e4) {
        let f = f_closed(&inputs(d, a, lambda));
        prop_assert!((f - linear_model_mean(d, a, lambda)).abs() < 1e-12);
    }

    #[test]
    fn distance_from_half_is_bounded_by_envelope(d in -2.0f64..2.0, x in 0.5f64..200.0) {
        let f = f_closed(&inputs(d, 1.0, x));
        prop_assert!((f - 0.5).abs() <= 1.0 / (2.0 * x) * (1.0 + 1e-12));
    }

    #[test]
    fn decomposition_identity(d in -2.0f64..2.0, a in -1e-2f64..1e-2, lambda in 0.0f64..3e4,
                              s0 in 0.0f64..1e8, sl in 0.0f64..1e8) {
        let inp = inputs(d, a, lambda);
        let direct = sigma_model(s0, f_closed(&inp), sl).unwrap();
        let split = s0 + sl / 2.0 - sigma_osc(sl, &inp);
        prop_assert!((direct - split).abs() <= 1e-12 * (s0 + sl).max(1.0));
    }
}

#[test]
fn quadrature_of_linear_model_matches_closed_form() {
    // Same comparison as the acceptance run, on a fixed seed.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let d = rng.gen_range(-PI / 2.0..PI / 2.0);
        let a = rng.gen_range(-2e-3..2e-3);
        let lambda = 10f64.powf(rng.gen_range(-1.0..4.3));
        let q = f_quadrature(|l: f64| d - l * a, lambda).unwrap();
        let f = f_closed(&inputs(d, a, lambda));
        assert!((q - f).abs() < 1e-8, "d {d} a {a} L {lambda}: {q} vs {f}");
    }
}

#[test]
fn envelope_is_reached_at_quarter_phase() {
    // |F - 1/2| = |sin 2d + sin(2x - 2d)| / (4x): the extrema touch 1/(2x) only for sin 2d = +-1.
    let d = PI / 4.0;
    for x in [20.0f64, 50.0, 120.0] {
        let peak = (0..20_000)
            .map(|i| x - PI + 2.0 * PI * i as f64 / 20_000.0)
            .map(|y| (f_closed(&inputs(d, 1.0, y)) - 0.5).abs() * 2.0 * y)
            .fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 2.0 / (x * x), "x = {x}: {peak}");
    }
}

#[test]
fn limits() {
    let d = 0.9;
    let tiny = f_closed(&inputs(d, 1e-9, 1.0));
    assert!((tiny - f_locking(d)).abs() < 1e-9);
    assert!((f_closed(&inputs(d, 0.0, 1.0)) - f_locking(d)).abs() < 1e-15);
    let big = f_closed(&inputs(d, 1.0, 1e9));
    assert!((big - 0.5).abs() < 1e-9);
    assert_eq!(f_locking(0.0), 0.0);
    assert!((f_locking(PI / 2.0) - 1.0).abs() < 1e-15);
    assert!((f_locking(PI / 4.0) - 0.5).abs() < 1e-15);
}

#[test]
fn constant_phase_quadrature() {
    assert!((f_quadrature(|_| PI / 2.0, 40.0).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(f_quadrature(|_: f64| 0.0, 40.0).unwrap(), 0.0);
    assert!(f_quadrature(|_: f64| 0.0, 0.0).is_err());
}

#[test]
fn model_cross_sections() {
    assert_eq!(sigma_model(3.0, 0.0, 5.0).unwrap(), 3.0);
    assert!(sigma_model(-1.0, 0.5, 5.0).is_err());
    let inp = inputs(0.3, 1.0, 1e12);
    let s = sigma_model(2.0, f_closed(&inp), 10.0).unwrap();
    assert!((s - 7.0).abs() < 1e-9);
    let k = 0.01;
    assert!((sigma_lock(k, 10.0, PI / 2.0) - (PI / (k * k) + 10.0)).abs() < 1e-9);
}

#[test]
fn threshold_locking_value_is_k2_da2() {
    // Wigner regime: Delta delta_0 ~ -k Delta a, so f ~ (k Delta a)^2.
    let da = 3000.0f64;
    for k in [1e-7f64, 1e-6, 1e-5] {
        let f = f_locking(-k * da);
        assert!((f / (k * da).powi(2) - 1.0).abs() < 1e-3);
    }
}

#[test]
fn case_bands() {
    assert_eq!(CaseTag::of_phase(0.01), CaseTag::Suppressed);
    assert_eq!(CaseTag::of_phase(PI / 4.0), CaseTag::Average);
    assert_eq!(CaseTag::of_phase(3.0 * PI / 8.0), CaseTag::Enhanced);
    assert_eq!(CaseTag::of_phase(-3.0 * PI / 8.0), CaseTag::Enhanced);
}

fn synthetic_scan(d: f64, da: f64) -> Vec<RegimeSample> {
    (0..=50)
        .map(|i| {
            let e_rel = 10f64.powf(-3.0 + 0.2 * i as f64);
            let lambda = 2.0 * e_rel.sqrt();
            RegimeSample {
                e_rel,
                f_model: f_closed(&inputs(d, da, lambda)),
                f_lock: f_locking(d),
                delta_delta0: d,
                resonance: false,
            }
        })
        .collect()
}

#[test]
fn unlocking_moves_up_with_the_phase() {
    let opts = ClassifyOptions::default();
    let onsets: Vec<f64> = [0.26, 0.82, 1.31]
        .iter()
        .map(|&d| {
            classify(d, &synthetic_scan(d, -9.6e-4), &opts)
                .unwrap()
                .e_unlock
                .unwrap()
        })
        .collect();
    assert!(onsets[0] < onsets[1] && onsets[1] < onsets[2], "{onsets:?}");
    let label = classify(0.82, &synthetic_scan(0.82, -9.6e-4), &opts).unwrap();
    assert_eq!(label.case_tag, CaseTag::Average);
    assert!(label.e_wigner < label.e_unlock.unwrap());
    assert_eq!(label.regime(1e-2), Regime::Wigner);
    assert_eq!(label.regime(1e2), Regime::Locking);
    assert_eq!(label.regime(1e9), Regime::Unlocking);
    assert!(!label.low_confidence);
}

#[test]
fn resonant_points_do_not_start_unlocking() {
    let opts = ClassifyOptions::default();
    let clean = classify(0.82, &synthetic_scan(0.82, -9.6e-4), &opts)
        .unwrap()
        .e_unlock
        .unwrap();
    let mut scan = synthetic_scan(0.82, -9.6e-4);
    // A spike at the plateau, flagged as a resonance.
    let i = scan.iter().position(|s| s.e_rel >= 100.0).unwrap();
    scan[i].f_model = 1.0;
    scan[i].resonance = true;
    assert_eq!(
        classify(0.82, &scan, &opts).unwrap().e_unlock.unwrap(),
        clean
    );
}

#[test]
fn drifting_plateau_is_low_confidence() {
    let mut scan = synthetic_scan(0.82, -9.6e-4);
    for s in scan
        .iter_mut()
        .filter(|s| s.e_rel > 100.0 && s.e_rel < 400.0)
    {
        s.delta_delta0 = 0.5;
    }
    let label = classify(0.82, &scan, &ClassifyOptions::default()).unwrap();
    assert!(label.low_confidence && label.plateau_drift > 0.2);
}

#[test]
fn never_unlocking_scan() {
    let label = classify(
        0.82,
        &synthetic_scan(0.82, 0.0),
        &ClassifyOptions::default(),
    )
    .unwrap();
    assert_eq!(label.e_unlock, None);
    assert_eq!(label.regime(1e9), Regime::Locking);
}
