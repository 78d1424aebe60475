mod common;

use std::f64::consts::PI;

use common::{c12, e_star, mu, pair, tail, C4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rexch_core::potentials::{make_pair, well_summary, ChannelLabel, ChannelPotential, Potential};
use rexch_core::radial::{phase_shift, scattering_length, SolverSettings};
use rexch_core::scales::{
    barrier_geometry, critical_l, cutoff_lambda, derive_scales, energy_for_lambda, g_factor,
    langevin_sigma, wavenumber, TailSpec,
};
use rexch_core::units::amu_to_au;
use rexch_core::Error;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn yb_like_scales() {
    let s = derive_scales(&tail(), mu()).unwrap();
    assert!(rel(s.r_star, 4.8e3) < 0.02, "R* = {}", s.r_star);
    assert!(rel(s.e_star, 1.4e-13) < 0.02, "E* = {:e}", s.e_star);
    assert!(rel(s.k_star * s.r_star, 1.0) < 1e-15);
    assert!(rel(s.e_star, 1.0 / (2.0 * mu() * s.r_star * s.r_star)) < 1e-15);
}

#[test]
fn unit_tail_has_unit_scales() {
    let t = TailSpec::new(4, 1.0f64).unwrap();
    let s = derive_scales(&t, 0.5).unwrap();
    assert!((s.r_star - 1.0).abs() < 1e-15 && (s.e_star - 1.0).abs() < 1e-15);
    // l = 1 barrier: top at r = 1 with height E* = 1, where Lambda = 2.
    let b = barrier_geometry(&t, 0.5, 1.0).unwrap();
    assert!((b.s_ell - 1.0).abs() < 1e-14 && (b.e_top - 1.0).abs() < 1e-14);
    assert!((cutoff_lambda(&t, 0.5, 1.0).unwrap() - 2.0).abs() < 1e-14);
}

#[test]
fn g_factor_values() {
    assert_eq!(g_factor::<f64>(4).unwrap(), 2.0);
    for n in 3..=12u32 {
        let g = g_factor::<f64>(n).unwrap();
        assert!(g > 1.0 && g <= 2.0, "g_{n} = {g}");
        if n != 4 {
            assert!(g < 2.0);
        }
    }
    assert!(g_factor::<f64>(2).is_err());
}

#[test]
fn langevin_table_forms() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let c = 10f64.powf(rng.gen_range(-1.0..4.0));
        let e = 10f64.powf(rng.gen_range(-14.0..-6.0));
        let m = 10f64.powf(rng.gen_range(3.0..6.0));
        let forms = [
            (3u32, 3.0 * PI * (c / (2.0 * e)).powf(2.0 / 3.0)),
            (4, 2.0 * PI * (c / e).sqrt()),
            (6, 1.5 * PI * (2.0 * c / e).powf(1.0 / 3.0)),
        ];
        for (n, expect) in forms {
            let t = TailSpec::new(n, c).unwrap();
            let got = langevin_sigma(&t, m, e).unwrap();
            assert!(rel(got, expect) < 1e-12, "n = {n}: {got} vs {expect}");
        }
        let scale_forms = [
            (3u32, 2.0 * m * c, 1.0 / (8.0 * m.powi(3) * c * c)),
            (4, (2.0 * m * c).sqrt(), 1.0 / (4.0 * m * m * c)),
            (
                6,
                (2.0 * m * c).powf(0.25),
                1.0 / (2.0 * 2f64.sqrt() * m.powf(1.5) * c.sqrt()),
            ),
        ];
        for (n, r, en) in scale_forms {
            let s = derive_scales(&TailSpec::new(n, c).unwrap(), m).unwrap();
            assert!(
                rel(s.r_star, r) < 1e-12 && rel(s.e_star, en) < 1e-12,
                "n = {n}"
            );
        }
    }
}

#[test]
fn cutoff_anchor() {
    let e = energy_for_lambda(&tail(), mu(), 625.0).unwrap() / e_star();
    assert!((9.5e4..=1.0e5).contains(&e), "E/E* = {e}");
    // Low-energy reference point of the Yb-like system.
    let e = 1e-8;
    let lam = cutoff_lambda(&tail(), mu(), e).unwrap();
    let sig = langevin_sigma(&tail(), mu(), e).unwrap();
    assert!(rel(lam, 535.0) < 0.01, "Lambda = {lam}");
    assert!(rel(sig, 5.35e5) < 0.01, "sigma_L = {sig}");
}

#[test]
fn barrier_closure() {
    for n in [3u32, 4, 6] {
        let t = TailSpec::new(n, 7.0).unwrap();
        for i in 0..20 {
            let e = 10f64.powf(-12.0 + 0.4 * i as f64);
            let lam = cutoff_lambda(&t, 100.0, e).unwrap();
            let b = barrier_geometry(&t, 100.0, critical_l(lam)).unwrap();
            assert!(rel(b.e_top, e) < 1e-10, "n = {n}, E = {e:e}: {:e}", b.e_top);
        }
    }
}

#[test]
fn barrier_monotone_in_ell() {
    let mut prev = barrier_geometry(&tail(), mu(), 1.0).unwrap();
    for ell in 2..60 {
        let b = barrier_geometry(&tail(), mu(), ell as f64).unwrap();
        assert!(b.s_ell < prev.s_ell && b.e_top > prev.e_top && b.e_top >= 0.0);
        prev = b;
    }
    assert!(barrier_geometry(&tail(), mu(), 0.0).is_err());
}

#[test]
fn invalid_tails_and_masses() {
    assert!(matches!(TailSpec::new(2, 1.0), Err(Error::InvalidInput(_))));
    assert!(matches!(
        TailSpec::new(4, -1.0),
        Err(Error::InvalidInput(_))
    ));
    assert!(derive_scales(&tail(), 0.0).is_err());
    assert!(cutoff_lambda(&tail(), mu(), -1.0).is_err());
    assert!(energy_for_lambda(&tail(), mu(), 0.0).is_err());
}

proptest! {
    #[test]
    fn sigma_l_is_lambda_over_k2(n in 3u32..=12, c in 0.1f64..1e4, m in 1.0f64..1e6, e_exp in -14.0f64..-4.0) {
        let t = TailSpec::new(n, c).unwrap();
        let e = 10f64.powf(e_exp);
        let k = wavenumber(m, e);
        let lam = cutoff_lambda(&t, m, e).unwrap();
        let sig = langevin_sigma(&t, m, e).unwrap();
        prop_assert!(rel(sig * k * k / PI, lam) < 1e-12);
        prop_assert!(rel(energy_for_lambda(&t, m, lam).unwrap(), e) < 1e-12);
    }

    #[test]
    fn scales_consistent(n in 3u32..=12, c in 0.1f64..1e4, m in 1.0f64..1e6) {
        let t = TailSpec::new(n, c).unwrap();
        let s = derive_scales(&t, m).unwrap();
        prop_assert!(rel(c / s.r_star.powi(n as i32), s.e_star) < 1e-12);
    }

    #[test]
    fn critical_l_inverts_lambda(lam in 0.0f64..1e8) {
        let l = critical_l(lam);
        prop_assert!((l * (l + 1.0) - lam).abs() <= 1e-9 * lam.max(1.0));
    }
}

#[test]
fn tail_is_shared_beyond_boundary() {
    let es = e_star();
    for (ra, rb) in [(15.0, 27.8), (15.0, 27.55), (20.0, 28.0)] {
        let p = pair(ra, rb);
        let lo = p.boundary_r.ln();
        for i in 1..=300 {
            let r = (lo + (1e3f64).ln() * i as f64 / 300.0).exp();
            let (va, vb) = (p.va.value(r), p.vb.value(r));
            let d = (va - vb).abs() / va.abs().max(es);
            assert!(d < 1e-12, "r = {r}: {d:e}");
        }
    }
}

#[test]
fn well_minimum_matches_analytic() {
    for r_min in [10.0, 15.0, 27.8, 40.0] {
        let ch = common::channel(ChannelLabel::A, r_min);
        let w = well_summary(&ch).unwrap();
        let analytic = (3.0 * c12(r_min) / C4).powf(1.0 / 8.0);
        assert!(rel(w.r_min, analytic) < 1e-8, "{} vs {analytic}", w.r_min);
        assert!(w.v_depth > 0.0);
        assert!((ch.value(w.r_min) + w.v_depth).abs() < 1e-15 * w.v_depth);
    }
}

#[test]
fn tabulated_channel_follows_its_samples() {
    let reference = common::channel(ChannelLabel::A, 15.0);
    let r: Vec<f64> = (0..400).map(|i| 10.0 + 0.1 * i as f64).collect();
    let v: Vec<f64> = r.iter().map(|&x| reference.value(x)).collect();
    let tab = ChannelPotential::tabulated(ChannelLabel::A, r, v, tail(), 45.0).unwrap();
    let w = well_summary(&tab).unwrap();
    assert!(rel(w.r_min, 15.0) < 1e-4);
    for x in [12.34, 15.0, 22.22, 40.05] {
        assert!(rel(tab.value(x), reference.value(x)) < 1e-4, "r = {x}");
    }
    assert_eq!(tab.value(60.0), tail().potential(60.0));
    let p = make_pair(tab, common::channel(ChannelLabel::B, 27.8), mu()).unwrap();
    assert!(p.boundary_r >= 45.0);
    assert!(!p.is_degenerate());

    // Samples that do not start on the wall, and splices outside the table.
    let r: Vec<f64> = (0..10).map(|i| 20.0 + i as f64).collect();
    let v = vec![-1e-6; 10];
    assert!(ChannelPotential::tabulated(ChannelLabel::A, r.clone(), v, tail(), 25.0).is_err());
    let v: Vec<f64> = r.iter().map(|&x| reference.value(x)).collect();
    assert!(ChannelPotential::tabulated(ChannelLabel::A, r, v, tail(), 99.0).is_err());
}

#[test]
fn pair_construction_rules() {
    let other_tail = TailSpec::new(4, 2.0 * C4).unwrap();
    let b = ChannelPotential::power12(ChannelLabel::B, c12(20.0), other_tail).unwrap();
    assert!(make_pair(common::channel(ChannelLabel::A, 15.0), b, mu()).is_err());
    assert!(ChannelPotential::power12(ChannelLabel::A, -1.0, tail()).is_err());
    assert!(pair(15.0, 15.0).is_degenerate());
    let p = pair(15.0, 27.8);
    let depth = p.shallow_depth().unwrap();
    assert!(depth > 1e8 * e_star());
    // 12-4 well: V(r_min) = -2 C4 / (3 r_min^4).
    assert!(rel(depth, 2.0 * C4 / (3.0 * 27.8f64.powi(4))) < 1e-8);
}

#[test]
fn wigner_phase_is_minus_ka() {
    let s = SolverSettings::default();
    let r_star = derive_scales(&tail(), mu()).unwrap().r_star;
    let ch = common::channel(ChannelLabel::A, 15.0);
    let a = scattering_length(&ch, mu(), &s).unwrap();
    assert!(!a.uncertain);
    let k = 1e-2 / r_star;
    let e = k * k / (2.0 * mu());
    let delta = phase_shift(&ch, mu(), e, 0, &s).unwrap().eta_mod_pi;
    let delta = rexch_core::special::fold_half_pi(delta);
    assert!(
        (delta + k * a.a).abs() < 0.05 * (k * a.a).abs(),
        "delta = {delta}, -ka = {}",
        -k * a.a
    );
}

#[test]
fn mass_conversion() {
    assert!(rel(amu_to_au(1.0), 1822.888486) < 1e-12);
    assert!(rel(rexch_core::units::reduced_mass_amu(171.936, 171.936), mu()) < 1e-12);
}
