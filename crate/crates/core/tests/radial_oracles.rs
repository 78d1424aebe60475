use rexch_core::potentials::oracle::{Free, HardSphere, SquareWell};
use rexch_core::radial::{count_bound_states, phase_shift, scattering_length, SolverSettings};
use rexch_core::special::fold_pi;

/// Spherical Bessel `j_l(x)` from its power series; independent of the
/// recurrences used by the crate.
fn sph_j(ell: usize, x: f64) -> f64 {
    let mut pref = 1.0;
    for m in 0..ell {
        pref *= x / (2 * m + 3) as f64;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    let y = -x * x / 2.0;
    for k in 1..400 {
        term *= y / (k as f64 * (2 * ell + 2 * k + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    pref * sum
}

/// `y_l(x)` by upward recurrence (stable for the irregular solution).
fn sph_y(ell: usize, x: f64) -> f64 {
    let mut ym = -x.cos() / x;
    if ell == 0 {
        return ym;
    }
    let mut y = -x.cos() / (x * x) - x.sin() / x;
    for m in 1..ell {
        let next = (2 * m + 1) as f64 / x * y - ym;
        ym = y;
        y = next;
    }
    y
}

fn dj(ell: usize, x: f64) -> f64 {
    // d/dx [x j_l(x)]
    let h = 1e-5 * x.max(1e-3);
    ((x + h) * sph_j(ell, x + h) - (x - h) * sph_j(ell, x - h)) / (2.0 * h)
}

fn dy(ell: usize, x: f64) -> f64 {
    let h = 1e-5 * x.max(1e-3);
    ((x + h) * sph_y(ell, x + h) - (x - h) * sph_y(ell, x - h)) / (2.0 * h)
}

fn square_well_phase(ell: usize, k: f64, kappa: f64, radius: f64) -> f64 {
    let xi = kappa * radius;
    let xo = k * radius;
    let beta = kappa * dj(ell, xi) / (xi * sph_j(ell, xi));
    let (j, y) = (xo * sph_j(ell, xo), xo * sph_y(ell, xo));
    fold_pi((beta * j - k * dj(ell, xo)).atan2(beta * y - k * dy(ell, xo)))
}

fn dist_mod_pi(a: f64, b: f64) -> f64 {
    let d = fold_pi(a - b);
    d.min(std::f64::consts::PI - d)
}

#[test]
fn series_matches_closed_forms() {
    for &x in &[0.3, 1.7, 6.0] {
        assert!((sph_j(0, x) - x.sin() / x).abs() < 1e-13);
        assert!((sph_j(1, x) - (x.sin() / (x * x) - x.cos() / x)).abs() < 1e-13);
    }
}

#[test]
fn hard_sphere_phases() {
    let s = SolverSettings::default();
    let p = HardSphere { radius: 1.0 };
    let mut worst: f64 = 0.0;
    for &kr in &[0.01f64, 0.1, 0.5, 1.0, 3.0, 10.0] {
        for ell in [0usize, 1, 2, 5, 10] {
            let e = kr * kr / 2.0;
            let rec = phase_shift(&p, 1.0, e, ell, &s).unwrap();
            let want = fold_pi(sph_j(ell, kr).atan2(sph_y(ell, kr)));
            worst = worst.max(dist_mod_pi(rec.eta_mod_pi, want));
            if ell == 0 {
                assert!(
                    (rec.eta + kr).abs() < 1e-6,
                    "absolute hard-sphere phase {} vs {}",
                    rec.eta,
                    -kr
                );
            }
        }
    }
    assert!(worst < 1e-6, "hard-sphere error {worst:e}");
}

#[test]
fn square_well_phases() {
    let s = SolverSettings::default();
    let (mu, radius, v0): (f64, f64, f64) = (1.0, 1.0, 5.0);
    let p = SquareWell { v0, radius };
    let mut worst: f64 = 0.0;
    for &kr in &[0.01f64, 0.1, 0.5, 1.0, 3.0, 10.0] {
        for ell in [0usize, 1, 3, 10] {
            let k = kr / radius;
            let e = k * k / (2.0 * mu);
            let kappa = (k * k + 2.0 * mu * v0).sqrt();
            let rec = phase_shift(&p, mu, e, ell, &s).unwrap();
            let want = square_well_phase(ell, k, kappa, radius);
            let err = dist_mod_pi(rec.eta_mod_pi, want);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-6, "square-well error {worst:e}");
}

#[test]
fn free_particle_has_no_phase() {
    let s = SolverSettings::default();
    for ell in [0usize, 1, 4] {
        let rec = phase_shift::<f64, _>(&Free, 1.0, 0.5, ell, &s);
        let rec = rec.unwrap();
        assert!(rec.eta.abs() < 1e-6, "l = {ell}: {}", rec.eta);
    }
}

#[test]
fn square_well_bound_states_and_length() {
    let s = SolverSettings::default();
    let three_half_pi: f64 = 1.5 * std::f64::consts::PI;
    let p = SquareWell {
        v0: (three_half_pi * three_half_pi + 0.1) / 2.0,
        radius: 1.0,
    };
    assert_eq!(count_bound_states(&p, 1.0, 0, &s).unwrap().count, 2);
    let q = SquareWell {
        v0: 1.0,
        radius: 1.0,
    };
    let kappa: f64 = 2.0f64.sqrt();
    let want = 1.0 - kappa.tan() / kappa;
    let got = scattering_length(&q, 1.0, &s).unwrap();
    assert!(
        (got.a - want).abs() < 1e-4 * want.abs(),
        "a = {} vs {want}",
        got.a
    );
}

#[test]
fn dense_oracle_sweep() {
    let s = SolverSettings::default();
    let p = SquareWell {
        v0: 5.0f64,
        radius: 1.0,
    };
    let h = HardSphere { radius: 1.0f64 };
    let (mut ws, mut wh) = (0.0f64, 0.0f64);
    for i in 0..=30 {
        let kr = 0.01f64 * 1000f64.powf(i as f64 / 30.0);
        for ell in 0..=10usize {
            let e = kr * kr / 2.0;
            let kappa = (kr * kr + 10.0).sqrt();
            let a = phase_shift(&p, 1.0, e, ell, &s).unwrap().eta_mod_pi;
            ws = ws.max(dist_mod_pi(a, square_well_phase(ell, kr, kappa, 1.0)));
            let b = phase_shift(&h, 1.0, e, ell, &s).unwrap().eta_mod_pi;
            wh = wh.max(dist_mod_pi(
                b,
                fold_pi(sph_j(ell, kr).atan2(sph_y(ell, kr))),
            ));
        }
    }
    assert!(ws < 1e-6 && wh < 1e-6, "square {ws:e} hard {wh:e}");
}
