//! Yb-like model pairs shared by the integration tests.
#![allow(dead_code)]

use rexch_core::calibration::PairTemplate;
use rexch_core::potentials::{make_pair, ChannelLabel, ChannelPair, ChannelPotential};
use rexch_core::scales::{derive_scales, TailSpec};
use rexch_core::units::amu_to_au;

pub const C4: f64 = 72.5;

pub fn tail() -> TailSpec<f64> {
    TailSpec::new(4, C4).unwrap()
}

pub fn mu() -> f64 {
    amu_to_au(171.936) / 2.0
}

pub fn e_star() -> f64 {
    derive_scales(&tail(), mu()).unwrap().e_star
}

/// `C_12` that puts the well minimum at `r_min`.
pub fn c12(r_min: f64) -> f64 {
    r_min.powi(8) * C4 / 3.0
}

pub fn channel(label: ChannelLabel, r_min: f64) -> ChannelPotential<f64> {
    ChannelPotential::power12(label, c12(r_min), tail()).unwrap()
}

pub fn pair(r_a: f64, r_b: f64) -> ChannelPair<f64> {
    make_pair(
        channel(ChannelLabel::A, r_a),
        channel(ChannelLabel::B, r_b),
        mu(),
    )
    .unwrap()
}

/// Channel a fixed at `r_min = 15`, channel b free within `r_min` in [27.55, 28].
pub fn template() -> PairTemplate<f64> {
    PairTemplate::new(
        channel(ChannelLabel::A, 15.0),
        channel(ChannelLabel::B, 27.8),
        mu(),
        (c12(27.55), c12(28.0)),
    )
    .unwrap()
}
