//! Resonant-exchange scattering over inverse-power tails.
//!
//! Two channels share an attractive `-C_n / r^n` tail and differ only at
//! short range. The crate computes their absolute phase shifts (Numerov
//! matching plus node counting, or the Milne phase integral), assembles
//! the exchange cross section, and compares the exact quantal correction
//! to the Langevin cross section against its closed-form model.
//!
//! Everything is generic over the scalar type through [`Real`]; the `*64`
//! aliases fix it to `f64`, which all quoted tolerances assume.

// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agreement;
pub mod calibration;
pub mod correction;
pub mod error;
pub mod exchange;
pub mod ode;
pub mod phase_amplitude;
pub mod potentials;
pub mod quad;
pub mod radial;
pub mod real;
pub mod scales;
pub mod scan;
pub mod special;
pub mod units;

pub use error::{Error, Result};
pub use real::Real;

pub type TailSpec64 = scales::TailSpec<f64>;
pub type ScaleSet64 = scales::ScaleSet<f64>;
pub type ChannelPotential64 = potentials::ChannelPotential<f64>;
pub type ChannelPair64 = potentials::ChannelPair<f64>;
pub type SolverSettings64 = radial::SolverSettings<f64>;
pub type PhaseShiftRecord64 = radial::PhaseShiftRecord<f64>;

pub type TailSpec32 = scales::TailSpec<f32>;
pub type ChannelPair32 = potentials::ChannelPair<f32>;
