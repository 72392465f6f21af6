//! Numerical laboratory for space-time-coding metasurface (STCM) assisted
//! monostatic MIMO sensing.
//!
//! The crate covers harmonic scattering synthesis, echo modelling, Fisher
//! information and position error bounds, detection probability and MAP
//! target classification, plus a fixed-profile RIS baseline. Experiment
//! orchestration and result emission live in [`simulator`].

// negated comparisons are used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod classification;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod marcum;
pub mod metasurface;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts a dB value to a linear power ratio.
pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a dB value to a linear amplitude ratio.
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Converts a power-like quantity to dB.
pub fn power_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_power(dbm - 30.0)
}
