//! Propagation physics: path loss, material losses, UTD diffraction,
//! rough-surface scattering and coherent combination.

mod combine;
mod pathloss;
mod utd;

use num_complex::Complex64;
use thiserror::Error;

pub use combine::{
    combine_paths, path_phase, received_power_dbm, scattering_coefficient, ScatterFactors,
    NO_SIGNAL_DBM,
};
pub use pathloss::{ci_path_loss, fspl, reflection_loss, transmission_loss};
pub use utd::{
    diffraction_loss, utd_diffraction_coefficient, utd_transition_function, Polarization,
    WedgeParams,
};

/// Linear complex field amplitude relative to the 1 m free-space reference.
pub type ComplexAmplitude = Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmError {
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadioConfig {
    pub frequency_ghz: f64,
    pub tx_power_w: f64,
    /// Path-loss exponent n of the close-in model.
    pub ple_n: f64,
    /// Atmospheric attenuation, dB/km.
    pub at_rate: f64,
    pub wavelength: f64,
    /// Free-space wavenumber, rad/m.
    pub beta0: f64,
}

impl RadioConfig {
    pub fn new(
        frequency_ghz: f64,
        tx_power_w: f64,
        ple_n: f64,
        at_rate: f64,
    ) -> Result<Self, EmError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(frequency_ghz) {
            return Err(EmError::Domain(format!(
                "frequency must be > 0 GHz, got {frequency_ghz}"
            )));
        }
        if !positive(tx_power_w) {
            return Err(EmError::Domain(format!(
                "tx power must be > 0 W, got {tx_power_w}"
            )));
        }
        if !positive(ple_n) {
            return Err(EmError::Domain(format!(
                "path-loss exponent must be > 0, got {ple_n}"
            )));
        }
        if !(at_rate.is_finite() && at_rate >= 0.0) {
            return Err(EmError::Domain(format!(
                "atmospheric rate must be >= 0, got {at_rate}"
            )));
        }
        let wavelength = SPEED_OF_LIGHT / (frequency_ghz * 1e9);
        Ok(RadioConfig {
            frequency_ghz,
            tx_power_w,
            ple_n,
            at_rate,
            wavelength,
            beta0: 2.0 * std::f64::consts::PI / wavelength,
        })
    }

    pub fn tx_power_dbm(&self) -> f64 {
        10.0 * (self.tx_power_w * 1000.0).log10()
    }
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig::new(30.0, 5.0, 2.0, 0.0).expect("valid defaults")
    }
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(-db / 20.0)
}

pub fn amplitude_to_db(a: f64) -> f64 {
    -20.0 * a.log10()
}

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn power_to_db(p: f64) -> f64 {
    -10.0 * p.log10()
}
