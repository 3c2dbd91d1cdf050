use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::{ComplexAmplitude, RadioConfig};
use crate::scene::Material;

/// Reported when no path reaches the receiver or the paths cancel exactly.
pub const NO_SIGNAL_DBM: f64 = -200.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterFactors {
    /// Amplitude factor on the specular ray, √(1 − S²).
    pub specular: f64,
    /// Lambertian lobe amplitude toward the observation direction, S·cos θo.
    pub lobe: f64,
}

/// Effective-roughness split of a bounce on `material`. Angles are measured
/// from the surface normal.
pub fn scattering_coefficient(
    material: &Material,
    _incidence_angle: f64,
    observation_angle: f64,
) -> ScatterFactors {
    let s = material.scattering_coefficient.clamp(0.0, 1.0);
    ScatterFactors {
        specular: (1.0 - s * s).sqrt(),
        lobe: s * observation_angle.clamp(0.0, PI / 2.0).cos(),
    }
}

/// Propagation phase plus a π shift per reflection, in [0, 2π).
pub fn path_phase(total_length: f64, radio: &RadioConfig, reflection_count: u32) -> f64 {
    let p = (radio.beta0 * total_length + PI * reflection_count as f64).rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Coherent sum of `(loss dB, phase rad)` paths, in dBm.
pub fn combine_paths(paths: &[(f64, f64)], radio: &RadioConfig) -> f64 {
    let field: ComplexAmplitude = paths
        .iter()
        .filter(|(loss, _)| loss.is_finite())
        .map(|&(loss, phase)| Complex64::from_polar(10f64.powf(-loss / 20.0), phase))
        .sum();
    received_power_dbm(field, 0.0, radio)
}

/// Total power from a coherent field plus an incoherent power ratio, in dBm.
pub fn received_power_dbm(
    field: ComplexAmplitude,
    incoherent_power: f64,
    radio: &RadioConfig,
) -> f64 {
    let p = field.norm_sqr() + incoherent_power;
    if p > 0.0 && p.is_finite() {
        let dbm = radio.tx_power_dbm() + 10.0 * p.log10();
        dbm.max(NO_SIGNAL_DBM)
    } else {
        NO_SIGNAL_DBM
    }
}
