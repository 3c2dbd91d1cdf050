use std::f64::consts::PI;

use super::{EmError, RadioConfig, SPEED_OF_LIGHT};
use crate::scene::Material;

/// Free-space path loss in dB.
pub fn fspl(frequency_ghz: f64, d: f64) -> Result<f64, EmError> {
    if d.is_nan() || d <= 0.0 {
        return Err(EmError::Domain(format!("distance must be > 0, got {d}")));
    }
    if frequency_ghz.is_nan() || frequency_ghz <= 0.0 {
        return Err(EmError::Domain(format!(
            "frequency must be > 0, got {frequency_ghz}"
        )));
    }
    Ok(20.0 * (4.0 * PI * d * frequency_ghz * 1e9 / SPEED_OF_LIGHT).log10())
}

/// Close-in reference-distance model, 1 m reference:
/// FSPL(1 m) + 10·n·log10(d) + AT·d/1000. The exponent multiplies the
/// distance term; a form with a fixed 20·log10(d) would leave n unused.
/// Distances below 1 m are clamped to the reference.
pub fn ci_path_loss(radio: &RadioConfig, d: f64) -> f64 {
    let d = if d < 1.0 {
        log::warn!("distance {d} m below the 1 m reference, clamped");
        1.0
    } else {
        d
    };
    let reference = 20.0 * (4.0 * PI * radio.frequency_ghz * 1e9 / SPEED_OF_LIGHT).log10();
    reference + 10.0 * radio.ple_n * d.log10() + radio.at_rate * d / 1000.0
}

/// Loss per reflection. A zero coefficient kills the path (`+inf`).
pub fn reflection_loss(material: &Material) -> f64 {
    -20.0 * material.reflection_coefficient.log10()
}

/// Penetration loss, or `None` when the material is opaque.
pub fn transmission_loss(material: &Material) -> Option<f64> {
    material.penetration_loss_db
}
