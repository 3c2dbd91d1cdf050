use std::f64::consts::TAU;

use super::validate::PathGeometry;
use super::{InteractionKind, PropagationPath, TraceError};
use crate::em::{
    ci_path_loss, diffraction_loss, path_phase, reflection_loss, scattering_coefficient,
    transmission_loss, utd_diffraction_coefficient, Polarization, RadioConfig, WedgeParams,
    SPEED_OF_LIGHT,
};
use crate::scene::SceneGeometry;

/// Loss, phase, delay and arrival direction for validated geometry.
pub fn compute_path_response(
    geometry: &PathGeometry,
    scene: &SceneGeometry,
    radio: &RadioConfig,
    polarization: Polarization,
) -> Result<PropagationPath, TraceError> {
    let pts = &geometry.points;
    let seg: Vec<f64> = pts.windows(2).map(|w| w[0].distance(w[1])).collect();
    let total_length: f64 = seg.iter().sum();
    let mut loss = ci_path_loss(radio, total_length);
    let mut phase_shift = 0.0;
    let mut reflections = 0u32;
    let mut diffuse_power = 0.0;
    let last = geometry.interactions.len();

    for (i, it) in geometry.interactions.iter().enumerate() {
        match it.kind {
            InteractionKind::Reflect => {
                reflections += 1;
                let tri = &scene.triangles[it.primitive_id as usize];
                let mat = scene.material_of(it.primitive_id);
                loss += reflection_loss(mat);
                let n = tri.normal();
                let out = (pts[i + 2] - it.point).normalized();
                let inc = (pts[i] - it.point).normalized();
                let f =
                    scattering_coefficient(mat, inc.dot(n).abs().acos(), out.dot(n).abs().acos());
                if f.lobe > 0.0 && i + 1 == last {
                    // incoherent lobe off the final bounce, scaled like the specular ray
                    diffuse_power = f.lobe * f.lobe * 10f64.powf(-loss / 10.0);
                }
                if f.specular < 1.0 {
                    loss += -20.0 * f.specular.log10();
                }
            }
            InteractionKind::Transmit => {
                let mat = scene.material_of(it.primitive_id);
                loss += transmission_loss(mat).ok_or_else(|| {
                    TraceError::Config(format!(
                        "transmission through opaque material '{}' on triangle {}",
                        mat.name, it.primitive_id
                    ))
                })?;
            }
            InteractionKind::Diffract => {
                let edge = &scene.diffraction_edges[it.primitive_id as usize];
                let prev = pts[i];
                let next = pts[i + 2];
                let s_in = seg[i];
                let next_is_diffraction = geometry
                    .interactions
                    .get(i + 1)
                    .is_some_and(|n| n.kind == InteractionKind::Diffract);
                let s_out = if next_is_diffraction {
                    seg[i + 1]
                } else {
                    seg[i + 1..].iter().sum()
                };
                let inc = (it.point - prev).normalized();
                let sin_beta0 = inc.cross(edge.direction()).norm().clamp(1e-6, 1.0);
                let n_pi = edge.wedge_exterior_angle;
                let w = WedgeParams {
                    n_wedge: edge.wedge_n(),
                    phi_incidence: edge.azimuth_of(prev).clamp(0.0, n_pi),
                    phi_observation: edge.azimuth_of(next).clamp(0.0, n_pi),
                    l: s_in * s_out * sin_beta0 * sin_beta0 / (s_in + s_out),
                    polarization,
                    sin_beta0,
                };
                let d = utd_diffraction_coefficient(&w, radio.beta0)?;
                loss += diffraction_loss(d, s_in, s_out);
                phase_shift -= d.arg();
            }
        }
    }

    let n = pts.len();
    let phase = (path_phase(total_length, radio, reflections) + phase_shift).rem_euclid(TAU);
    Ok(PropagationPath {
        signature: geometry.signature.clone(),
        interactions: geometry.interactions.clone(),
        points: pts.clone(),
        total_length,
        delay: total_length / SPEED_OF_LIGHT,
        loss_db: loss,
        phase: if phase >= TAU { 0.0 } else { phase },
        arrival_direction: (pts[n - 1] - pts[n - 2]).normalized(),
        diffuse_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::scene::{Material, SceneBuilder};
    use crate::tracer::{Interaction, PathSignature};

    #[test]
    fn direct_path_delay_and_loss() {
        let radio = RadioConfig::default();
        let g = PathGeometry {
            signature: PathSignature::los(),
            interactions: vec![],
            points: vec![Vec3::ZERO, Vec3::new(300.0, 0.0, 0.0)],
        };
        let p =
            compute_path_response(&g, &SceneGeometry::empty(), &radio, Polarization::Soft).unwrap();
        assert!((p.delay * 1e6 - 1.0007).abs() < 1e-4);
        assert_eq!(p.loss_db, ci_path_loss(&radio, 300.0));
        assert_eq!(p.arrival_direction, Vec3::X);
    }

    #[test]
    fn wall_bounce_adds_reflection_loss() {
        let radio = RadioConfig::default();
        let mut b = SceneBuilder::new();
        let m = b.material(Material::wall_outdoor());
        b.add_ground((-10.0, -10.0), (10.0, 10.0), 0.0, m);
        let s = b.build();
        let p0 = Vec3::new(0.0, 0.0, 1.0);
        let q = Vec3::new(1.0, 0.0, 0.0);
        let p1 = Vec3::new(2.0, 0.0, 1.0);
        let g = PathGeometry {
            signature: PathSignature(vec![(InteractionKind::Reflect, 0)]),
            interactions: vec![Interaction {
                kind: InteractionKind::Reflect,
                primitive_id: 0,
                point: q,
            }],
            points: vec![p0, q, p1],
        };
        let p = compute_path_response(&g, &s, &radio, Polarization::Soft).unwrap();
        let expected = ci_path_loss(&radio, 2.0 * 2f64.sqrt()) + 1.938;
        assert!((p.loss_db - expected).abs() < 1e-3);
    }
}
