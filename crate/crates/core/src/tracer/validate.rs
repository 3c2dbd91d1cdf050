//! Image-source validation and diffraction-point solving.

use super::{Interaction, InteractionKind, PathSignature};
use crate::bvh::Bvh;
use crate::geometry::Vec3;
use crate::scene::{DiffractionEdge, SceneGeometry, Triangle};

const PLANE_PARAM_EPS: f64 = 1e-9;
const BARY_TOL: f64 = 1e-9;
const WEDGE_ANGLE_TOL: f64 = 1e-9;
const MIN_SEGMENT: f64 = 1e-9;
const CHAIN_MAX_ITER: usize = 500;

/// Validated geometry of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathGeometry {
    pub signature: PathSignature,
    pub interactions: Vec<Interaction>,
    /// tx, interaction points, rx.
    pub points: Vec<Vec3>,
}

/// Outcome of validating one signature, plus every segment handed to an
/// occlusion query. Those segments are what a later frame must check against
/// moved geometry before trusting this outcome again.
#[derive(Clone, Debug, PartialEq)]
pub struct Validation {
    pub geometry: Option<PathGeometry>,
    pub checked_segments: Vec<(Vec3, Vec3)>,
}

impl Validation {
    fn invalid(checked_segments: Vec<(Vec3, Vec3)>) -> Self {
        Validation {
            geometry: None,
            checked_segments,
        }
    }
}

pub fn mirror_point(p: Vec3, tri: &Triangle) -> Vec3 {
    let n = tri.normal();
    p - n * (2.0 * (p - tri.vertices[0]).dot(n))
}

/// Closest point to (src, dst) in the Fermat sense along the infinite edge
/// line, as a parameter from `endpoints[0]`.
fn unfolded_parameter(a: Vec3, e: Vec3, src: Vec3, dst: Vec3) -> Option<f64> {
    let ss = (src - a).dot(e);
    let sd = (dst - a).dot(e);
    let rs = ((src - a) - e * ss).norm();
    let rd = ((dst - a) - e * sd).norm();
    if rs + rd <= 1e-12 {
        return None;
    }
    Some(ss + (sd - ss) * rs / (rs + rd))
}

/// Point on the edge minimizing |src − p| + |p − dst|; `None` when the
/// minimizer is an endpoint.
pub fn diffraction_point(edge: &DiffractionEdge, src: Vec3, dst: Vec3) -> Option<Vec3> {
    let a = edge.endpoints[0];
    let len = edge.length();
    if len <= 0.0 {
        return None;
    }
    let e = edge.direction();
    let t = unfolded_parameter(a, e, src, dst)?;
    let margin = 1e-9 * len;
    if t <= margin || t >= len - margin {
        return None;
    }
    Some(a + e * t)
}

/// Stationary points of a multi-edge chain src → e₁ → … → eₖ → dst by
/// coordinate descent on the convex total length.
pub fn diffraction_chain(edges: &[&DiffractionEdge], src: Vec3, dst: Vec3) -> Option<Vec<Vec3>> {
    match edges.len() {
        0 => return Some(Vec::new()),
        1 => return diffraction_point(edges[0], src, dst).map(|p| vec![p]),
        _ => {}
    }
    let lens: Vec<f64> = edges.iter().map(|e| e.length()).collect();
    if lens.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let dirs: Vec<Vec3> = edges.iter().map(|e| e.direction()).collect();
    let mut t: Vec<f64> = lens.iter().map(|l| l / 2.0).collect();
    let point = |i: usize, t: &[f64]| edges[i].endpoints[0] + dirs[i] * t[i];
    for _ in 0..CHAIN_MAX_ITER {
        let mut change = 0.0f64;
        for i in 0..edges.len() {
            let prev = if i == 0 { src } else { point(i - 1, &t) };
            let next = if i + 1 == edges.len() {
                dst
            } else {
                point(i + 1, &t)
            };
            let ti =
                unfolded_parameter(edges[i].endpoints[0], dirs[i], prev, next)?.clamp(0.0, lens[i]);
            change = change.max((ti - t[i]).abs());
            t[i] = ti;
        }
        if change < 1e-13 {
            break;
        }
    }
    for (i, &ti) in t.iter().enumerate() {
        let margin = 1e-9 * lens[i];
        if ti <= margin || ti >= lens[i] - margin {
            return None;
        }
    }
    Some((0..edges.len()).map(|i| point(i, &t)).collect())
}

fn ignore_for(scene: &SceneGeometry, kind: InteractionKind, id: u32, out: &mut Vec<u32>) {
    match kind {
        InteractionKind::Diffract => {
            let f = scene.diffraction_edges[id as usize].faces;
            out.push(f[0]);
            if f[1] != f[0] {
                out.push(f[1]);
            }
        }
        _ => out.push(id),
    }
}

/// Validate a reflection/transmission-only signature.
pub fn image_validate(
    signature: &PathSignature,
    tx: Vec3,
    rx: Vec3,
    scene: &SceneGeometry,
    bvh: &Bvh,
) -> Option<PathGeometry> {
    if signature.count(InteractionKind::Diffract) > 0 {
        return None;
    }
    validate_signature(signature, tx, rx, scene, bvh).geometry
}

/// Validate a signature of the form D* (R|T)*: diffractions on the
/// transmitter side, then reflections and transmissions toward the receiver.
pub fn validate_signature(
    signature: &PathSignature,
    tx: Vec3,
    rx: Vec3,
    scene: &SceneGeometry,
    bvh: &Bvh,
) -> Validation {
    let mut checked = Vec::new();
    if !signature.is_supported_shape() || tx.distance(rx) < MIN_SEGMENT {
        return Validation::invalid(checked);
    }
    let seq = &signature.0;
    let k = seq
        .iter()
        .take_while(|(kind, _)| *kind == InteractionKind::Diffract)
        .count();
    let rt = &seq[k..];
    for &(kind, id) in seq {
        let bound = match kind {
            InteractionKind::Diffract => scene.diffraction_edges.len(),
            _ => scene.triangles.len(),
        };
        if id as usize >= bound {
            return Validation::invalid(checked);
        }
    }

    // images of rx, back to front
    let m = rt.len();
    let mut images = vec![rx; m + 1];
    for j in (0..m).rev() {
        let (kind, id) = rt[j];
        images[j] = if kind == InteractionKind::Reflect {
            mirror_point(images[j + 1], &scene.triangles[id as usize])
        } else {
            images[j + 1]
        };
    }

    let edges: Vec<&DiffractionEdge> = seq[..k]
        .iter()
        .map(|&(_, id)| &scene.diffraction_edges[id as usize])
        .collect();
    let Some(dpoints) = diffraction_chain(&edges, tx, images[0]) else {
        return Validation::invalid(checked);
    };

    let mut points = Vec::with_capacity(seq.len() + 2);
    points.push(tx);
    points.extend_from_slice(&dpoints);
    let mut cur = *points.last().unwrap();
    for j in 0..m {
        let tri = &scene.triangles[rt[j].1 as usize];
        let n = tri.normal();
        let target = images[j];
        let denom = (target - cur).dot(n);
        if denom.abs() < 1e-15 {
            return Validation::invalid(checked);
        }
        let u = (tri.vertices[0] - cur).dot(n) / denom;
        if !(u > PLANE_PARAM_EPS && u < 1.0 - PLANE_PARAM_EPS) {
            return Validation::invalid(checked);
        }
        let q = cur + (target - cur) * u;
        if !tri.contains_coplanar(q, BARY_TOL) {
            return Validation::invalid(checked);
        }
        points.push(q);
        cur = q;
    }
    points.push(rx);
    if points.windows(2).any(|w| w[0].distance(w[1]) < MIN_SEGMENT) {
        return Validation::invalid(checked);
    }

    for (i, edge) in edges.iter().enumerate() {
        let n_pi = edge.wedge_exterior_angle;
        let phi_in = edge.azimuth_of(points[i]);
        let phi_out = edge.azimuth_of(points[i + 2]);
        if phi_in > n_pi + WEDGE_ANGLE_TOL || phi_out > n_pi + WEDGE_ANGLE_TOL {
            return Validation::invalid(checked);
        }
    }

    let mut ignore = Vec::with_capacity(4);
    for i in 0..points.len() - 1 {
        ignore.clear();
        if i > 0 {
            let (kind, id) = seq[i - 1];
            ignore_for(scene, kind, id, &mut ignore);
        }
        if i < seq.len() {
            let (kind, id) = seq[i];
            ignore_for(scene, kind, id, &mut ignore);
        }
        checked.push((points[i], points[i + 1]));
        if bvh.occluded(&scene.triangles, points[i], points[i + 1], &ignore) {
            return Validation::invalid(checked);
        }
    }

    // diffraction only where the transmitter cannot see past the first edge
    if k > 0 {
        ignore.clear();
        if seq.len() > 1 {
            let (kind, id) = seq[1];
            ignore_for(scene, kind, id, &mut ignore);
        }
        checked.push((tx, points[2]));
        if !bvh.occluded(&scene.triangles, tx, points[2], &ignore) {
            return Validation::invalid(checked);
        }
    }

    let interactions = seq
        .iter()
        .zip(&points[1..])
        .map(|(&(kind, primitive_id), &point)| Interaction {
            kind,
            primitive_id,
            point,
        })
        .collect();
    Validation {
        geometry: Some(PathGeometry {
            signature: signature.clone(),
            interactions,
            points,
        }),
        checked_segments: checked,
    }
}
