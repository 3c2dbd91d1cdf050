//! Diffraction edge extraction by dihedral test.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{SceneGeometry, Triangle};
use crate::geometry::Vec3;

/// Shared edges diffract when the exterior wedge angle exceeds this (≈20° past flat).
pub const DEFAULT_MIN_EXTERIOR_ANGLE: f64 = PI + 0.35;

/// A wedge edge usable for UTD diffraction.
///
/// The wedge is described in the plane perpendicular to the edge: face 0 lies
/// along `zero_face_direction`, and angles are measured from it toward
/// `adjacent_face_normals[0]` (its exterior normal) up to the exterior angle,
/// where face n sits.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffractionEdge {
    pub edge_id: u32,
    pub endpoints: [Vec3; 2],
    /// Exterior-facing normals of face 0 and face n.
    pub adjacent_face_normals: [Vec3; 2],
    /// In (π, 2π]; 2π for half-plane (boundary) edges.
    pub wedge_exterior_angle: f64,
    /// Triangle ids of face 0 and face n. Equal for a half-plane edge.
    pub faces: [u32; 2],
    /// Unit vector in face 0, perpendicular to the edge, pointing into the face.
    pub zero_face_direction: Vec3,
    /// (triangle, vertex slot) of each endpoint, used to follow rigid motion.
    vertex_refs: [(u32, u8); 2],
}

impl DiffractionEdge {
    pub fn direction(&self) -> Vec3 {
        (self.endpoints[1] - self.endpoints[0]).normalized()
    }

    pub fn length(&self) -> f64 {
        self.endpoints[0].distance(self.endpoints[1])
    }

    pub fn midpoint(&self) -> Vec3 {
        self.endpoints[0].lerp(self.endpoints[1], 0.5)
    }

    pub fn is_half_plane(&self) -> bool {
        self.faces[0] == self.faces[1]
    }

    /// Wedge parameter n = exterior angle / π.
    pub fn wedge_n(&self) -> f64 {
        self.wedge_exterior_angle / PI
    }

    /// Angle of `p` around the edge, measured from face 0 through free space, in [0, 2π).
    pub fn azimuth_of(&self, p: Vec3) -> f64 {
        let e = self.direction();
        let v = p - self.endpoints[0];
        let v = v - e * v.dot(e);
        let a = v
            .dot(self.adjacent_face_normals[0])
            .atan2(v.dot(self.zero_face_direction));
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }

    /// Refresh geometry from the current triangle positions (topology unchanged).
    pub(crate) fn recompute(&mut self, triangles: &[Triangle]) {
        let p = triangles[self.vertex_refs[0].0 as usize].vertices[self.vertex_refs[0].1 as usize];
        let q = triangles[self.vertex_refs[1].0 as usize].vertices[self.vertex_refs[1].1 as usize];
        let fa = &triangles[self.faces[0] as usize];
        let fb = if self.is_half_plane() {
            None
        } else {
            Some(&triangles[self.faces[1] as usize])
        };
        if let Some(w) = wedge_of(p, q, fa, fb) {
            self.endpoints = [p, q];
            self.adjacent_face_normals = [w.n0, w.n1];
            self.wedge_exterior_angle = w.exterior;
            self.zero_face_direction = w.t0;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeReport {
    pub shared: usize,
    pub boundary: usize,
    pub non_manifold: usize,
    pub marked: usize,
}

struct Wedge {
    exterior: f64,
    t0: Vec3,
    n0: Vec3,
    n1: Vec3,
}

fn third_vertex(tri: &Triangle, p: Vec3, q: Vec3) -> Vec3 {
    let kp = p.bit_key();
    let kq = q.bit_key();
    *tri.vertices
        .iter()
        .find(|v| {
            let k = v.bit_key();
            k != kp && k != kq
        })
        .unwrap_or(&tri.vertices[2])
}

fn in_face_direction(tri: &Triangle, p: Vec3, e: Vec3, q: Vec3) -> Vec3 {
    let r = third_vertex(tri, p, q) - p;
    (r - e * r.dot(e)).normalized()
}

/// Wedge geometry independent of triangle winding: the reflex side is exterior.
fn wedge_of(p: Vec3, q: Vec3, fa: &Triangle, fb: Option<&Triangle>) -> Option<Wedge> {
    let e = (q - p).normalized();
    let t0 = in_face_direction(fa, p, e, q);
    let m = fa.normal();
    match fb {
        None => Some(Wedge {
            exterior: 2.0 * PI,
            t0,
            n0: m,
            n1: -m,
        }),
        Some(fb) => {
            let t1 = in_face_direction(fb, p, e, q);
            let s = t1.dot(m);
            let interior = s.atan2(t1.dot(t0)).abs();
            let exterior = 2.0 * PI - interior;
            let n0 = if s > 0.0 { -m } else { m };
            let mb = fb.normal();
            let n1 = if mb.dot(t0) > 0.0 { -mb } else { mb };
            Some(Wedge {
                exterior,
                t0,
                n0,
                n1,
            })
        }
    }
}

type EdgeKey = (u32, [u64; 3], [u64; 3]);

/// Mark diffraction edges. Shared edges qualify when the exterior angle exceeds
/// `min_exterior_angle`; boundary edges are always half-planes; edges with more
/// than two faces are skipped and counted as non-manifold.
pub fn extract_diffraction_edges(
    geometry: &SceneGeometry,
    min_exterior_angle: f64,
) -> (Vec<DiffractionEdge>, EdgeReport) {
    let mut slots: HashMap<EdgeKey, Vec<(u32, u8)>> = HashMap::new();
    let mut order: Vec<EdgeKey> = Vec::new();
    for (ti, tri) in geometry.triangles.iter().enumerate() {
        for k in 0..3u8 {
            let a = tri.vertices[k as usize].bit_key();
            let b = tri.vertices[((k + 1) % 3) as usize].bit_key();
            let key = if a <= b {
                (tri.object_id, a, b)
            } else {
                (tri.object_id, b, a)
            };
            let entry = slots.entry(key).or_default();
            if entry.is_empty() {
                order.push(key);
            }
            entry.push((ti as u32, k));
        }
    }

    let mut report = EdgeReport::default();
    let mut edges = Vec::new();
    for key in order {
        let uses = &slots[&key];
        let (t0, k0) = uses[0];
        let tri = &geometry.triangles[t0 as usize];
        let p = tri.vertices[k0 as usize];
        let q = tri.vertices[((k0 + 1) % 3) as usize];
        let refs = [(t0, k0), (t0, (k0 + 1) % 3)];
        let (faces, wedge) = match uses.len() {
            1 => {
                report.boundary += 1;
                ([t0, t0], wedge_of(p, q, tri, None))
            }
            2 => {
                report.shared += 1;
                let t1 = uses[1].0;
                let w = wedge_of(p, q, tri, Some(&geometry.triangles[t1 as usize]));
                match w {
                    Some(w) if w.exterior > min_exterior_angle => ([t0, t1], Some(w)),
                    _ => continue,
                }
            }
            _ => {
                report.non_manifold += 1;
                log::warn!("non-manifold edge shared by {} faces skipped", uses.len());
                continue;
            }
        };
        if let Some(w) = wedge {
            edges.push(DiffractionEdge {
                edge_id: edges.len() as u32,
                endpoints: [p, q],
                adjacent_face_normals: [w.n0, w.n1],
                wedge_exterior_angle: w.exterior,
                faces,
                zero_face_direction: w.t0,
                vertex_refs: refs,
            });
        }
    }
    report.marked = edges.len();
    (edges, report)
}
