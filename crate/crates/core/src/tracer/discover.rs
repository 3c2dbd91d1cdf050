//! Candidate discovery: ray trees cast from the receiver.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rayon::prelude::*;

use super::sampling::sample_sphere_rays;
use super::{InteractionKind, PathSignature, TraceConfig};
use crate::bvh::{Aabb, Bvh};
use crate::geometry::Vec3;
use crate::scene::SceneGeometry;

/// Length given to discovery segments that leave the scene.
pub const MISS_DISTANCE: f64 = 1e7;
/// Directions sampled around each Keller cone when chaining diffractions.
const KELLER_RAYS: usize = 16;

/// A straight piece of a discovery ray: `origin + t·dir`, `t ∈ [0, t_end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySegment {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_end: f64,
}

/// Everything one sampled direction produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RayTree {
    pub segments: Vec<RaySegment>,
    pub candidates: Vec<PathSignature>,
}

/// Discovery state for one receiver.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Discovery {
    pub rx: Option<Vec3>,
    pub trees: Vec<RayTree>,
    /// Per edge: whether its midpoint is visible from the receiver.
    pub visible_edges: Vec<bool>,
    /// Segments cast this call (reused trees excluded).
    pub segments_cast: u64,
    pub trees_cast: u64,
    pub trees_reused: u64,
}

impl Discovery {
    /// LOS plus every discovered signature, deduplicated and ordered.
    pub fn candidates(&self) -> BTreeSet<PathSignature> {
        let mut set = BTreeSet::new();
        set.insert(PathSignature::los());
        for t in &self.trees {
            set.extend(t.candidates.iter().cloned());
        }
        for (id, &v) in self.visible_edges.iter().enumerate() {
            if v {
                set.insert(PathSignature(vec![(InteractionKind::Diffract, id as u32)]));
            }
        }
        set
    }
}

/// Geometry changed since the previous frame.
#[derive(Clone, Debug, Default)]
pub struct DirtyRegion {
    pub boxes: Vec<Aabb>,
    pub moved_triangles: Vec<bool>,
    pub moved_edges: Vec<bool>,
}

impl DirtyRegion {
    pub fn is_clean(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn touches_ray(&self, s: &RaySegment) -> bool {
        self.boxes
            .iter()
            .any(|b| b.hits_segment(s.origin, s.dir, s.t_end))
    }

    pub fn touches_segment(&self, a: Vec3, b: Vec3) -> bool {
        let len = a.distance(b);
        if len == 0.0 {
            return self.boxes.iter().any(|bx| bx.contains(&Aabb::new(a, a)));
        }
        let dir = (b - a) / len;
        self.boxes.iter().any(|bx| bx.hits_segment(a, dir, len))
    }
}

/// Edge acceleration structure: edge segments inflated by the capture radius.
pub fn edge_bounds(scene: &SceneGeometry, capture_radius: f64) -> Vec<Aabb> {
    scene
        .diffraction_edges
        .iter()
        .map(|e| {
            let [a, b] = e.endpoints;
            Aabb::new(a.min(b), a.max(b)).inflated(capture_radius + 1e-9)
        })
        .collect()
}

/// Shortest distance between segments [p1, q1] and [p2, q2].
pub fn segment_distance(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(d1);
    let e = d2.dot(d2);
    let f = d2.dot(r);
    let (s, t);
    if a <= 1e-300 && e <= 1e-300 {
        return p1.distance(p2);
    }
    if a <= 1e-300 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(r);
        if e <= 1e-300 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 1e-300 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (p1 + d1 * s).distance(p2 + d2 * t)
}

pub(crate) struct Tracing<'a> {
    pub scene: &'a SceneGeometry,
    pub bvh: &'a Bvh,
    pub edge_bvh: &'a Bvh,
    pub cfg: &'a TraceConfig,
}

impl Tracing<'_> {
    /// Edge ids within the capture radius of a segment, ascending.
    fn captured_edges(&self, s: &RaySegment, exclude: Option<u32>, out: &mut Vec<u32>) {
        out.clear();
        if self.cfg.max_diffractions == 0 || self.scene.diffraction_edges.is_empty() {
            return;
        }
        self.edge_bvh
            .overlapping_segment(s.origin, s.dir, s.t_end, out);
        let end = s.origin + s.dir * s.t_end;
        let r = self.cfg.capture_radius;
        out.retain(|&id| {
            if Some(id) == exclude {
                return false;
            }
            let e = &self.scene.diffraction_edges[id as usize];
            segment_distance(s.origin, end, e.endpoints[0], e.endpoints[1]) <= r
        });
        out.sort_unstable();
        out.dedup();
    }

    fn cast(&self, origin: Vec3, dir: Vec3, ignore: Option<u32>) -> (RaySegment, Option<u32>) {
        let hit =
            self.bvh
                .nearest_unchecked(&self.scene.triangles, origin, dir, MISS_DISTANCE, ignore);
        let seg = RaySegment {
            origin,
            dir,
            t_end: hit.map_or(MISS_DISTANCE, |h| h.t),
        };
        (seg, hit.map(|h| h.triangle_id))
    }

    /// Chain further diffractions off edge `edge` reached by direction `dir`.
    fn keller_chain(
        &self,
        tree: &mut RayTree,
        edge: u32,
        dir: Vec3,
        tail: &[(InteractionKind, u32)],
        depth: u32,
    ) {
        if depth >= self.cfg.max_diffractions {
            return;
        }
        let e = &self.scene.diffraction_edges[edge as usize];
        let ed = e.direction();
        let cos_b = dir.dot(ed);
        let sin_b = (1.0 - cos_b * cos_b).max(0.0).sqrt();
        let u = e.zero_face_direction;
        let v = ed.cross(u);
        let origin = e.midpoint();
        let mut captured = Vec::new();
        for i in 0..KELLER_RAYS {
            let psi = TAU * (i as f64 + 0.5) / KELLER_RAYS as f64;
            let out = (ed * cos_b + (u * psi.cos() + v * psi.sin()) * sin_b).normalized();
            let (seg, _) = self.cast(origin, out, None);
            tree.segments.push(seg);
            self.captured_edges(&seg, Some(edge), &mut captured);
            for &next in &captured {
                let mut sig = Vec::with_capacity(tail.len() + 1);
                sig.push((InteractionKind::Diffract, next));
                sig.extend_from_slice(tail);
                tree.candidates.push(PathSignature(sig.clone()));
                self.keller_chain(tree, next, out, &sig, depth + 1);
            }
        }
    }

    /// Reflect/transmit tree of one direction from `rx`.
    pub fn ray_tree(&self, rx: Vec3, dir: Vec3) -> RayTree {
        let mut tree = RayTree::default();
        let mut captured = Vec::new();
        // (origin, dir, interactions in receiver order, reflections, transmissions, ignore)
        let mut stack = vec![(
            rx,
            dir,
            Vec::<(InteractionKind, u32)>::new(),
            0u32,
            0u32,
            None::<u32>,
        )];
        while let Some((origin, dir, seq, nr, nt, ignore)) = stack.pop() {
            let (seg, hit) = self.cast(origin, dir, ignore);
            tree.segments.push(seg);
            let tail: Vec<(InteractionKind, u32)> = seq.iter().rev().copied().collect();
            self.captured_edges(&seg, None, &mut captured);
            for &edge in &captured {
                let mut sig = Vec::with_capacity(tail.len() + 1);
                sig.push((InteractionKind::Diffract, edge));
                sig.extend_from_slice(&tail);
                tree.candidates.push(PathSignature(sig.clone()));
                self.keller_chain(&mut tree, edge, dir, &sig, 1);
            }
            let Some(tri) = hit else { continue };
            let point = seg.origin + seg.dir * seg.t_end;
            // transmit pushed first so the reflection branch is explored first
            if nt < self.cfg.max_transmissions && !self.scene.material_of(tri).is_opaque() {
                let mut s = seq.clone();
                s.push((InteractionKind::Transmit, tri));
                tree.candidates
                    .push(PathSignature(s.iter().rev().copied().collect()));
                stack.push((point, dir, s, nr, nt + 1, Some(tri)));
            }
            if nr < self.cfg.max_reflections {
                let n = self.scene.triangles[tri as usize].normal();
                let mut s = seq;
                s.push((InteractionKind::Reflect, tri));
                tree.candidates
                    .push(PathSignature(s.iter().rev().copied().collect()));
                stack.push((point, dir.reflect(n).normalized(), s, nr + 1, nt, Some(tri)));
            }
        }
        tree
    }

    fn edge_visible(&self, rx: Vec3, id: usize) -> bool {
        let e = &self.scene.diffraction_edges[id];
        let f = e.faces;
        !self
            .bvh
            .occluded(&self.scene.triangles, rx, e.midpoint(), &[f[0], f[1]])
    }
}

/// Cast (or reuse) the receiver's discovery rays. Trees and edge visibility
/// from `previous` are kept when the receiver has not moved and none of
/// their segments meet `dirty`; the outcome is identical to casting afresh.
pub fn discover_candidates(
    scene: &SceneGeometry,
    bvh: &Bvh,
    edge_bvh: &Bvh,
    rx: Vec3,
    cfg: &TraceConfig,
    previous: Option<(&Discovery, &DirtyRegion)>,
) -> Discovery {
    let ctx = Tracing {
        scene,
        bvh,
        edge_bvh,
        cfg,
    };
    let reuse = previous.filter(|(d, _)| d.rx == Some(rx) && d.trees.len() == cfg.ray_count);
    let dirs = sample_sphere_rays(cfg.ray_count, cfg.rng_seed);
    let trees: Vec<(RayTree, bool)> = dirs
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            if let Some((prev, dirty)) = reuse {
                let t = &prev.trees[i];
                if !t.segments.iter().any(|s| dirty.touches_ray(s)) {
                    return (t.clone(), true);
                }
            }
            (ctx.ray_tree(rx, d), false)
        })
        .collect();
    let edge_count = scene.diffraction_edges.len();
    let visible_edges: Vec<bool> = if cfg.max_diffractions == 0 {
        vec![false; edge_count]
    } else {
        (0..edge_count)
            .into_par_iter()
            .map(|id| {
                if let Some((prev, dirty)) = reuse {
                    if prev.visible_edges.len() == edge_count
                        && !dirty.moved_edges.get(id).copied().unwrap_or(false)
                        && !dirty.touches_segment(rx, scene.diffraction_edges[id].midpoint())
                    {
                        return prev.visible_edges[id];
                    }
                }
                ctx.edge_visible(rx, id)
            })
            .collect()
    };
    let mut out = Discovery {
        rx: Some(rx),
        visible_edges,
        ..Discovery::default()
    };
    for (t, reused) in trees {
        if reused {
            out.trees_reused += 1;
        } else {
            out.trees_cast += 1;
            out.segments_cast += t.segments.len() as u64;
        }
        out.trees.push(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_cases() {
        let d = segment_distance(
            Vec3::ZERO,
            Vec3::X,
            Vec3::new(0.5, 1.0, 0.0),
            Vec3::new(0.5, 1.0, 1.0),
        );
        assert!((d - 1.0).abs() < 1e-12);
        let d = segment_distance(
            Vec3::ZERO,
            Vec3::X,
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
        );
        assert!((d - 1.0).abs() < 1e-12);
        let d = segment_distance(
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 0.3),
            Vec3::new(0.0, 1.0, 0.3),
        );
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn empty_scene_discovers_only_los() {
        let scene = SceneGeometry::empty();
        let bvh = Bvh::build(&scene.triangles);
        let ebvh = Bvh::build_from_bounds(&[]);
        let cfg = TraceConfig {
            ray_count: 50,
            ..TraceConfig::default()
        };
        let d = discover_candidates(&scene, &bvh, &ebvh, Vec3::ZERO, &cfg, None);
        assert_eq!(
            d.candidates().into_iter().collect::<Vec<_>>(),
            vec![PathSignature::los()]
        );
        assert_eq!(d.trees_cast, 50);
    }
}
