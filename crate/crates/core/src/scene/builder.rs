//! Programmatic scene construction and the procedural street testbed.

use std::collections::HashMap;

use super::{Material, SceneGeometry, SceneObject, Triangle, MIN_TRIANGLE_AREA};
use crate::geometry::Vec3;

/// Incrementally assembles triangles, material slots and objects.
#[derive(Debug)]
pub struct SceneBuilder {
    triangles: Vec<Triangle>,
    materials: Vec<Material>,
    material_ids: HashMap<String, u32>,
    objects: Vec<SceneObject>,
}

impl Default for SceneBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl SceneBuilder {
    pub fn new() -> Self {
        SceneBuilder {
            triangles: Vec::new(),
            materials: Vec::new(),
            material_ids: HashMap::new(),
            objects: vec![SceneObject {
                name: "world".into(),
                ranges: Vec::new(),
            }],
        }
    }

    /// Register (or look up by name) a material slot.
    pub fn material(&mut self, m: Material) -> u32 {
        if let Some(&id) = self.material_ids.get(&m.name) {
            return id;
        }
        let id = self.materials.len() as u32;
        self.material_ids.insert(m.name.clone(), id);
        self.materials.push(m);
        id
    }

    /// Register a dynamic object by name and return its id.
    pub fn object(&mut self, name: &str) -> u32 {
        if let Some(i) = self.objects.iter().position(|o| o.name == name) {
            return i as u32;
        }
        self.objects.push(SceneObject {
            name: name.into(),
            ranges: Vec::new(),
        });
        (self.objects.len() - 1) as u32
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn add_triangle(&mut self, a: Vec3, b: Vec3, c: Vec3, material: u32, object: u32) {
        let tri = Triangle::new(a, b, c, material, object);
        if tri.area() <= MIN_TRIANGLE_AREA {
            return;
        }
        let idx = self.triangles.len();
        self.triangles.push(tri);
        let ranges = &mut self.objects[object as usize].ranges;
        match ranges.last_mut() {
            Some(r) if r.end == idx => r.end = idx + 1,
            _ => ranges.push(idx..idx + 1),
        }
    }

    /// Quad with corners in counter-clockwise order, split along the 0–2 diagonal.
    pub fn add_quad(&mut self, c: [Vec3; 4], material: u32, object: u32) {
        self.add_triangle(c[0], c[1], c[2], material, object);
        self.add_triangle(c[0], c[2], c[3], material, object);
    }

    /// Closed axis-aligned box with outward normals (12 triangles).
    pub fn add_box(&mut self, min: Vec3, max: Vec3, material: u32, object: u32) {
        self.add_subdivided_box(min, max, [1, 1, 1], material, object);
    }

    /// Closed box whose faces are split into a grid; shared edges line up exactly.
    pub fn add_subdivided_box(
        &mut self,
        min: Vec3,
        max: Vec3,
        divisions: [usize; 3],
        material: u32,
        object: u32,
    ) {
        let lo = [min.x, min.y, min.z];
        let hi = [max.x, max.y, max.z];
        let coord = |axis: usize, i: usize| -> f64 {
            let n = divisions[axis];
            if i == 0 {
                lo[axis]
            } else if i == n {
                hi[axis]
            } else {
                lo[axis] + (hi[axis] - lo[axis]) * (i as f64 / n as f64)
            }
        };
        // (fixed axis, at max?, u axis, v axis) with u × v outward
        let faces = [
            (2, false, 1, 0),
            (2, true, 0, 1),
            (1, false, 0, 2),
            (1, true, 2, 0),
            (0, false, 2, 1),
            (0, true, 1, 2),
        ];
        for (f, at_max, ua, va) in faces {
            let fixed = if at_max { hi[f] } else { lo[f] };
            let point = |i: usize, j: usize| {
                let mut p = [0.0; 3];
                p[f] = fixed;
                p[ua] = coord(ua, i);
                p[va] = coord(va, j);
                Vec3::new(p[0], p[1], p[2])
            };
            for i in 0..divisions[ua] {
                for j in 0..divisions[va] {
                    self.add_quad(
                        [
                            point(i, j),
                            point(i + 1, j),
                            point(i + 1, j + 1),
                            point(i, j + 1),
                        ],
                        material,
                        object,
                    );
                }
            }
        }
    }

    /// Horizontal rectangle at height `z`, facing up.
    pub fn add_ground(&mut self, min: (f64, f64), max: (f64, f64), z: f64, material: u32) {
        self.add_quad(
            [
                Vec3::new(min.0, min.1, z),
                Vec3::new(max.0, min.1, z),
                Vec3::new(max.0, max.1, z),
                Vec3::new(min.0, max.1, z),
            ],
            material,
            0,
        );
    }

    pub fn build(self) -> SceneGeometry {
        SceneGeometry::new(self.triangles, self.materials, self.objects)
    }
}

/// Layout of the procedural street canyon used for route and benchmark runs.
#[derive(Clone, Debug, PartialEq)]
pub struct StreetParams {
    pub buildings_per_side: usize,
    pub building_length: f64,
    pub building_gap: f64,
    pub building_depth: f64,
    pub base_height: f64,
    /// Building faces are split into this grid (x, y, z).
    pub divisions: [usize; 3],
    /// Half of the facade-to-facade street width.
    pub half_width: f64,
    pub ground_margin: f64,
    /// Vehicle body: center of its footprint at ground level, and size.
    pub vehicle: Option<(Vec3, Vec3)>,
    /// Optional block across the street (used for NLOS routes): min, max.
    /// Equal x bounds give a single sheet in the x = const plane.
    pub blocker: Option<(Vec3, Vec3)>,
}

impl Default for StreetParams {
    fn default() -> Self {
        StreetParams {
            buildings_per_side: 20,
            building_length: 15.0,
            building_gap: 5.0,
            building_depth: 12.0,
            base_height: 10.0,
            divisions: [4, 3, 3],
            half_width: 12.0,
            ground_margin: 40.0,
            vehicle: Some((Vec3::new(0.0, -4.0, 0.0), Vec3::new(4.5, 1.8, 1.5))),
            blocker: None,
        }
    }
}

/// Two rows of buildings along the x axis with a street between them, all
/// made of outdoor wall. The vehicle, when present, is object "vehicle".
pub fn street_scene(p: &StreetParams) -> SceneGeometry {
    let mut b = SceneBuilder::new();
    let wall = b.material(Material::wall_outdoor());
    let pitch = p.building_length + p.building_gap;
    let x0 = -(p.buildings_per_side as f64) * pitch / 2.0;
    let far = p.half_width + p.building_depth;
    b.add_ground(
        (x0 - p.ground_margin, -far - p.ground_margin),
        (-x0 + p.ground_margin, far + p.ground_margin),
        0.0,
        wall,
    );
    for side in [-1.0, 1.0] {
        for i in 0..p.buildings_per_side {
            let xa = x0 + i as f64 * pitch + p.building_gap / 2.0;
            let height =
                p.base_height + 4.0 * ((i * 7 + if side > 0.0 { 3 } else { 0 }) % 3) as f64;
            let (ya, yb) = if side > 0.0 {
                (p.half_width, far)
            } else {
                (-far, -p.half_width)
            };
            b.add_subdivided_box(
                Vec3::new(xa, ya, 0.0),
                Vec3::new(xa + p.building_length, yb, height),
                p.divisions,
                wall,
                0,
            );
        }
    }
    match p.blocker {
        Some((lo, hi)) if lo.x == hi.x => b.add_quad(
            [
                lo,
                Vec3::new(lo.x, hi.y, lo.z),
                hi,
                Vec3::new(lo.x, lo.y, hi.z),
            ],
            wall,
            0,
        ),
        Some((lo, hi)) => b.add_box(lo, hi, wall, 0),
        None => {}
    }
    if let Some((center, size)) = p.vehicle {
        let car = b.object("vehicle");
        let half = Vec3::new(size.x / 2.0, size.y / 2.0, 0.0);
        b.add_box(
            center - half,
            center + half + Vec3::new(0.0, 0.0, size.z),
            wall,
            car,
        );
    }
    b.build()
}
