//! Triangle-mesh environments with EM materials, diffraction edges and
//! per-frame rigid motion of dynamic objects.

mod builder;
mod edges;
mod material;
mod obj;

use std::ops::Range;

use thiserror::Error;

use crate::bvh::Aabb;
use crate::geometry::{RigidTransform, Vec3};

pub use builder::{street_scene, SceneBuilder, StreetParams};
pub use edges::{
    extract_diffraction_edges, DiffractionEdge, EdgeReport, DEFAULT_MIN_EXTERIOR_ANGLE,
};
pub use material::{Material, MaterialTable};
pub use obj::{load_obj, load_obj_with, LoadReport, ObjOptions};

/// Triangles with area at or below this are dropped at load.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: vertex index {index} out of range ({count} vertices)")]
    Index {
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("unknown object id {0}")]
    UnknownObject(u32),
    #[error("unknown object '{0}'")]
    UnknownObjectName(String),
    #[error("invalid material '{name}': {reason}")]
    InvalidMaterial { name: String, reason: String },
    #[error("material table is empty")]
    EmptyMaterialTable,
    #[error("rigid transform is not orthonormal with determinant +1")]
    InvalidTransform,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub vertices: [Vec3; 3],
    pub material_id: u32,
    /// 0 is the static world.
    pub object_id: u32,
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3, material_id: u32, object_id: u32) -> Self {
        Triangle {
            vertices: [a, b, c],
            material_id,
            object_id,
        }
    }

    /// Unnormalized normal; its length is twice the area.
    #[inline]
    pub fn scaled_normal(&self) -> Vec3 {
        let [a, b, c] = self.vertices;
        (b - a).cross(c - a)
    }

    /// Outward normal implied by counter-clockwise winding.
    #[inline]
    pub fn normal(&self) -> Vec3 {
        self.scaled_normal().normalized()
    }

    #[inline]
    pub fn area(&self) -> f64 {
        0.5 * self.scaled_normal().norm()
    }

    pub fn centroid(&self) -> Vec3 {
        let [a, b, c] = self.vertices;
        (a + b + c) / 3.0
    }

    pub fn bounds(&self) -> Aabb {
        let [a, b, c] = self.vertices;
        Aabb::new(a.min(b).min(c), a.max(b).max(c))
    }

    /// Barycentric containment test for a point already on the triangle plane.
    pub fn contains_coplanar(&self, p: Vec3, tol: f64) -> bool {
        let [a, b, c] = self.vertices;
        let v0 = b - a;
        let v1 = c - a;
        let v2 = p - a;
        let d00 = v0.dot(v0);
        let d01 = v0.dot(v1);
        let d11 = v1.dot(v1);
        let d20 = v2.dot(v0);
        let d21 = v2.dot(v1);
        let denom = d00 * d11 - d01 * d01;
        if denom <= 0.0 {
            return false;
        }
        let v = (d11 * d20 - d01 * d21) / denom;
        let w = (d00 * d21 - d01 * d20) / denom;
        v >= -tol && w >= -tol && v + w <= 1.0 + tol
    }

    pub fn transformed(&self, t: &RigidTransform) -> Triangle {
        Triangle {
            vertices: self.vertices.map(|v| t.apply(v)),
            ..*self
        }
    }
}

/// A named group of triangles that moves as one rigid body.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub name: String,
    pub ranges: Vec<Range<usize>>,
}

impl SceneObject {
    pub fn triangle_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.ranges.iter().flat_map(|r| r.clone().map(|i| i as u32))
    }

    pub fn triangle_count(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).sum()
    }
}

/// Outcome of resolving triangle material names against a table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BindReport {
    pub unmatched: usize,
    pub unmatched_names: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SceneGeometry {
    pub triangles: Vec<Triangle>,
    pub materials: Vec<Material>,
    pub diffraction_edges: Vec<DiffractionEdge>,
    pub objects: Vec<SceneObject>,
    /// Bumped when objects are added or removed; transforms keep it.
    pub version: u64,
    pub min_exterior_angle: f64,
    pub edge_report: EdgeReport,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        SceneGeometry {
            triangles: Vec::new(),
            materials: Vec::new(),
            diffraction_edges: Vec::new(),
            objects: vec![SceneObject {
                name: "world".into(),
                ranges: Vec::new(),
            }],
            version: 0,
            min_exterior_angle: DEFAULT_MIN_EXTERIOR_ANGLE,
            edge_report: EdgeReport::default(),
        }
    }
}

impl SceneGeometry {
    /// Assemble a scene and extract its diffraction edges with the default threshold.
    pub fn new(
        triangles: Vec<Triangle>,
        materials: Vec<Material>,
        objects: Vec<SceneObject>,
    ) -> Self {
        let mut s = SceneGeometry {
            triangles,
            materials,
            objects,
            ..SceneGeometry::default()
        };
        s.refresh_edges(DEFAULT_MIN_EXTERIOR_ANGLE);
        s
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Re-extract diffraction edges with a new threshold.
    pub fn refresh_edges(&mut self, min_exterior_angle: f64) {
        self.min_exterior_angle = min_exterior_angle;
        let (edges, report) = extract_diffraction_edges(self, min_exterior_angle);
        self.diffraction_edges = edges;
        self.edge_report = report;
    }

    #[inline]
    pub fn material_of(&self, triangle_id: u32) -> &Material {
        &self.materials[self.triangles[triangle_id as usize].material_id as usize]
    }

    pub fn object_id(&self, name: &str) -> Option<u32> {
        self.objects
            .iter()
            .position(|o| o.name == name)
            .map(|i| i as u32)
    }

    pub fn bounds(&self) -> Aabb {
        self.triangles
            .iter()
            .fold(Aabb::empty(), |b, t| b.union(&t.bounds()))
    }

    pub fn object_bounds(&self, object_id: u32) -> Result<Aabb, SceneError> {
        let obj = self
            .objects
            .get(object_id as usize)
            .ok_or(SceneError::UnknownObject(object_id))?;
        Ok(obj.triangle_ids().fold(Aabb::empty(), |b, t| {
            b.union(&self.triangles[t as usize].bounds())
        }))
    }

    /// Resolve every material slot by name. Names missing from the table get
    /// `default` (renamed to keep the slot name) and are counted.
    pub fn bind_materials(
        &mut self,
        table: &MaterialTable,
        default: &Material,
    ) -> Result<BindReport, SceneError> {
        if table.is_empty() {
            return Err(SceneError::EmptyMaterialTable);
        }
        default.validate()?;
        let mut report = BindReport::default();
        for slot in &mut self.materials {
            match table.get(&slot.name) {
                Some(m) => *slot = m.clone(),
                None => {
                    log::warn!(
                        "material '{}' not in table, using '{}'",
                        slot.name,
                        default.name
                    );
                    report.unmatched += 1;
                    report.unmatched_names.push(slot.name.clone());
                    *slot = Material {
                        name: slot.name.clone(),
                        ..default.clone()
                    };
                }
            }
        }
        Ok(report)
    }

    /// Snapshot with one object moved by `transform`; also returns the moved triangle ids.
    pub fn apply_frame_transform(
        &self,
        object_id: u32,
        transform: &RigidTransform,
    ) -> Result<(SceneGeometry, Vec<u32>), SceneError> {
        let mut next = self.clone();
        let moved = next.transform_object(object_id, transform)?;
        Ok((next, moved))
    }

    /// In-place variant of [`apply_frame_transform`](Self::apply_frame_transform).
    pub fn transform_object(
        &mut self,
        object_id: u32,
        transform: &RigidTransform,
    ) -> Result<Vec<u32>, SceneError> {
        if !transform.is_valid(1e-9) {
            return Err(SceneError::InvalidTransform);
        }
        let obj = self
            .objects
            .get(object_id as usize)
            .ok_or(SceneError::UnknownObject(object_id))?;
        let moved: Vec<u32> = obj.triangle_ids().collect();
        if !transform.is_identity() {
            for &t in &moved {
                let tri = &mut self.triangles[t as usize];
                *tri = tri.transformed(transform);
            }
            for edge in &mut self.diffraction_edges {
                if self.triangles[edge.faces[0] as usize].object_id == object_id {
                    edge.recompute(&self.triangles);
                }
            }
        }
        Ok(moved)
    }
}
