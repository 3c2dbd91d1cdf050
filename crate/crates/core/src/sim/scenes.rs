//! Builtin testbeds and OBJ scene loading.

use std::fs::File;
use std::io::BufReader;

use super::config::{BuiltinScene, SceneClass, SceneSource};
use super::SimError;
use crate::geometry::Vec3;
use crate::scene::{
    load_obj_with, street_scene, Material, MaterialTable, ObjOptions, SceneBuilder, SceneGeometry,
    StreetParams,
};

pub const ROOM_SIZE: Vec3 = Vec3::new(10.0, 8.0, 3.0);
pub const GROUND_HALF_EXTENT: f64 = 500.0;

/// Screen across the street for NLOS runs, facade to facade and 6 m tall.
/// Signal past it has to diffract over the top edge.
pub const STREET_BLOCKER: (Vec3, Vec3) = (Vec3::new(50.0, -12.0, 0.0), Vec3::new(50.0, 12.0, 6.0));

pub fn builtin_scene(which: BuiltinScene) -> SceneGeometry {
    match which {
        BuiltinScene::Street => street_scene(&StreetParams::default()),
        BuiltinScene::StreetBlocked => street_scene(&StreetParams {
            blocker: Some(STREET_BLOCKER),
            ..StreetParams::default()
        }),
        BuiltinScene::Room => {
            let mut b = SceneBuilder::new();
            let wall = b.material(Material::wall_indoor());
            b.add_box(Vec3::ZERO, ROOM_SIZE, wall, 0);
            b.build()
        }
        BuiltinScene::Ground => {
            let mut b = SceneBuilder::new();
            let m = b.material(Material::wall_outdoor());
            let h = GROUND_HALF_EXTENT;
            b.add_ground((-h, -h), (h, h), 0.0, m);
            b.build()
        }
        BuiltinScene::Empty => SceneGeometry::empty(),
    }
}

pub fn load_scene(source: &SceneSource, class: SceneClass) -> Result<SceneGeometry, SimError> {
    let (path, materials, scale) = match source {
        SceneSource::Builtin(b) => return Ok(builtin_scene(*b)),
        SceneSource::Obj {
            path,
            materials,
            scale,
        } => (path, materials, *scale),
    };
    let file = File::open(path).map_err(|e| SimError::Scene(format!("{}: {e}", path.display())))?;
    let (mut scene, report) = load_obj_with(BufReader::new(file), &ObjOptions { scale })
        .map_err(|e| SimError::Scene(format!("{}: {e}", path.display())))?;
    log::info!(
        "{}: {} triangles ({} degenerate dropped), {} diffraction edges",
        path.display(),
        scene.triangles.len(),
        report.degenerate_dropped,
        scene.diffraction_edges.len()
    );
    let table = match materials {
        Some(m) => {
            let text = std::fs::read_to_string(m)
                .map_err(|e| SimError::Scene(format!("{}: {e}", m.display())))?;
            MaterialTable::parse(&text)
                .map_err(|e| SimError::Scene(format!("{}: {e}", m.display())))?
        }
        None => MaterialTable::reference(),
    };
    let fallback = match class {
        SceneClass::Outdoor => Material::wall_outdoor(),
        SceneClass::Indoor => Material::wall_indoor(),
    };
    let bound = scene
        .bind_materials(&table, &fallback)
        .map_err(|e| SimError::Scene(e.to_string()))?;
    if bound.unmatched > 0 {
        log::warn!(
            "{} material slot(s) fell back to '{}'",
            bound.unmatched,
            fallback.name
        );
    }
    Ok(scene)
}
