//! Wavefront OBJ ingestion (`v`, `f`, `g`, `o`, `usemtl`, `mtllib`).

use std::collections::HashMap;
use std::io::BufRead;
use std::ops::Range;

use super::{Material, SceneError, SceneGeometry, SceneObject, Triangle, MIN_TRIANGLE_AREA};
use crate::geometry::Vec3;

#[derive(Clone, Debug)]
pub struct ObjOptions {
    /// Uniform scale applied to every vertex (OBJ files are assumed to be in meters).
    pub scale: f64,
}

impl Default for ObjOptions {
    fn default() -> Self {
        ObjOptions { scale: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadReport {
    pub vertices: usize,
    pub faces: usize,
    pub degenerate_dropped: usize,
    pub mtllibs: Vec<String>,
}

/// Parse OBJ text into a scene with unbound material slots (one per
/// `usemtl` name, falling back to the group name).
pub fn load_obj<R: BufRead>(source: R) -> Result<SceneGeometry, SceneError> {
    load_obj_with(source, &ObjOptions::default()).map(|(s, _)| s)
}

pub fn load_obj_with<R: BufRead>(
    source: R,
    options: &ObjOptions,
) -> Result<(SceneGeometry, LoadReport), SceneError> {
    let mut report = LoadReport::default();
    let mut positions: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<Triangle> = Vec::new();
    let mut materials: Vec<Material> = Vec::new();
    let mut material_ids: HashMap<String, u32> = HashMap::new();
    let mut objects = vec![SceneObject {
        name: "world".into(),
        ranges: Vec::new(),
    }];
    let mut current_object = 0u32;
    let mut object_start = 0usize;
    let mut group: Option<String> = None;
    let mut usemtl: Option<String> = None;

    let close_range = |objects: &mut Vec<SceneObject>, obj: u32, start: usize, end: usize| {
        if end > start {
            let ranges: &mut Vec<Range<usize>> = &mut objects[obj as usize].ranges;
            match ranges.last_mut() {
                Some(last) if last.end == start => last.end = end,
                _ => ranges.push(start..end),
            }
        }
    };

    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| SceneError::Parse {
                        line: line_no,
                        message: "malformed vertex".into(),
                    })?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(SceneError::Parse {
                        line: line_no,
                        message: "vertex needs three finite coordinates".into(),
                    });
                }
                positions.push(Vec3::new(coords[0], coords[1], coords[2]) * options.scale);
                report.vertices += 1;
            }
            "f" => {
                let mut poly = Vec::new();
                for tok in tokens {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str.parse().map_err(|_| SceneError::Parse {
                        line: line_no,
                        message: format!("malformed face index '{tok}'"),
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        positions.len() as i64 + idx
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= positions.len() as i64 {
                        return Err(SceneError::Index {
                            line: line_no,
                            index: idx,
                            count: positions.len(),
                        });
                    }
                    poly.push(positions[resolved as usize]);
                }
                if poly.len() < 3 {
                    return Err(SceneError::Parse {
                        line: line_no,
                        message: "face needs at least three vertices".into(),
                    });
                }
                report.faces += 1;
                let name = usemtl
                    .clone()
                    .or_else(|| group.clone())
                    .unwrap_or_else(|| "default".into());
                let mid = *material_ids.entry(name.clone()).or_insert_with(|| {
                    materials.push(Material::unbound(name));
                    (materials.len() - 1) as u32
                });
                for k in 1..poly.len() - 1 {
                    let tri = Triangle::new(poly[0], poly[k], poly[k + 1], mid, current_object);
                    if tri.area() <= MIN_TRIANGLE_AREA {
                        report.degenerate_dropped += 1;
                        continue;
                    }
                    triangles.push(tri);
                }
            }
            "o" => {
                close_range(&mut objects, current_object, object_start, triangles.len());
                object_start = triangles.len();
                let name = tokens.collect::<Vec<_>>().join(" ");
                current_object = match objects.iter().position(|o| o.name == name) {
                    Some(i) => i as u32,
                    None => {
                        objects.push(SceneObject {
                            name,
                            ranges: Vec::new(),
                        });
                        (objects.len() - 1) as u32
                    }
                };
            }
            "g" => group = Some(tokens.collect::<Vec<_>>().join(" ")),
            "usemtl" => usemtl = Some(tokens.collect::<Vec<_>>().join(" ")),
            "mtllib" => report.mtllibs.push(tokens.collect::<Vec<_>>().join(" ")),
            _ => {}
        }
    }
    close_range(&mut objects, current_object, object_start, triangles.len());
    if report.degenerate_dropped > 0 {
        log::warn!("dropped {} degenerate triangles", report.degenerate_dropped);
    }
    Ok((SceneGeometry::new(triangles, materials, objects), report))
}
