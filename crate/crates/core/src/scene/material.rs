//! EM material properties and the sidecar material table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::SceneError;

/// Electromagnetic surface properties bound to triangles by name.
#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub name: String,
    pub thickness_mm: Option<f64>,
    /// Amplitude reflection coefficient magnitude in [0, 1].
    pub reflection_coefficient: f64,
    /// Penetration loss in dB. `None` means the material is opaque.
    pub penetration_loss_db: Option<f64>,
    /// Effective-roughness scattering coefficient S in [0, 1].
    pub scattering_coefficient: f64,
}

impl Material {
    pub fn new(
        name: impl Into<String>,
        thickness_mm: Option<f64>,
        reflection_coefficient: f64,
        penetration_loss_db: Option<f64>,
        scattering_coefficient: f64,
    ) -> Result<Self, SceneError> {
        let m = Material {
            name: name.into(),
            thickness_mm,
            reflection_coefficient,
            penetration_loss_db,
            scattering_coefficient,
        };
        m.validate()?;
        Ok(m)
    }

    /// Stand-in for a name the loader has not bound yet. It absorbs everything.
    pub fn unbound(name: impl Into<String>) -> Self {
        Material {
            name: name.into(),
            thickness_mm: None,
            reflection_coefficient: 0.0,
            penetration_loss_db: None,
            scattering_coefficient: 0.0,
        }
    }

    pub fn wall_outdoor() -> Self {
        Material {
            name: "wall_outdoor".into(),
            thickness_mm: None,
            reflection_coefficient: 0.8,
            penetration_loss_db: None,
            scattering_coefficient: 0.0,
        }
    }

    pub fn wall_indoor() -> Self {
        Material {
            name: "wall_indoor".into(),
            thickness_mm: Some(10.0),
            reflection_coefficient: 0.7,
            penetration_loss_db: Some(20.0),
            scattering_coefficient: 0.0,
        }
    }

    pub fn glass_indoor() -> Self {
        Material {
            name: "glass_indoor".into(),
            thickness_mm: Some(5.0),
            reflection_coefficient: 0.74,
            penetration_loss_db: Some(5.0),
            scattering_coefficient: 0.0,
        }
    }

    pub fn is_opaque(&self) -> bool {
        self.penetration_loss_db.is_none()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |what: &str, v: f64| SceneError::InvalidMaterial {
            name: self.name.clone(),
            reason: format!("{what} = {v} out of range"),
        };
        if !(0.0..=1.0).contains(&self.reflection_coefficient) {
            return Err(bad("reflection_coefficient", self.reflection_coefficient));
        }
        if !(0.0..=1.0).contains(&self.scattering_coefficient) {
            return Err(bad("scattering_coefficient", self.scattering_coefficient));
        }
        if let Some(p) = self.penetration_loss_db {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(bad("penetration_loss_db", p));
            }
        }
        if let Some(t) = self.thickness_mm {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(bad("thickness_mm", t));
            }
        }
        Ok(())
    }
}

/// Name → material lookup, loaded from the line-oriented sidecar format
/// `name thickness_mm refl pen_db scat` with `-` marking absent fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MaterialTable {
    entries: BTreeMap<String, Material>,
}

impl MaterialTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// The three measured materials used for the outdoor and indoor test scenes.
    pub fn reference() -> Self {
        let mut t = MaterialTable::new();
        t.insert(Material::wall_outdoor());
        t.insert(Material::wall_indoor());
        t.insert(Material::glass_indoor());
        t
    }

    pub fn insert(&mut self, m: Material) {
        self.entries.insert(m.name.clone(), m);
    }

    pub fn get(&self, name: &str) -> Option<&Material> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Material> {
        self.entries.values()
    }

    pub fn parse(text: &str) -> Result<Self, SceneError> {
        let mut table = MaterialTable::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 4 || fields.len() > 5 {
                return Err(SceneError::Parse {
                    line: line_no,
                    message: format!("expected 4 or 5 fields, found {}", fields.len()),
                });
            }
            let opt = |s: &str| -> Result<Option<f64>, SceneError> {
                if s == "-" {
                    return Ok(None);
                }
                s.parse::<f64>().map(Some).map_err(|_| SceneError::Parse {
                    line: line_no,
                    message: format!("bad number '{s}'"),
                })
            };
            let refl = opt(fields[2])?.ok_or_else(|| SceneError::Parse {
                line: line_no,
                message: "reflection coefficient is required".into(),
            })?;
            let scat = match fields.get(4) {
                Some(s) => opt(s)?.unwrap_or(0.0),
                None => 0.0,
            };
            let m = Material::new(fields[0], opt(fields[1])?, refl, opt(fields[3])?, scat)
                .map_err(|e| SceneError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            table.insert(m);
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
        let mut out = String::from("# name thickness_mm refl pen_db scat\n");
        for m in self.entries.values() {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                m.name,
                fmt(m.thickness_mm),
                m.reflection_coefficient,
                fmt(m.penetration_loss_db),
                m.scattering_coefficient
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_table_values() {
        let t = MaterialTable::reference();
        let w = t.get("wall_outdoor").unwrap();
        assert_eq!(w.reflection_coefficient, 0.8);
        assert!(w.is_opaque());
        let g = t.get("glass_indoor").unwrap();
        assert_eq!(g.thickness_mm, Some(5.0));
        assert_eq!(g.reflection_coefficient, 0.74);
        assert_eq!(g.penetration_loss_db, Some(5.0));
        let wi = t.get("wall_indoor").unwrap();
        assert_eq!(
            (wi.reflection_coefficient, wi.penetration_loss_db),
            (0.7, Some(20.0))
        );
    }

    #[test]
    fn sidecar_round_trip() {
        let t = MaterialTable::reference();
        assert_eq!(MaterialTable::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn sidecar_dash_and_comments() {
        let t = MaterialTable::parse("# hdr\nconcrete - 0.6 - 0.3 # rough\n\nbrick 100 0.5 12\n")
            .unwrap();
        let c = t.get("concrete").unwrap();
        assert_eq!(c.thickness_mm, None);
        assert_eq!(c.scattering_coefficient, 0.3);
        assert_eq!(t.get("brick").unwrap().penetration_loss_db, Some(12.0));
    }

    #[test]
    fn sidecar_rejects_out_of_range() {
        let err = MaterialTable::parse("ok - 0.5 -\nbad - 1.5 -\n").unwrap_err();
        match err {
            SceneError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(MaterialTable::parse("neg - 0.5 -3").is_err());
        assert!(MaterialTable::parse("short 1 2").is_err());
    }
}
