//! Backward ray tracing with image-source validation, wedge diffraction and a
//! frame-to-frame path cache.

mod cache;
mod discover;
mod frame;
mod response;
mod sampling;
mod validate;

use std::fmt;

use thiserror::Error;

use crate::bvh::BvhError;
use crate::em::{EmError, Polarization};
use crate::geometry::Vec3;
use crate::scene::SceneError;

pub use cache::{CacheStats, PathCache};
pub use discover::{
    discover_candidates, segment_distance, DirtyRegion, Discovery, RaySegment, RayTree,
    MISS_DISTANCE,
};
pub use frame::{
    backward_trace, paths_csv_header, paths_csv_rows, total_rsp, FrameInput, FrameResult,
    FrameStats, FrameTimings, Tracer, TracerOptions,
};
pub use response::compute_path_response;
pub use sampling::sample_sphere_rays;
pub use validate::{
    diffraction_chain, diffraction_point, image_validate, validate_signature, PathGeometry,
    Validation,
};

pub const MAX_REFLECTIONS_CAP: u32 = 10;
pub const MAX_TRANSMISSIONS_CAP: u32 = 10;
pub const MAX_DIFFRACTIONS_CAP: u32 = 3;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid trace configuration: {0}")]
    Config(String),
    #[error("transmitter and receiver coincide at {0}")]
    CoincidentTerminals(Vec3),
    #[error(transparent)]
    Bvh(#[from] BvhError),
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceConfig {
    pub ray_count: usize,
    pub max_reflections: u32,
    pub max_transmissions: u32,
    pub max_diffractions: u32,
    pub rng_seed: u64,
    /// Discovery rays passing this close to an edge make it a diffraction candidate.
    pub capture_radius: f64,
    pub polarization: Polarization,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            ray_count: 2000,
            max_reflections: 2,
            max_transmissions: 2,
            max_diffractions: 1,
            rng_seed: 1,
            capture_radius: 0.2,
            polarization: Polarization::Soft,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.ray_count == 0 {
            return Err(TraceError::Config("ray count must be at least 1".into()));
        }
        if self.max_reflections > MAX_REFLECTIONS_CAP {
            return Err(TraceError::Config(format!(
                "max_reflections {} exceeds cap {MAX_REFLECTIONS_CAP}",
                self.max_reflections
            )));
        }
        if self.max_transmissions > MAX_TRANSMISSIONS_CAP {
            return Err(TraceError::Config(format!(
                "max_transmissions {} exceeds cap {MAX_TRANSMISSIONS_CAP}",
                self.max_transmissions
            )));
        }
        if self.max_diffractions > MAX_DIFFRACTIONS_CAP {
            return Err(TraceError::Config(format!(
                "max_diffractions {} exceeds cap {MAX_DIFFRACTIONS_CAP}",
                self.max_diffractions
            )));
        }
        if !(self.capture_radius >= 0.0 && self.capture_radius.is_finite()) {
            return Err(TraceError::Config(
                "capture radius must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InteractionKind {
    Reflect,
    Transmit,
    Diffract,
}

impl InteractionKind {
    pub fn letter(self) -> char {
        match self {
            InteractionKind::Reflect => 'R',
            InteractionKind::Transmit => 'T',
            InteractionKind::Diffract => 'D',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction {
    pub kind: InteractionKind,
    /// Triangle id for reflect/transmit, edge id for diffract.
    pub primitive_id: u32,
    pub point: Vec3,
}

/// Interaction sequence in transmitter-to-receiver order. Empty means LOS.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathSignature(pub Vec<(InteractionKind, u32)>);

impl PathSignature {
    pub fn los() -> Self {
        PathSignature(Vec::new())
    }

    pub fn is_los(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, kind: InteractionKind) -> u32 {
        self.0.iter().filter(|(k, _)| *k == kind).count() as u32
    }

    pub fn reversed(&self) -> Self {
        PathSignature(self.0.iter().rev().copied().collect())
    }

    /// Diffractions first, then reflections/transmissions: the only shape validated.
    pub fn is_supported_shape(&self) -> bool {
        let first_non_d = self
            .0
            .iter()
            .position(|(k, _)| *k != InteractionKind::Diffract)
            .unwrap_or(self.0.len());
        self.0[first_non_d..]
            .iter()
            .all(|(k, _)| *k != InteractionKind::Diffract)
    }

    pub fn within(&self, cfg: &TraceConfig) -> bool {
        self.count(InteractionKind::Reflect) <= cfg.max_reflections
            && self.count(InteractionKind::Transmit) <= cfg.max_transmissions
            && self.count(InteractionKind::Diffract) <= cfg.max_diffractions
    }
}

impl fmt::Display for PathSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("LOS");
        }
        for (i, (k, id)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(">")?;
            }
            write!(f, "{}{id}", k.letter())?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PathSignature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "LOS" {
            return Ok(PathSignature::los());
        }
        s.split('>')
            .map(|tok| {
                let kind = match tok.chars().next() {
                    Some('R') => InteractionKind::Reflect,
                    Some('T') => InteractionKind::Transmit,
                    Some('D') => InteractionKind::Diffract,
                    _ => return Err(format!("bad interaction '{tok}'")),
                };
                let id = tok[1..]
                    .parse::<u32>()
                    .map_err(|e| format!("bad id in '{tok}': {e}"))?;
                Ok((kind, id))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(PathSignature)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationPath {
    pub signature: PathSignature,
    pub interactions: Vec<Interaction>,
    /// tx, interaction points, rx.
    pub points: Vec<Vec3>,
    pub total_length: f64,
    /// Seconds.
    pub delay: f64,
    pub loss_db: f64,
    pub phase: f64,
    /// Unit direction of travel of the last segment, into the receiver.
    pub arrival_direction: Vec3,
    /// Incoherent (diffuse) power ratio carried alongside the coherent amplitude.
    pub diffuse_power: f64,
}

impl PropagationPath {
    pub fn is_los(&self) -> bool {
        self.signature.is_los()
    }
}
