//! Persistent per-receiver path cache keyed by signature, one table per depth.

use std::collections::HashMap;

use rayon::prelude::*;

use super::discover::DirtyRegion;
use super::validate::{validate_signature, Validation};
use super::{InteractionKind, PathSignature, PropagationPath};
use crate::bvh::Bvh;
use crate::geometry::Vec3;
use crate::scene::SceneGeometry;

/// Records invalid for this many consecutive frames are dropped.
pub const EVICT_AFTER_INVALID_FRAMES: u32 = 3;

#[derive(Clone, Debug)]
pub struct CacheRecord {
    pub validation: Validation,
    pub path: Option<PropagationPath>,
    pub tx: Vec3,
    pub rx: Vec3,
    pub version: u64,
    pub last_valid_frame: Option<u64>,
    pub invalid_streak: u32,
}

impl CacheRecord {
    pub fn is_valid(&self) -> bool {
        self.path.is_some()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    /// Returned paths whose signature was already cached at frame start.
    pub hits: u64,
    /// Returned paths validated for the first time.
    pub misses: u64,
    /// Discovered candidates (valid or not) already cached.
    pub candidate_hits: u64,
    pub candidate_misses: u64,
    /// Records whose outcome was recomputed at frame start.
    pub revalidated: u64,
    /// Records carried over unchanged at frame start.
    pub reused: u64,
    /// Records that went from valid to invalid.
    pub invalidations: u64,
    pub evictions: u64,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// Signature → last validation outcome, split by depth.
#[derive(Clone, Debug, Default)]
pub struct PathCache {
    tables: Vec<HashMap<PathSignature, CacheRecord>>,
}

impl PathCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.tables.clear();
    }

    pub fn get(&self, sig: &PathSignature) -> Option<&CacheRecord> {
        self.tables.get(sig.len()).and_then(|t| t.get(sig))
    }

    pub fn contains(&self, sig: &PathSignature) -> bool {
        self.get(sig).is_some()
    }

    pub fn insert(&mut self, sig: PathSignature, record: CacheRecord) {
        let depth = sig.len();
        if self.tables.len() <= depth {
            self.tables.resize_with(depth + 1, HashMap::new);
        }
        self.tables[depth].insert(sig, record);
    }

    pub fn signatures(&self) -> Vec<PathSignature> {
        let mut v: Vec<PathSignature> =
            self.tables.iter().flat_map(|t| t.keys().cloned()).collect();
        v.sort();
        v
    }

    /// True when `record` is still exactly what validating now would produce.
    fn still_exact(
        record: &CacheRecord,
        sig: &PathSignature,
        tx: Vec3,
        rx: Vec3,
        version: u64,
        dirty: &DirtyRegion,
    ) -> bool {
        if record.version != version || record.tx != tx || record.rx != rx {
            return false;
        }
        if dirty.is_clean() {
            return true;
        }
        let moved = sig.0.iter().any(|&(kind, id)| match kind {
            InteractionKind::Diffract => {
                dirty.moved_edges.get(id as usize).copied().unwrap_or(true)
            }
            _ => dirty
                .moved_triangles
                .get(id as usize)
                .copied()
                .unwrap_or(true),
        });
        !moved
            && !record
                .validation
                .checked_segments
                .iter()
                .any(|&(a, b)| dirty.touches_segment(a, b))
    }

    /// Frame-start pass: every record is either carried over (when provably
    /// unchanged) or revalidated against current geometry; records invalid
    /// for too long are evicted.
    #[allow(clippy::too_many_arguments)]
    pub fn validate_cached_paths<F>(
        &mut self,
        scene: &SceneGeometry,
        bvh: &Bvh,
        tx: Vec3,
        rx: Vec3,
        dirty: &DirtyRegion,
        frame: u64,
        respond: F,
    ) -> CacheStats
    where
        F: Fn(&Validation) -> Option<PropagationPath> + Sync,
    {
        let mut stats = CacheStats::default();
        let mut stale: Vec<PathSignature> = Vec::new();
        for table in &self.tables {
            for (sig, rec) in table {
                if !Self::still_exact(rec, sig, tx, rx, scene.version, dirty) {
                    stale.push(sig.clone());
                }
            }
        }
        stale.sort();
        stats.reused = (self.len() - stale.len()) as u64;
        stats.revalidated = stale.len() as u64;
        let fresh: Vec<(Validation, Option<PropagationPath>)> = stale
            .par_iter()
            .map(|sig| {
                let v = validate_signature(sig, tx, rx, scene, bvh);
                let p = respond(&v);
                (v, p)
            })
            .collect();
        for (sig, (validation, path)) in stale.into_iter().zip(fresh) {
            let rec = self.tables[sig.len()]
                .get_mut(&sig)
                .expect("stale key present");
            if rec.is_valid() && path.is_none() {
                stats.invalidations += 1;
            }
            rec.validation = validation;
            rec.path = path;
            rec.tx = tx;
            rec.rx = rx;
            rec.version = scene.version;
        }
        for table in &mut self.tables {
            table.retain(|_, rec| {
                if rec.is_valid() {
                    rec.invalid_streak = 0;
                    rec.last_valid_frame = Some(frame);
                    true
                } else {
                    rec.invalid_streak += 1;
                    if rec.invalid_streak >= EVICT_AFTER_INVALID_FRAMES {
                        stats.evictions += 1;
                        false
                    } else {
                        true
                    }
                }
            });
        }
        stats
    }
}
