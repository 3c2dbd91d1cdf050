//! Frame coordinator: scene motion, hierarchy maintenance, discovery,
//! validation and response per receiver.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use super::cache::{CacheRecord, CacheStats, PathCache};
use super::discover::{discover_candidates, edge_bounds, DirtyRegion, Discovery};
use super::response::compute_path_response;
use super::validate::{validate_signature, Validation};
use super::{PathSignature, PropagationPath, TraceConfig, TraceError};
use crate::bvh::{Bvh, UpdateAction, UpdateThresholds};
use crate::em::{received_power_dbm, RadioConfig};
use crate::geometry::{RigidTransform, Vec3};
use crate::scene::SceneGeometry;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracerOptions {
    pub trace: TraceConfig,
    pub radio: RadioConfig,
    /// Keep ray trees and validated paths across frames and refit the
    /// hierarchy. Off means every frame starts cold with a fresh build.
    pub cache_enabled: bool,
    pub thresholds: UpdateThresholds,
}

impl Default for TracerOptions {
    fn default() -> Self {
        TracerOptions {
            trace: TraceConfig::default(),
            radio: RadioConfig::default(),
            cache_enabled: true,
            thresholds: UpdateThresholds::default(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FrameInput {
    pub tx: Vec3,
    pub receivers: Vec<Vec3>,
    /// Rigid motion applied to objects at the start of this frame (deltas).
    pub transforms: Vec<(u32, RigidTransform)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameTimings {
    pub bvh_s: f64,
    pub trace_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameStats {
    pub segments_cast: u64,
    pub trees_cast: u64,
    pub trees_reused: u64,
    pub candidates: u64,
    pub cache: CacheStats,
    pub bvh_action: UpdateAction,
    pub bvh_degradation: f64,
}

impl Default for FrameStats {
    fn default() -> Self {
        FrameStats {
            segments_cast: 0,
            trees_cast: 0,
            trees_reused: 0,
            candidates: 0,
            cache: CacheStats::default(),
            bvh_action: UpdateAction::Keep,
            bvh_degradation: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FrameResult {
    pub frame: u64,
    pub tx: Vec3,
    pub receivers: Vec<Vec3>,
    /// Per receiver, ordered by signature.
    pub paths: Vec<Vec<PropagationPath>>,
    pub rsp_dbm: Vec<f64>,
    pub timings: FrameTimings,
    pub stats: FrameStats,
}

#[derive(Default)]
struct RxState {
    discovery: Discovery,
    cache: PathCache,
}

/// Multi-frame tracer over a dynamic scene.
pub struct Tracer {
    scene: SceneGeometry,
    bvh: Bvh,
    edge_bvh: Bvh,
    options: TracerOptions,
    receivers: Vec<RxState>,
    frame: u64,
}

struct RxOutcome {
    paths: Vec<PropagationPath>,
    rsp: f64,
    segments_cast: u64,
    trees_cast: u64,
    trees_reused: u64,
    candidates: u64,
    cache: CacheStats,
}

impl Tracer {
    pub fn new(scene: SceneGeometry, options: TracerOptions) -> Result<Self, TraceError> {
        options.trace.validate()?;
        let bvh = Bvh::build(&scene.triangles);
        let edge_bvh = Bvh::build_from_bounds(&edge_bounds(&scene, options.trace.capture_radius));
        Ok(Tracer {
            scene,
            bvh,
            edge_bvh,
            options,
            receivers: Vec::new(),
            frame: 0,
        })
    }

    pub fn scene(&self) -> &SceneGeometry {
        &self.scene
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn options(&self) -> &TracerOptions {
        &self.options
    }

    pub fn cache_len(&self, rx_index: usize) -> usize {
        self.receivers.get(rx_index).map_or(0, |r| r.cache.len())
    }

    fn apply_motion(
        &mut self,
        transforms: &[(u32, RigidTransform)],
    ) -> Result<DirtyRegion, TraceError> {
        let mut dirty = DirtyRegion {
            boxes: Vec::new(),
            moved_triangles: vec![false; self.scene.triangles.len()],
            moved_edges: vec![false; self.scene.diffraction_edges.len()],
        };
        let pad = self.options.trace.capture_radius + 1e-6;
        for (obj, t) in transforms {
            if t.is_identity() {
                continue;
            }
            let before = self.scene.object_bounds(*obj)?;
            let moved = self.scene.transform_object(*obj, t)?;
            let after = self.scene.object_bounds(*obj)?;
            if moved.is_empty() {
                continue;
            }
            dirty.boxes.push(before.union(&after).inflated(pad));
            for id in moved {
                dirty.moved_triangles[id as usize] = true;
            }
        }
        for (i, e) in self.scene.diffraction_edges.iter().enumerate() {
            if dirty.moved_triangles[e.faces[0] as usize] {
                dirty.moved_edges[i] = true;
            }
        }
        Ok(dirty)
    }

    fn maintain_hierarchies(&mut self, dirty: &DirtyRegion) -> Result<UpdateAction, TraceError> {
        let moved: Vec<u32> = (0..dirty.moved_triangles.len() as u32)
            .filter(|&i| dirty.moved_triangles[i as usize])
            .collect();
        let moved_edges: Vec<u32> = (0..dirty.moved_edges.len() as u32)
            .filter(|&i| dirty.moved_edges[i as usize])
            .collect();
        if !self.options.cache_enabled {
            self.bvh = Bvh::build(&self.scene.triangles);
            self.edge_bvh = Bvh::build_from_bounds(&edge_bounds(
                &self.scene,
                self.options.trace.capture_radius,
            ));
            return Ok(if moved.is_empty() {
                UpdateAction::Keep
            } else {
                UpdateAction::RebuildFull
            });
        }
        let action = self
            .bvh
            .maintain(&self.scene.triangles, &moved, &self.options.thresholds)?;
        if !moved_edges.is_empty() {
            let bounds = edge_bounds(&self.scene, self.options.trace.capture_radius);
            self.edge_bvh.refit_bounds(&bounds, &moved_edges)?;
            if self.edge_bvh.degradation() > self.options.thresholds.subtree_max {
                self.edge_bvh = Bvh::build_from_bounds(&bounds);
            }
        }
        Ok(action)
    }

    /// Advance one frame.
    pub fn step(&mut self, input: &FrameInput) -> Result<FrameResult, TraceError> {
        for &rx in &input.receivers {
            if rx.distance(input.tx) < 1e-9 {
                return Err(TraceError::CoincidentTerminals(rx));
            }
        }
        let start = Instant::now();
        let dirty = self.apply_motion(&input.transforms)?;
        let action = self.maintain_hierarchies(&dirty)?;
        let bvh_s = start.elapsed().as_secs_f64();

        let cache_on = self.options.cache_enabled;
        if !cache_on || self.receivers.len() != input.receivers.len() {
            self.receivers.clear();
            self.receivers
                .resize_with(input.receivers.len(), RxState::default);
        }
        let frame = self.frame;
        let scene = &self.scene;
        let bvh = &self.bvh;
        let edge_bvh = &self.edge_bvh;
        let options = &self.options;
        let tx = input.tx;
        let trace_start = Instant::now();
        let outcomes: Vec<RxOutcome> = self
            .receivers
            .par_iter_mut()
            .zip(input.receivers.par_iter())
            .map(|(state, &rx)| {
                trace_receiver(
                    scene, bvh, edge_bvh, options, state, tx, rx, &dirty, frame, cache_on,
                )
            })
            .collect::<Result<_, _>>()?;
        let trace_s = trace_start.elapsed().as_secs_f64();

        let mut stats = FrameStats {
            bvh_action: action,
            bvh_degradation: self.bvh.degradation(),
            ..FrameStats::default()
        };
        let mut paths = Vec::with_capacity(outcomes.len());
        let mut rsp = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            stats.segments_cast += o.segments_cast;
            stats.trees_cast += o.trees_cast;
            stats.trees_reused += o.trees_reused;
            stats.candidates += o.candidates;
            stats.cache.hits += o.cache.hits;
            stats.cache.misses += o.cache.misses;
            stats.cache.candidate_hits += o.cache.candidate_hits;
            stats.cache.candidate_misses += o.cache.candidate_misses;
            stats.cache.revalidated += o.cache.revalidated;
            stats.cache.reused += o.cache.reused;
            stats.cache.invalidations += o.cache.invalidations;
            stats.cache.evictions += o.cache.evictions;
            paths.push(o.paths);
            rsp.push(o.rsp);
        }
        if !cache_on {
            self.receivers.clear();
        }
        self.frame += 1;
        Ok(FrameResult {
            frame,
            tx,
            receivers: input.receivers.clone(),
            paths,
            rsp_dbm: rsp,
            timings: FrameTimings {
                bvh_s,
                trace_s,
                total_s: start.elapsed().as_secs_f64(),
            },
            stats,
        })
    }
}

fn respond(
    v: &Validation,
    scene: &SceneGeometry,
    options: &TracerOptions,
) -> Result<Option<PropagationPath>, TraceError> {
    match &v.geometry {
        Some(g) => {
            compute_path_response(g, scene, &options.radio, options.trace.polarization).map(Some)
        }
        None => Ok(None),
    }
}

#[allow(clippy::too_many_arguments)]
fn trace_receiver(
    scene: &SceneGeometry,
    bvh: &Bvh,
    edge_bvh: &Bvh,
    options: &TracerOptions,
    state: &mut RxState,
    tx: Vec3,
    rx: Vec3,
    dirty: &DirtyRegion,
    frame: u64,
    cache_on: bool,
) -> Result<RxOutcome, TraceError> {
    let cfg = &options.trace;
    let mut cache_stats = CacheStats::default();
    if cache_on {
        cache_stats = state
            .cache
            .validate_cached_paths(scene, bvh, tx, rx, dirty, frame, |v| {
                respond(v, scene, options).ok().flatten()
            });
    }
    let previous = if cache_on && state.discovery.rx.is_some() {
        Some((&state.discovery, dirty))
    } else {
        None
    };
    let discovery = discover_candidates(scene, bvh, edge_bvh, rx, cfg, previous);
    let candidates: BTreeSet<PathSignature> = discovery
        .candidates()
        .into_iter()
        .filter(|s| s.within(cfg) && s.is_supported_shape())
        .collect();

    let (known, unknown): (Vec<&PathSignature>, Vec<&PathSignature>) = if cache_on {
        candidates.iter().partition(|s| state.cache.contains(s))
    } else {
        (Vec::new(), candidates.iter().collect())
    };
    cache_stats.candidate_hits = known.len() as u64;
    cache_stats.candidate_misses = unknown.len() as u64;

    let fresh: Vec<(Validation, Option<PropagationPath>)> = unknown
        .par_iter()
        .map(|sig| {
            let v = validate_signature(sig, tx, rx, scene, bvh);
            let p = respond(&v, scene, options)?;
            Ok((v, p))
        })
        .collect::<Result<_, TraceError>>()?;

    let mut paths: Vec<PropagationPath> = Vec::new();
    for sig in &known {
        if let Some(p) = state.cache.get(sig).and_then(|r| r.path.clone()) {
            paths.push(p);
            cache_stats.hits += 1;
        }
    }
    for (sig, (validation, path)) in unknown.iter().zip(fresh) {
        if let Some(p) = &path {
            paths.push(p.clone());
            cache_stats.misses += 1;
        }
        if cache_on {
            let valid = path.is_some();
            state.cache.insert(
                (*sig).clone(),
                CacheRecord {
                    validation,
                    path,
                    tx,
                    rx,
                    version: scene.version,
                    last_valid_frame: valid.then_some(frame),
                    invalid_streak: u32::from(!valid),
                },
            );
        }
    }
    paths.sort_by(|a, b| a.signature.cmp(&b.signature));

    let rsp = total_rsp(&paths, &options.radio);
    let outcome = RxOutcome {
        paths,
        rsp,
        segments_cast: discovery.segments_cast,
        trees_cast: discovery.trees_cast,
        trees_reused: discovery.trees_reused,
        candidates: candidates.len() as u64,
        cache: cache_stats,
    };
    if cache_on {
        state.discovery = discovery;
    }
    Ok(outcome)
}

/// Coherent field of all paths plus their diffuse power, in dBm.
pub fn total_rsp(paths: &[PropagationPath], radio: &RadioConfig) -> f64 {
    let mut field = Complex64::new(0.0, 0.0);
    let mut diffuse = 0.0;
    for p in paths {
        if p.loss_db.is_finite() {
            field += Complex64::from_polar(10f64.powf(-p.loss_db / 20.0), p.phase);
        }
        diffuse += p.diffuse_power;
    }
    received_power_dbm(field, diffuse, radio)
}

/// One cold trace between a transmitter and a receiver.
pub fn backward_trace(
    scene: &SceneGeometry,
    bvh: &Bvh,
    tx: Vec3,
    rx: Vec3,
    cfg: &TraceConfig,
    radio: &RadioConfig,
) -> Result<Vec<PropagationPath>, TraceError> {
    cfg.validate()?;
    if tx.distance(rx) < 1e-9 {
        return Err(TraceError::CoincidentTerminals(rx));
    }
    let edge_bvh = Bvh::build_from_bounds(&edge_bounds(scene, cfg.capture_radius));
    let options = TracerOptions {
        trace: *cfg,
        radio: *radio,
        cache_enabled: false,
        thresholds: UpdateThresholds::default(),
    };
    let mut state = RxState::default();
    let out = trace_receiver(
        scene,
        bvh,
        &edge_bvh,
        &options,
        &mut state,
        tx,
        rx,
        &DirtyRegion::default(),
        0,
        false,
    )?;
    Ok(out.paths)
}

pub fn paths_csv_header() -> &'static str {
    "frame,rx_id,signature,length_m,delay_ns,loss_db,phase_rad,aoa_x,aoa_y,aoa_z\n"
}

/// Path dump rows for one frame.
pub fn paths_csv_rows(result: &FrameResult) -> String {
    let mut s = String::new();
    for (rx_id, paths) in result.paths.iter().enumerate() {
        for p in paths {
            let _ = writeln!(
                s,
                "{},{},{},{:.9},{:.6},{:.6},{:.6},{:.9},{:.9},{:.9}",
                result.frame,
                rx_id,
                p.signature,
                p.total_length,
                p.delay * 1e9,
                p.loss_db,
                p.phase,
                p.arrival_direction.x,
                p.arrival_direction.y,
                p.arrival_direction.z
            );
        }
    }
    s
}
