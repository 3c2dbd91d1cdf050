//! Line-oriented `key = value` run configuration with `[section]` headers.

use std::path::PathBuf;

use super::SimError;
use crate::bvh::UpdateThresholds;
use crate::em::{Polarization, RadioConfig};
use crate::geometry::Vec3;
use crate::tracer::{
    TraceConfig, MAX_DIFFRACTIONS_CAP, MAX_REFLECTIONS_CAP, MAX_TRANSMISSIONS_CAP,
};

pub const DEFAULT_TX_HEIGHT: f64 = 2.0;
pub const DEFAULT_RX_HEIGHT: f64 = 1.5;
pub const DEFAULT_FRAME_RATE: f64 = 10.0;
pub const OUTDOOR_TX_POWER_W: f64 = 5.0;
pub const INDOOR_TX_POWER_W: f64 = 0.5;
pub const INDOOR_RESOLUTION: f64 = 0.1;
pub const OUTDOOR_RESOLUTION: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Heatmap,
    Pdp,
    Route,
    Benchmark,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Heatmap => "heatmap",
            Mode::Pdp => "pdp",
            Mode::Route => "route",
            Mode::Benchmark => "benchmark",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneClass {
    Outdoor,
    Indoor,
}

/// Procedural scenes shipped with the library.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinScene {
    /// Street canyon with a vehicle, over 5000 triangles.
    Street,
    /// Same street with a wall across it at x in [40, 42].
    StreetBlocked,
    /// Closed 10 m x 8 m x 3 m room, 12 triangles.
    Room,
    /// Flat ground square, 2 triangles.
    Ground,
    Empty,
}

impl BuiltinScene {
    pub fn class(self) -> SceneClass {
        match self {
            BuiltinScene::Room => SceneClass::Indoor,
            _ => SceneClass::Outdoor,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SceneSource {
    Builtin(BuiltinScene),
    Obj {
        path: PathBuf,
        materials: Option<PathBuf>,
        scale: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub min: (f64, f64),
    pub max: (f64, f64),
    pub resolution: f64,
    pub height: f64,
}

impl GridSpec {
    pub fn dims(&self) -> (usize, usize) {
        let n = |lo: f64, hi: f64| ((hi - lo) / self.resolution + 1e-9).floor().max(0.0) as usize;
        (n(self.min.0, self.max.0), n(self.min.1, self.max.1))
    }

    /// Cell centers, row-major with x fastest.
    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec3 {
        Vec3::new(
            self.min.0 + (ix as f64 + 0.5) * self.resolution,
            self.min.1 + (iy as f64 + 0.5) * self.resolution,
            self.height,
        )
    }
}

/// Which terminal follows the route.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mover {
    Rx,
    Tx,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouteSpec {
    pub waypoints: Vec<Vec3>,
    /// m/s along the polyline.
    pub speed: f64,
    pub frame_rate: f64,
    pub frames: u64,
    pub mover: Mover,
    /// Scene object translated along with the moving terminal.
    pub carry_object: Option<String>,
    pub write_pdp: bool,
}

impl RouteSpec {
    /// Arc-length position after `frame` frames, clamped at the last waypoint.
    pub fn position(&self, frame: u64) -> Vec3 {
        let mut s = self.speed * frame as f64 / self.frame_rate;
        for w in self.waypoints.windows(2) {
            let len = w[0].distance(w[1]);
            if s <= len {
                return if len > 0.0 {
                    w[0].lerp(w[1], s / len)
                } else {
                    w[0]
                };
            }
            s -= len;
        }
        *self.waypoints.last().expect("validated non-empty")
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub mode: Mode,
    pub scene: SceneSource,
    pub class: SceneClass,
    pub radio: RadioConfig,
    pub trace: TraceConfig,
    pub thresholds: UpdateThresholds,
    pub tx: Vec3,
    pub receivers: Vec<Vec3>,
    pub grid: Option<GridSpec>,
    pub route: Option<RouteSpec>,
    /// dBm range mapped onto the heatmap hue scale.
    pub color_window: (f64, f64),
    pub output_prefix: PathBuf,
    pub workers: Option<usize>,
}

impl SimConfig {
    /// `EMTRACE_OUTPUT_PREFIX` and `EMTRACE_WORKERS` take precedence over the file.
    pub fn apply_env_overrides<F>(&mut self, lookup: F) -> Result<(), SimError>
    where
        F: Fn(&str) -> Option<String>,
    {
        if let Some(p) = lookup("EMTRACE_OUTPUT_PREFIX") {
            self.output_prefix = PathBuf::from(p);
        }
        if let Some(w) = lookup("EMTRACE_WORKERS") {
            let n: usize = w.trim().parse().map_err(|_| {
                SimError::config(None, format!("EMTRACE_WORKERS: not a count: '{w}'"))
            })?;
            if n == 0 {
                return Err(SimError::config(None, "EMTRACE_WORKERS must be >= 1"));
            }
            self.workers = Some(n);
        }
        Ok(())
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("", &["mode", "workers"]),
    ("scene", &["builtin", "path", "materials", "scale", "class"]),
    (
        "radio",
        &[
            "frequency_ghz",
            "tx_power_w",
            "ple",
            "atmospheric_db_per_km",
        ],
    ),
    (
        "trace",
        &[
            "rays",
            "max_reflections",
            "max_transmissions",
            "max_diffractions",
            "seed",
            "capture_radius",
            "polarization",
        ],
    ),
    ("tx", &["position", "height"]),
    (
        "heatmap",
        &[
            "min",
            "max",
            "resolution",
            "height",
            "color_min",
            "color_max",
        ],
    ),
    ("rx", &["position"]),
    (
        "route",
        &[
            "waypoints",
            "speed",
            "frame_rate",
            "frames",
            "mover",
            "carry_object",
            "pdp",
        ],
    ),
    ("output", &["prefix"]),
    ("bvh", &["refit_max", "subtree_max"]),
];

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

/// Collected entries; repeated keys are only allowed for `[rx] position`.
struct Raw<'a> {
    entries: Vec<(&'a str, &'a str, Entry<'a>)>,
}

impl<'a> Raw<'a> {
    fn get(&self, section: &str, key: &str) -> Option<&Entry<'a>> {
        self.entries
            .iter()
            .rev()
            .find(|(s, k, _)| *s == section && *k == key)
            .map(|(_, _, e)| e)
    }

    fn all(&self, section: &str, key: &str) -> impl Iterator<Item = &Entry<'a>> {
        let (section, key) = (section.to_string(), key.to_string());
        self.entries
            .iter()
            .filter(move |(s, k, _)| *s == section && *k == key)
            .map(|(_, _, e)| e)
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, SimError> {
        self.get(section, key).map(|e| parse_f64(e)).transpose()
    }

    fn u64(&self, section: &str, key: &str) -> Result<Option<u64>, SimError> {
        self.get(section, key)
            .map(|e| {
                e.value.parse::<u64>().map_err(|_| {
                    SimError::config(
                        Some(e.line),
                        format!("{key}: expected a non-negative integer, got '{}'", e.value),
                    )
                })
            })
            .transpose()
    }
}

fn parse_f64(e: &Entry) -> Result<f64, SimError> {
    e.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            SimError::config(
                Some(e.line),
                format!("expected a number, got '{}'", e.value),
            )
        })
}

fn parse_vec(e: &Entry, text: &str, allow_2d: Option<f64>) -> Result<Vec3, SimError> {
    let parts: Result<Vec<f64>, _> = text.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let bad = || {
        SimError::config(
            Some(e.line),
            format!("expected 'x, y, z', got '{}'", text.trim()),
        )
    };
    let parts = parts.map_err(|_| bad())?;
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    match (parts.as_slice(), allow_2d) {
        ([x, y, z], _) => Ok(Vec3::new(*x, *y, *z)),
        ([x, y], Some(h)) => Ok(Vec3::new(*x, *y, h)),
        _ => Err(bad()),
    }
}

fn parse_pair(e: &Entry) -> Result<(f64, f64), SimError> {
    let v = parse_vec(e, e.value, Some(0.0))?;
    if e.value.split(',').count() != 2 {
        return Err(SimError::config(
            Some(e.line),
            format!("expected 'x, y', got '{}'", e.value),
        ));
    }
    Ok((v.x, v.y))
}

fn parse_bool(e: &Entry) -> Result<bool, SimError> {
    match e.value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(SimError::config(
            Some(e.line),
            format!("expected true/false, got '{other}'"),
        )),
    }
}

fn tokenize(text: &str) -> Result<Raw<'_>, SimError> {
    let mut section = "";
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| {
                    SimError::config(Some(line), format!("malformed section header '{body}'"))
                })?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return Err(SimError::config(
                    Some(line),
                    format!("unknown section [{name}]"),
                ));
            }
            section = name;
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| {
            SimError::config(Some(line), format!("expected 'key = value', got '{body}'"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let known = KEYS
            .iter()
            .find(|(s, _)| *s == section)
            .is_some_and(|(_, ks)| ks.contains(&key));
        if !known {
            let at = if section.is_empty() {
                "top level".to_string()
            } else {
                format!("[{section}]")
            };
            return Err(SimError::config(
                Some(line),
                format!("unknown key '{key}' in {at}"),
            ));
        }
        if value.is_empty() {
            return Err(SimError::config(
                Some(line),
                format!("missing value for '{key}'"),
            ));
        }
        let repeated = entries
            .iter()
            .any(|(s, k, _): &(&str, &str, Entry)| *s == section && *k == key);
        if repeated && !(section == "rx" && key == "position") {
            return Err(SimError::config(
                Some(line),
                format!("duplicate key '{key}'"),
            ));
        }
        entries.push((section, key, Entry { line, value }));
    }
    Ok(Raw { entries })
}

fn capped(raw: &Raw, key: &str, default: u32, cap: u32) -> Result<u32, SimError> {
    match raw.get("trace", key) {
        None => Ok(default),
        Some(e) => {
            let v: u32 = e.value.parse().map_err(|_| {
                SimError::config(
                    Some(e.line),
                    format!("{key}: expected a non-negative integer, got '{}'", e.value),
                )
            })?;
            if v > cap {
                return Err(SimError::config(
                    Some(e.line),
                    format!("{key} = {v} exceeds the cap of {cap}"),
                ));
            }
            Ok(v)
        }
    }
}

pub fn parse_config(text: &str) -> Result<SimConfig, SimError> {
    let raw = tokenize(text)?;
    let at = |s: &str, k: &str| raw.get(s, k).map(|e| e.line);

    let mode = match raw.get("", "mode") {
        None => return Err(SimError::config(None, "missing 'mode'")),
        Some(e) => match e.value {
            "heatmap" => Mode::Heatmap,
            "pdp" => Mode::Pdp,
            "route" => Mode::Route,
            "benchmark" => Mode::Benchmark,
            other => {
                return Err(SimError::config(
                    Some(e.line),
                    format!("unknown mode '{other}'"),
                ))
            }
        },
    };
    let workers = match raw.u64("", "workers")? {
        Some(0) => return Err(SimError::config(at("", "workers"), "workers must be >= 1")),
        w => w.map(|w| w as usize),
    };

    let scene = match (raw.get("scene", "builtin"), raw.get("scene", "path")) {
        (Some(_), Some(p)) => {
            return Err(SimError::config(
                Some(p.line),
                "give either 'builtin' or 'path', not both",
            ))
        }
        (None, None) => {
            return Err(SimError::config(
                None,
                "missing scene: set [scene] builtin or path",
            ))
        }
        (Some(e), None) => SceneSource::Builtin(match e.value {
            "street" => BuiltinScene::Street,
            "street_blocked" => BuiltinScene::StreetBlocked,
            "room" => BuiltinScene::Room,
            "ground" => BuiltinScene::Ground,
            "empty" => BuiltinScene::Empty,
            other => {
                return Err(SimError::config(
                    Some(e.line),
                    format!("unknown builtin scene '{other}'"),
                ))
            }
        }),
        (None, Some(e)) => {
            let scale = raw.f64("scene", "scale")?.unwrap_or(1.0);
            if scale <= 0.0 {
                return Err(SimError::config(at("scene", "scale"), "scale must be > 0"));
            }
            SceneSource::Obj {
                path: PathBuf::from(e.value),
                materials: raw
                    .get("scene", "materials")
                    .map(|m| PathBuf::from(m.value)),
                scale,
            }
        }
    };
    if matches!(scene, SceneSource::Builtin(_)) {
        for k in ["materials", "scale"] {
            if let Some(e) = raw.get("scene", k) {
                return Err(SimError::config(
                    Some(e.line),
                    format!("'{k}' only applies to an OBJ path"),
                ));
            }
        }
    }
    let class = match raw.get("scene", "class") {
        Some(e) => match e.value {
            "outdoor" => SceneClass::Outdoor,
            "indoor" => SceneClass::Indoor,
            other => {
                return Err(SimError::config(
                    Some(e.line),
                    format!("unknown scene class '{other}'"),
                ))
            }
        },
        None => match &scene {
            SceneSource::Builtin(b) => b.class(),
            SceneSource::Obj { .. } => SceneClass::Outdoor,
        },
    };

    let default_power = match class {
        SceneClass::Outdoor => OUTDOOR_TX_POWER_W,
        SceneClass::Indoor => INDOOR_TX_POWER_W,
    };
    let radio = RadioConfig::new(
        raw.f64("radio", "frequency_ghz")?.unwrap_or(30.0),
        raw.f64("radio", "tx_power_w")?.unwrap_or(default_power),
        raw.f64("radio", "ple")?.unwrap_or(2.0),
        raw.f64("radio", "atmospheric_db_per_km")?.unwrap_or(0.0),
    )
    .map_err(|e| {
        SimError::config(
            raw.entries
                .iter()
                .find(|(s, _, _)| *s == "radio")
                .map(|(_, _, e)| e.line),
            e.to_string(),
        )
    })?;

    let defaults = TraceConfig::default();
    let rays = raw
        .u64("trace", "rays")?
        .unwrap_or(defaults.ray_count as u64);
    if rays == 0 {
        return Err(SimError::config(at("trace", "rays"), "rays must be >= 1"));
    }
    let polarization = match raw.get("trace", "polarization") {
        None => defaults.polarization,
        Some(e) => match e.value {
            "soft" => Polarization::Soft,
            "hard" => Polarization::Hard,
            other => {
                return Err(SimError::config(
                    Some(e.line),
                    format!("unknown polarization '{other}'"),
                ))
            }
        },
    };
    let trace = TraceConfig {
        ray_count: rays as usize,
        max_reflections: capped(
            &raw,
            "max_reflections",
            defaults.max_reflections,
            MAX_REFLECTIONS_CAP,
        )?,
        max_transmissions: capped(
            &raw,
            "max_transmissions",
            defaults.max_transmissions,
            MAX_TRANSMISSIONS_CAP,
        )?,
        max_diffractions: capped(
            &raw,
            "max_diffractions",
            defaults.max_diffractions,
            MAX_DIFFRACTIONS_CAP,
        )?,
        rng_seed: raw.u64("trace", "seed")?.unwrap_or(defaults.rng_seed),
        capture_radius: raw
            .f64("trace", "capture_radius")?
            .unwrap_or(defaults.capture_radius),
        polarization,
    };
    trace
        .validate()
        .map_err(|e| SimError::config(at("trace", "capture_radius"), e.to_string()))?;

    let mut thresholds = UpdateThresholds::default();
    if let Some(v) = raw.f64("bvh", "refit_max")? {
        thresholds.refit_max = v;
    }
    if let Some(v) = raw.f64("bvh", "subtree_max")? {
        thresholds.subtree_max = v;
    }
    if !(thresholds.refit_max >= 1.0 && thresholds.subtree_max >= thresholds.refit_max) {
        return Err(SimError::config(
            at("bvh", "subtree_max").or(at("bvh", "refit_max")),
            "need 1 <= refit_max <= subtree_max",
        ));
    }

    let tx_height = raw.f64("tx", "height")?.unwrap_or(DEFAULT_TX_HEIGHT);
    let tx = match raw.get("tx", "position") {
        Some(e) => parse_vec(e, e.value, Some(tx_height))?,
        None => Vec3::new(0.0, 0.0, tx_height),
    };

    let receivers = raw
        .all("rx", "position")
        .map(|e| parse_vec(e, e.value, Some(DEFAULT_RX_HEIGHT)))
        .collect::<Result<Vec<_>, _>>()?;

    let grid = match (raw.get("heatmap", "min"), raw.get("heatmap", "max")) {
        (Some(lo), Some(hi)) => {
            let default_res = match class {
                SceneClass::Indoor => INDOOR_RESOLUTION,
                SceneClass::Outdoor => OUTDOOR_RESOLUTION,
            };
            let g = GridSpec {
                min: parse_pair(lo)?,
                max: parse_pair(hi)?,
                resolution: raw.f64("heatmap", "resolution")?.unwrap_or(default_res),
                height: raw.f64("heatmap", "height")?.unwrap_or(DEFAULT_RX_HEIGHT),
            };
            if g.resolution <= 0.0 {
                return Err(SimError::config(
                    at("heatmap", "resolution"),
                    "resolution must be > 0",
                ));
            }
            let (nx, ny) = g.dims();
            if nx == 0 || ny == 0 {
                return Err(SimError::config(
                    Some(hi.line),
                    format!("empty grid ({nx} x {ny} cells)"),
                ));
            }
            Some(g)
        }
        (None, None) => None,
        (Some(e), None) | (None, Some(e)) => {
            return Err(SimError::config(
                Some(e.line),
                "heatmap needs both 'min' and 'max'",
            ))
        }
    };
    let color_window = (
        raw.f64("heatmap", "color_min")?.unwrap_or(-120.0),
        raw.f64("heatmap", "color_max")?.unwrap_or(-40.0),
    );
    if color_window.0 >= color_window.1 {
        return Err(SimError::config(
            at("heatmap", "color_max"),
            "color_min must be below color_max",
        ));
    }

    let route = match raw.get("route", "waypoints") {
        None => None,
        Some(e) => {
            let height = match raw.get("route", "mover").map(|m| m.value) {
                Some("tx") => tx_height,
                _ => DEFAULT_RX_HEIGHT,
            };
            let waypoints = e
                .value
                .split(';')
                .map(|w| parse_vec(e, w, Some(height)))
                .collect::<Result<Vec<_>, _>>()?;
            let speed = raw.f64("route", "speed")?.unwrap_or(0.0);
            if speed < 0.0 {
                return Err(SimError::config(at("route", "speed"), "speed must be >= 0"));
            }
            let frame_rate = raw
                .f64("route", "frame_rate")?
                .unwrap_or(DEFAULT_FRAME_RATE);
            if frame_rate <= 0.0 {
                return Err(SimError::config(
                    at("route", "frame_rate"),
                    "frame_rate must be > 0",
                ));
            }
            let mover = match raw.get("route", "mover") {
                None => Mover::Rx,
                Some(m) => match m.value {
                    "rx" => Mover::Rx,
                    "tx" => Mover::Tx,
                    other => {
                        return Err(SimError::config(
                            Some(m.line),
                            format!("unknown mover '{other}'"),
                        ))
                    }
                },
            };
            let mut spec = RouteSpec {
                waypoints,
                speed,
                frame_rate,
                frames: 1,
                mover,
                carry_object: raw
                    .get("route", "carry_object")
                    .map(|c| c.value.to_string()),
                write_pdp: raw
                    .get("route", "pdp")
                    .map(parse_bool)
                    .transpose()?
                    .unwrap_or(false),
            };
            spec.frames = match raw.u64("route", "frames")? {
                Some(n) => n,
                None if speed > 0.0 => (spec.length() / speed * frame_rate).floor() as u64 + 1,
                None => 1,
            };
            if spec.frames == 0 {
                return Err(SimError::config(
                    at("route", "frames"),
                    "frames must be >= 1",
                ));
            }
            Some(spec)
        }
    };
    if route.is_none() {
        if let Some((_, k, e)) = raw.entries.iter().find(|(s, _, _)| *s == "route") {
            return Err(SimError::config(
                Some(e.line),
                format!("'{k}' given without route waypoints"),
            ));
        }
    }

    match mode {
        Mode::Heatmap if grid.is_none() => {
            return Err(SimError::config(
                None,
                "heatmap mode needs [heatmap] min and max",
            ))
        }
        Mode::Pdp if receivers.is_empty() => {
            return Err(SimError::config(
                None,
                "pdp mode needs at least one [rx] position",
            ))
        }
        Mode::Route | Mode::Benchmark => {
            let Some(r) = &route else {
                return Err(SimError::config(
                    None,
                    format!("{} mode needs [route] waypoints", mode.name()),
                ));
            };
            if r.mover == Mover::Tx && receivers.is_empty() {
                return Err(SimError::config(
                    at("route", "mover"),
                    "a moving tx needs at least one [rx] position",
                ));
            }
        }
        _ => {}
    }

    let output_prefix = PathBuf::from(raw.get("output", "prefix").map_or("emtrace", |e| e.value));

    Ok(SimConfig {
        mode,
        scene,
        class,
        radio,
        trace,
        thresholds,
        tx,
        receivers,
        grid,
        route,
        color_window,
        output_prefix,
        workers,
    })
}
