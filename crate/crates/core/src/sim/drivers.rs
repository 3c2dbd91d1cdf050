//! Heatmap, PDP, route and benchmark drivers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use super::config::{Mode, Mover, SimConfig};
use super::output::Heatmap;
use super::scenes::load_scene;
use super::SimError;
use crate::em::{received_power_dbm, RadioConfig, NO_SIGNAL_DBM};
use crate::geometry::{RigidTransform, Vec3};
use crate::scene::SceneGeometry;
use crate::tracer::{
    paths_csv_header, paths_csv_rows, FrameInput, FrameResult, PropagationPath, Tracer,
    TracerOptions,
};

fn options(cfg: &SimConfig, cache_enabled: bool) -> TracerOptions {
    TracerOptions {
        trace: cfg.trace,
        radio: cfg.radio,
        cache_enabled,
        thresholds: cfg.thresholds,
    }
}

/// Received power of one path on its own, dBm.
pub fn path_power_dbm(p: &PropagationPath, radio: &RadioConfig) -> f64 {
    let amp = if p.loss_db.is_finite() {
        10f64.powf(-p.loss_db / 20.0)
    } else {
        0.0
    };
    received_power_dbm(Complex64::new(amp, 0.0), p.diffuse_power, radio)
}

pub fn run_heatmap(cfg: &SimConfig, scene: SceneGeometry) -> Result<Heatmap, SimError> {
    let grid = cfg
        .grid
        .ok_or_else(|| SimError::config(None, "heatmap mode needs a grid"))?;
    let (nx, ny) = grid.dims();
    if nx == 0 || ny == 0 {
        return Err(SimError::config(None, "empty heatmap grid"));
    }
    let cells: Vec<Vec3> = (0..ny)
        .flat_map(|iy| (0..nx).map(move |ix| grid.cell_center(ix, iy)))
        .collect();
    // A cell sitting on the transmitter has no defined RSP.
    let traced: Vec<usize> = (0..cells.len())
        .filter(|&i| cells[i].distance(cfg.tx) >= 1e-9)
        .collect();
    if traced.len() < cells.len() {
        log::warn!("heatmap cell on the transmitter left without signal");
    }
    let mut tracer = Tracer::new(scene, options(cfg, false))?;
    let result = tracer.step(&FrameInput {
        tx: cfg.tx,
        receivers: traced.iter().map(|&i| cells[i]).collect(),
        transforms: Vec::new(),
    })?;
    let mut values = vec![NO_SIGNAL_DBM; cells.len()];
    for (k, &i) in traced.iter().enumerate() {
        values[i] = result.rsp_dbm[k];
    }
    Ok(Heatmap {
        origin: grid.min,
        resolution: grid.resolution,
        nx,
        ny,
        values,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdpRow {
    pub frame: u64,
    pub rx_id: usize,
    pub delay_ns: f64,
    pub power_dbm: f64,
    pub signature: String,
    pub los: bool,
}

fn pdp_rows(result: &FrameResult, radio: &RadioConfig) -> Vec<PdpRow> {
    let mut rows = Vec::new();
    for (rx_id, paths) in result.paths.iter().enumerate() {
        let mut sorted: Vec<&PropagationPath> = paths.iter().collect();
        sorted.sort_by(|a, b| {
            a.delay
                .total_cmp(&b.delay)
                .then_with(|| a.signature.cmp(&b.signature))
        });
        rows.extend(sorted.into_iter().map(|p| PdpRow {
            frame: result.frame,
            rx_id,
            delay_ns: p.delay * 1e9,
            power_dbm: path_power_dbm(p, radio),
            signature: p.signature.to_string(),
            los: p.is_los(),
        }));
    }
    rows
}

pub fn pdp_csv(rows: &[PdpRow]) -> String {
    let mut s = String::from("frame,rx_id,delay_ns,power_dbm,signature,los\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{},{}",
            r.frame,
            r.rx_id,
            r.delay_ns,
            r.power_dbm,
            r.signature,
            u8::from(r.los)
        );
    }
    s
}

/// One frame, every receiver, paths ordered by delay.
pub fn run_pdp(cfg: &SimConfig, scene: SceneGeometry) -> Result<Vec<PdpRow>, SimError> {
    if cfg.receivers.is_empty() {
        return Err(SimError::config(
            None,
            "pdp mode needs at least one receiver",
        ));
    }
    let mut tracer = Tracer::new(scene, options(cfg, false))?;
    let result = tracer.step(&FrameInput {
        tx: cfg.tx,
        receivers: cfg.receivers.clone(),
        transforms: Vec::new(),
    })?;
    Ok(pdp_rows(&result, &cfg.radio))
}

/// Frame inputs for the configured route: the moving terminal follows the
/// waypoints and the carried object, if any, is shifted by the same step.
fn route_inputs(cfg: &SimConfig, scene: &SceneGeometry) -> Result<Vec<FrameInput>, SimError> {
    let route = cfg
        .route
        .as_ref()
        .ok_or_else(|| SimError::config(None, "route waypoints missing"))?;
    let carried =
        match &route.carry_object {
            None => None,
            Some(name) => Some(scene.object_id(name).ok_or_else(|| {
                SimError::Scene(format!("route carries unknown object '{name}'"))
            })?),
        };
    let mut inputs = Vec::with_capacity(route.frames as usize);
    for f in 0..route.frames {
        let pos = route.position(f);
        let (tx, receivers) = match route.mover {
            Mover::Rx => (cfg.tx, vec![pos]),
            Mover::Tx => (pos, cfg.receivers.clone()),
        };
        let mut transforms = Vec::new();
        if let (Some(obj), true) = (carried, f > 0) {
            let step = pos - route.position(f - 1);
            transforms.push((obj, RigidTransform::translation(step)));
        }
        inputs.push(FrameInput {
            tx,
            receivers,
            transforms,
        });
    }
    Ok(inputs)
}

#[derive(Clone, Debug)]
pub struct RouteRun {
    pub frames: Vec<FrameResult>,
    pub frame_rate: f64,
}

pub fn run_route(
    cfg: &SimConfig,
    scene: SceneGeometry,
    cache_enabled: bool,
) -> Result<RouteRun, SimError> {
    let inputs = route_inputs(cfg, &scene)?;
    let frame_rate = cfg.route.as_ref().map_or(1.0, |r| r.frame_rate);
    let mut tracer = Tracer::new(scene, options(cfg, cache_enabled))?;
    let frames = inputs
        .iter()
        .map(|input| tracer.step(input))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RouteRun { frames, frame_rate })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// One row per frame and receiver with RSP, the direct path (if any) and
/// cache statistics for the frame.
pub fn route_csv(run: &RouteRun, radio: &RadioConfig) -> String {
    let mut s = String::from(
        "frame,time_s,rx_id,tx_x,tx_y,tx_z,rx_x,rx_y,rx_z,rsp_dbm,paths,\
         los_delay_ns,los_power_dbm,hit_rate,candidates,trees_cast,segments_cast\n",
    );
    for r in &run.frames {
        for (i, (paths, rx)) in r.paths.iter().zip(&r.receivers).enumerate() {
            let los = paths.iter().find(|p| p.is_los());
            let _ = writeln!(
                s,
                "{},{:.4},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.6},{},{},{},{:.4},{},{},{}",
                r.frame,
                r.frame as f64 / run.frame_rate,
                i,
                r.tx.x,
                r.tx.y,
                r.tx.z,
                rx.x,
                rx.y,
                rx.z,
                r.rsp_dbm[i],
                paths.len(),
                opt(los.map(|p| p.delay * 1e9)),
                opt(los.map(|p| path_power_dbm(p, radio))),
                r.stats.cache.hit_rate(),
                r.stats.candidates,
                r.stats.trees_cast,
                r.stats.segments_cast
            );
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkFrame {
    pub frame: u64,
    /// Wall-clock of the tracing phase, s. Hierarchy upkeep is not included.
    pub time_on: f64,
    pub time_off: f64,
    pub hit_rate: f64,
    pub trees_on: u64,
    pub trees_off: u64,
    pub segments_on: u64,
    pub segments_off: u64,
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub frames: Vec<BenchmarkFrame>,
    pub workers: usize,
    pub triangles: usize,
    /// Deterministic per-frame results of the (identical) runs.
    pub results_csv: String,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl BenchmarkReport {
    pub fn mean_time_on(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.time_on))
    }

    pub fn mean_time_off(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.time_off))
    }

    /// (t_off − t_on) / t_off.
    pub fn speedup(&self) -> f64 {
        let off = self.mean_time_off();
        if off > 0.0 {
            (off - self.mean_time_on()) / off
        } else {
            0.0
        }
    }

    /// Mean cache hit rate over every frame after the first.
    pub fn mean_hit_rate(&self) -> f64 {
        mean(self.frames.iter().skip(1).map(|f| f.hit_rate))
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from(
            "frame,time_on_s,time_off_s,hit_rate,trees_on,trees_off,segments_on,segments_off\n",
        );
        for f in &self.frames {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.4},{},{},{},{}",
                f.frame,
                f.time_on,
                f.time_off,
                f.hit_rate,
                f.trees_on,
                f.trees_off,
                f.segments_on,
                f.segments_off
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        let rows = [
            ("frames", self.frames.len().to_string()),
            ("workers", self.workers.to_string()),
            ("triangles", self.triangles.to_string()),
            ("results_equal", "true".to_string()),
            ("mean_time_on_s", format!("{:.6}", self.mean_time_on())),
            ("mean_time_off_s", format!("{:.6}", self.mean_time_off())),
            ("speedup_percent", format!("{:.1}", 100.0 * self.speedup())),
            ("mean_hit_rate", format!("{:.4}", self.mean_hit_rate())),
            (
                "mean_segments_on",
                format!(
                    "{:.1}",
                    mean(self.frames.iter().map(|f| f.segments_on as f64))
                ),
            ),
            (
                "mean_segments_off",
                format!(
                    "{:.1}",
                    mean(self.frames.iter().map(|f| f.segments_off as f64))
                ),
            ),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }
}

fn results_row(s: &mut String, r: &FrameResult) {
    for (i, paths) in r.paths.iter().enumerate() {
        let _ = writeln!(s, "{},{},{:.9},{}", r.frame, i, r.rsp_dbm[i], paths.len());
    }
}

/// Runs the route with caching on and cold side by side, frame by frame.
/// Any difference in paths or RSP is a consistency failure and no timing is
/// reported.
pub fn run_benchmark(cfg: &SimConfig, scene: SceneGeometry) -> Result<BenchmarkReport, SimError> {
    let inputs = route_inputs(cfg, &scene)?;
    let triangles = scene.triangles.len();
    let mut on = Tracer::new(scene.clone(), options(cfg, true))?;
    let mut off = Tracer::new(scene, options(cfg, false))?;
    let mut frames = Vec::with_capacity(inputs.len());
    let mut results_csv = String::from("frame,rx_id,rsp_dbm,paths\n");
    for input in &inputs {
        let a = on.step(input)?;
        let b = off.step(input)?;
        let (rows_a, rows_b) = (paths_csv_rows(&a), paths_csv_rows(&b));
        let same_rsp = a
            .rsp_dbm
            .iter()
            .zip(&b.rsp_dbm)
            .all(|(x, y)| x.to_bits() == y.to_bits());
        if rows_a != rows_b || !same_rsp {
            return Err(SimError::Consistency(format!(
                "frame {}: cached and cold results differ\ncached:\n{rows_a}cold:\n{rows_b}",
                a.frame
            )));
        }
        results_row(&mut results_csv, &a);
        frames.push(BenchmarkFrame {
            frame: a.frame,
            time_on: a.timings.trace_s,
            time_off: b.timings.trace_s,
            hit_rate: a.stats.cache.hit_rate(),
            trees_on: a.stats.trees_cast,
            trees_off: b.stats.trees_cast,
            segments_on: a.stats.segments_cast,
            segments_off: b.stats.segments_cast,
        });
    }
    Ok(BenchmarkReport {
        frames,
        workers: rayon::current_num_threads(),
        triangles,
        results_csv,
    })
}

fn output_path(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write(path: PathBuf, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<(), SimError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, bytes)?;
    files.push(path);
    Ok(())
}

/// Load the scene, run the configured mode on a pool of `cfg.workers`
/// threads and write its artifacts. Returns the files written.
pub fn execute(cfg: &SimConfig) -> Result<Vec<PathBuf>, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| SimError::config(None, format!("worker pool: {e}")))?;
    pool.install(|| execute_in_pool(cfg))
}

fn execute_in_pool(cfg: &SimConfig) -> Result<Vec<PathBuf>, SimError> {
    let scene = load_scene(&cfg.scene, cfg.class)?;
    let prefix = &cfg.output_prefix;
    let mode = cfg.mode.name();
    let mut files = Vec::new();
    match cfg.mode {
        Mode::Heatmap => {
            let map = run_heatmap(cfg, scene)?;
            write(
                output_path(prefix, &format!("_{mode}_f0.csv")),
                map.to_csv().as_bytes(),
                &mut files,
            )?;
            write(
                output_path(prefix, &format!("_{mode}_f0.ppm")),
                &map.to_ppm(cfg.color_window),
                &mut files,
            )?;
        }
        Mode::Pdp => {
            let rows = run_pdp(cfg, scene)?;
            write(
                output_path(prefix, &format!("_{mode}_f0.csv")),
                pdp_csv(&rows).as_bytes(),
                &mut files,
            )?;
        }
        Mode::Route => {
            let run = run_route(cfg, scene, true)?;
            write(
                output_path(prefix, &format!("_{mode}.csv")),
                route_csv(&run, &cfg.radio).as_bytes(),
                &mut files,
            )?;
            if cfg.route.as_ref().is_some_and(|r| r.write_pdp) {
                let rows: Vec<PdpRow> = run
                    .frames
                    .iter()
                    .flat_map(|f| pdp_rows(f, &cfg.radio))
                    .collect();
                write(
                    output_path(prefix, &format!("_{mode}_pdp.csv")),
                    pdp_csv(&rows).as_bytes(),
                    &mut files,
                )?;
                let mut dump = String::from(paths_csv_header());
                for f in &run.frames {
                    dump.push_str(&paths_csv_rows(f));
                }
                write(
                    output_path(prefix, &format!("_{mode}_paths.csv")),
                    dump.as_bytes(),
                    &mut files,
                )?;
            }
        }
        Mode::Benchmark => {
            let report = run_benchmark(cfg, scene)?;
            write(
                output_path(prefix, &format!("_{mode}.csv")),
                report.results_csv.as_bytes(),
                &mut files,
            )?;
            write(
                output_path(prefix, &format!("_{mode}_timing.csv")),
                report.timing_csv().as_bytes(),
                &mut files,
            )?;
            write(
                output_path(prefix, &format!("_{mode}_summary.csv")),
                report.summary_csv().as_bytes(),
                &mut files,
            )?;
            log::info!(
                "benchmark: {} frames, on {:.4} s/frame, off {:.4} s/frame, speedup {:.1}%, hit rate {:.3}",
                report.frames.len(),
                report.mean_time_on(),
                report.mean_time_off(),
                100.0 * report.speedup(),
                report.mean_hit_rate()
            );
        }
    }
    Ok(files)
}
