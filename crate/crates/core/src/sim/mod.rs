//! Run configuration, simulation drivers and output writers.

mod config;
mod drivers;
mod output;
mod scenes;

use thiserror::Error;

pub use config::{
    parse_config, BuiltinScene, GridSpec, Mode, Mover, RouteSpec, SceneClass, SceneSource,
    SimConfig, DEFAULT_FRAME_RATE, DEFAULT_RX_HEIGHT, DEFAULT_TX_HEIGHT,
};
pub use drivers::{
    execute, path_power_dbm, pdp_csv, route_csv, run_benchmark, run_heatmap, run_pdp, run_route,
    BenchmarkFrame, BenchmarkReport, PdpRow, RouteRun,
};
pub use output::{diff_histogram, false_color, Heatmap, Histogram, HISTOGRAM_BIN_WIDTH};
pub use scenes::{builtin_scene, load_scene, GROUND_HALF_EXTENT, ROOM_SIZE, STREET_BLOCKER};

use crate::tracer::TraceError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },
    #[error("scene error: {0}")]
    Scene(String),
    #[error("trace error: {0}")]
    Trace(#[from] TraceError),
    /// Cache-on and cache-off runs disagreed.
    #[error("consistency failure: {0}")]
    Consistency(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(line: Option<usize>, message: impl Into<String>) -> Self {
        SimError::Config {
            line,
            message: message.into(),
        }
    }

    /// Process exit status: 1 config, 2 scene, 3 internal consistency.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config { .. } | SimError::Io(_) => 1,
            SimError::Trace(TraceError::Config(_) | TraceError::CoincidentTerminals(_)) => 1,
            SimError::Scene(_) | SimError::Trace(TraceError::Scene(_)) => 2,
            SimError::Consistency(_) | SimError::Trace(_) => 3,
        }
    }
}
