//! Deterministic kinematic quadruped and scenario runner.
//!
//! Estimation modes (`coupled`, `decoupled`) script the true body motion from
//! the command list. Barrier modes (`cbf`, `no_cbf`) run the MPC at its own
//! rate and integrate its planned horizontal velocity into the truth; height
//! and attitude follow the terrain in every mode. All randomness derives from
//! the scenario seed.

mod gait;
mod metrics;
mod runner;
mod scenario;
mod sensors;
mod terrain;
mod trace;

pub use gait::{in_stance, nominal_foot_xy, BodyMotion, GaitGenerator, GaitOutput};
pub use metrics::{compare_runs, compute_metrics, Comparison, ModeSummary, RegionMetric, RunMetrics};
pub use runner::{run_scenario, run_scenario_with, RunOptions, RunOutput};
pub use scenario::{
    BodyParams, Command, GaitParams, MapParams, PseudoWindow, Rates, Region, RegionKind, Scenario, SensorNoise,
    StartPose,
};
pub use sensors::{SensorLabels, SensorSynth, TruthState};
pub use terrain::{Bounds, Primitive, Terrain, TerrainModel};
pub use trace::{write_trace_csv, TraceRow};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("{module} failed at tick {tick} (t = {time:.3} s): {message}")]
    Module { tick: usize, time: f64, module: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Coupled,
    Decoupled,
    NoCbf,
    Cbf,
}

impl RunMode {
    pub const ALL: [RunMode; 4] = [RunMode::Coupled, RunMode::Decoupled, RunMode::NoCbf, RunMode::Cbf];

    pub fn name(self) -> &'static str {
        match self {
            RunMode::Coupled => "coupled",
            RunMode::Decoupled => "decoupled",
            RunMode::NoCbf => "no_cbf",
            RunMode::Cbf => "cbf",
        }
    }

    pub fn uses_mpc(self) -> bool {
        matches!(self, RunMode::NoCbf | RunMode::Cbf)
    }

    pub fn barriers(self) -> bool {
        self == RunMode::Cbf
    }

    /// Terrain-informed contact and foot-height blending.
    pub fn terrain_coupled(self) -> bool {
        self != RunMode::Decoupled
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "coupled" => Ok(RunMode::Coupled),
            "decoupled" => Ok(RunMode::Decoupled),
            "no_cbf" => Ok(RunMode::NoCbf),
            "cbf" => Ok(RunMode::Cbf),
            other => Err(format!("unknown mode '{other}' (expected coupled, decoupled, no_cbf or cbf)")),
        }
    }
}
