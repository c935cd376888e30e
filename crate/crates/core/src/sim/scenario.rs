use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::terrain::{Bounds, TerrainModel};
use super::SimError;
use crate::contact::ContactConfig;
use crate::estimator::NoiseConfig;
use crate::geometry::Leg;
use crate::kinematics::KinematicsModel;
use crate::mpc::MpcConfig;
use crate::safety::SafetyConfig;

/// Piecewise-constant command that takes effect at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub t: f64,
    /// World-frame planar velocity, m/s.
    pub velocity: [f64; 2],
    /// Target heading; defaults to the direction of `velocity`.
    #[serde(default)]
    pub yaw_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartPose {
    pub position: [f64; 2],
    pub yaw_deg: f64,
}

impl Default for StartPose {
    fn default() -> Self {
        StartPose { position: [0.0, 0.0], yaw_deg: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    pub period: f64,
    /// Stance fraction of the period; 1.0 keeps every foot planted.
    pub duty: f64,
    /// Phase offsets `[FL, FR, RL, RR]`.
    pub offsets: [f64; 4],
    pub step_height: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitParams { period: 0.5, duty: 0.6, offsets: [0.0, 0.5, 0.5, 0.0], step_height: 0.08 }
    }
}

/// Standard deviations of the synthetic sensor noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoise {
    /// m/s²
    pub accel: f64,
    /// rad/s
    pub gyro: f64,
    /// rad
    pub encoder: f64,
    /// rad/s
    pub encoder_velocity: f64,
    /// sensor units
    pub force: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        SensorNoise { accel: 0.02, gyro: 0.002, encoder: 1e-3, encoder_velocity: 0.02, force: 0.5 }
    }
}

impl SensorNoise {
    pub fn zero() -> Self {
        SensorNoise { accel: 0.0, gyro: 0.0, encoder: 0.0, encoder_velocity: 0.0, force: 0.0 }
    }
}

/// Interval during which the force reading of `leg` is replaced by a
/// sub-threshold value while the foot is truly in stance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoWindow {
    pub leg: Leg,
    pub start: f64,
    pub end: f64,
}

impl PseudoWindow {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyParams {
    /// CoM height above the terrain under the hips, m.
    pub nominal_height: f64,
    /// Support-plane footprint `[length, width]`, m.
    pub footprint: [f64; 2],
    /// Force sensor units per newton.
    pub force_gain: f64,
    /// Horizontal velocity time constant of the scripted walker, s.
    pub velocity_tau: f64,
    pub max_accel: f64,
    pub max_yaw_rate: f64,
    /// Attitude tracking time constant, s.
    pub attitude_tau: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        BodyParams {
            nominal_height: 0.3,
            footprint: [0.6, 0.4],
            force_gain: 0.3,
            velocity_tau: 0.2,
            max_accel: 1.5,
            max_yaw_rate: 1.5,
            attitude_tau: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapParams {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub resolution: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams { min: [-2.0, -2.0], max: [2.0, 2.0], resolution: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Flat,
    Slope,
    Platform,
}

/// Labelled area over which plane metrics are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub kind: RegionKind,
    #[serde(flatten)]
    pub bounds: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    pub estimator_hz: f64,
    pub mpc_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates { estimator_hz: 500.0, mpc_hz: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub start: StartPose,
    #[serde(default)]
    pub commands: Vec<Command>,
    #[serde(default)]
    pub gait: GaitParams,
    #[serde(default)]
    pub noise: SensorNoise,
    #[serde(default)]
    pub pseudo_contacts: Vec<PseudoWindow>,
    #[serde(default)]
    pub terrain: TerrainModel,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub map: MapParams,
    #[serde(default)]
    pub body: BodyParams,
    #[serde(default)]
    pub kinematics: KinematicsModel,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default)]
    pub estimator: NoiseConfig,
    #[serde(default)]
    pub safety: SafetyConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rates.estimator_hz
    }

    pub fn tick_count(&self) -> usize {
        (self.duration * self.rates.estimator_hz).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::ScenarioInvalid(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.rates.estimator_hz > 0.0 && self.rates.mpc_hz > 0.0 && self.rates.mpc_hz <= self.rates.estimator_hz) {
            return bad("need 0 < mpc_hz <= estimator_hz".into());
        }
        let g = &self.gait;
        if !(g.period > 0.0 && g.duty > 0.0 && g.duty <= 1.0 && g.step_height >= 0.0) {
            return bad("gait needs period > 0, 0 < duty <= 1, step_height >= 0".into());
        }
        let n = &self.noise;
        if ![n.accel, n.gyro, n.encoder, n.encoder_velocity, n.force].iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return bad("noise sigmas must be finite and non-negative".into());
        }
        let mut last = f64::NEG_INFINITY;
        for c in &self.commands {
            if !(c.t >= last && c.velocity.iter().all(|v| v.is_finite())) {
                return bad("commands must be finite and sorted by time".into());
            }
            last = c.t;
        }
        for w in &self.pseudo_contacts {
            if !(w.start <= w.end) {
                return bad(format!("pseudo-contact window {w:?} ends before it starts"));
            }
        }
        let m = &self.map;
        if !(m.resolution > 0.0 && m.min[0] < m.max[0] && m.min[1] < m.max[1]) {
            return bad("map needs resolution > 0 and min < max".into());
        }
        let start = Vector2::from(self.start.position);
        if !(start.x >= m.min[0] && start.x <= m.max[0] && start.y >= m.min[1] && start.y <= m.max[1]) {
            return bad("start position lies outside the map".into());
        }
        if !(self.body.nominal_height > 0.0 && self.body.footprint.iter().all(|v| *v > 0.0)) {
            return bad("body height and footprint must be positive".into());
        }
        self.terrain.validate().map_err(SimError::ScenarioInvalid)?;
        self.contact.validate().map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;
        self.safety.validate().map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;
        self.mpc.validate().map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;
        Ok(())
    }

    /// Command in force at `t` (zero before the first one).
    pub fn command_at(&self, t: f64) -> Option<&Command> {
        self.commands.iter().take_while(|c| c.t <= t).last()
    }
}
