//! Contact probability from foot force and foot-to-plane distance.
//!
//! `P(c) = k_pos·P_pos + k_force·P_force` with
//! `P_pos = 1 − σ(σ_pos·(|K·p + D| − P_mid))` (decreasing in distance) and
//! `P_force = σ(σ_force·(F − F_mid))` (increasing in force).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Leg, PlaneParams};

#[derive(Debug, Error, PartialEq)]
pub enum ContactError {
    #[error("invalid contact config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    pub k_pos: f64,
    pub k_force: f64,
    /// 1/m
    pub sigma_pos: f64,
    /// m
    pub p_mid: f64,
    /// 1/(sensor unit)
    pub sigma_force: f64,
    /// sensor units
    pub f_mid: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig { k_pos: 0.40, k_force: 0.60, sigma_pos: 1.28, p_mid: 0.01, sigma_force: 0.78, f_mid: 5.00 }
    }
}

impl ContactConfig {
    pub fn validate(&self) -> Result<(), ContactError> {
        if !(self.k_pos >= 0.0 && self.k_force >= 0.0) || (self.k_pos + self.k_force - 1.0).abs() > 1e-9 {
            return Err(ContactError::InvalidConfig(format!(
                "weights must be non-negative and sum to 1 (got {} + {})",
                self.k_pos, self.k_force
            )));
        }
        if !(self.sigma_pos > 0.0 && self.sigma_force > 0.0) {
            return Err(ContactError::InvalidConfig("sigma_pos and sigma_force must be > 0".into()));
        }
        Ok(())
    }
}

/// Fused contact belief for one leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactBelief {
    pub leg: Leg,
    pub prob: f64,
    pub prob_pos: f64,
    pub prob_force: f64,
}

impl ContactBelief {
    /// Certain belief used by detectors that only produce a binary decision.
    pub fn binary(leg: Leg, contact: bool) -> Self {
        let p = if contact { 1.0 } else { 0.0 };
        ContactBelief { leg, prob: p, prob_pos: p, prob_force: p }
    }
}

/// Logistic function, stable for large |a|.
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

pub fn contact_prob_position(foot_pos: &Vector3<f64>, plane: &PlaneParams, cfg: &ContactConfig) -> f64 {
    let dist = plane.signed_distance(foot_pos).abs();
    1.0 - sigmoid(cfg.sigma_pos * (dist - cfg.p_mid))
}

pub fn contact_prob_force(force: f64, cfg: &ContactConfig) -> f64 {
    sigmoid(cfg.sigma_force * (force - cfg.f_mid))
}

pub fn fuse_contact(leg: Leg, prob_pos: f64, prob_force: f64, cfg: &ContactConfig) -> ContactBelief {
    let prob = (cfg.k_pos * prob_pos + cfg.k_force * prob_force).clamp(0.0, 1.0);
    ContactBelief { leg, prob, prob_pos, prob_force }
}

/// Full per-leg estimate. Without a support plane the position term is
/// uninformative (0.5).
pub fn estimate_contact(
    leg: Leg,
    foot_pos: &Vector3<f64>,
    force: f64,
    plane: Option<&PlaneParams>,
    cfg: &ContactConfig,
) -> ContactBelief {
    let prob_pos = plane.map_or(0.5, |p| contact_prob_position(foot_pos, p, cfg));
    fuse_contact(leg, prob_pos, contact_prob_force(force, cfg), cfg)
}

/// Force-threshold detector used as the terrain-free baseline.
pub fn force_threshold_contact(force: f64, cfg: &ContactConfig) -> bool {
    force >= cfg.f_mid
}

/// Binary contact decision: switches on at `0.5 + band`, off below `0.5 − band`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactHysteresis {
    pub band: f64,
    state: [bool; 4],
}

impl Default for ContactHysteresis {
    fn default() -> Self {
        ContactHysteresis::new(0.05, [true; 4])
    }
}

impl ContactHysteresis {
    pub fn new(band: f64, initial: [bool; 4]) -> Self {
        ContactHysteresis { band, state: initial }
    }

    pub fn update(&mut self, probs: &[f64; 4]) -> [bool; 4] {
        for (s, &p) in self.state.iter_mut().zip(probs) {
            if *s {
                if p < 0.5 - self.band {
                    *s = false;
                }
            } else if p >= 0.5 + self.band {
                *s = true;
            }
        }
        self.state
    }

    pub fn state(&self) -> [bool; 4] {
        self.state
    }
}
