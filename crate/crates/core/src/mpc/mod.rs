//! Convex single-rigid-body MPC over ground reaction forces.
//!
//! The state is the 12-vector `[roll, pitch, yaw, p(3), ω(3), v(3)]` with `ω`
//! in the world frame. The horizon is condensed onto the stance-leg forces, so
//! the QP has three variables per stance leg per step and swing forces are
//! identically zero.

mod assemble;
mod controller;
mod dynamics;
mod qp;

pub use assemble::{assemble_qp, friction_cone_rows, plane_frame, CondensedQp, FrictionRows, RowKind};
pub use controller::{MpcController, MpcPlan, PlanStatus};
pub use dynamics::{linearize_dynamics, srb_derivative, srb_step, Dynamics};
pub use qp::{
    kkt_residuals, solve_qp, solve_qp_warm, KktResiduals, QpError, QpProblem, QpSettings, QpSolution, QpStatus,
    QP_INFINITY,
};

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STATE_SIZE: usize = 12;
pub const IDX_ROLL: usize = 0;
pub const IDX_PITCH: usize = 1;
pub const IDX_YAW: usize = 2;
pub const IDX_P: usize = 3;
pub const IDX_OMEGA: usize = 6;
pub const IDX_V: usize = 9;

pub type MpcVector = SVector<f64, STATE_SIZE>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid MPC config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Diagonal state weight in state order.
    pub q_weights: [f64; STATE_SIZE],
    /// Diagonal force weight, `[FL xyz, FR xyz, RL xyz, RR xyz]`.
    pub r_weights: [f64; 12],
    pub f_min: f64,
    pub f_max: f64,
    pub mu: f64,
    pub mass: f64,
    /// Principal body inertia, kg·m².
    pub inertia: [f64; 3],
    pub solver: QpSettings,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 10,
            dt: 0.025,
            q_weights: [20.0, 20.0, 1.0, 50.0, 50.0, 80.0, 1.0, 1.0, 1.0, 5.0, 5.0, 10.0],
            r_weights: [1e-5; 12],
            f_min: 5.0,
            f_max: 150.0,
            mu: 0.6,
            mass: 12.0,
            inertia: [0.0168, 0.0565, 0.0647],
            solver: QpSettings::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: &str| Err(MpcError::InvalidConfig(m.to_string()));
        if self.horizon < 1 {
            return bad("horizon must be >= 1");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be > 0");
        }
        if self.q_weights.iter().chain(&self.r_weights).any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative");
        }
        if !(0.0 <= self.f_min && self.f_min < self.f_max) {
            return bad("need 0 <= f_min < f_max");
        }
        if !(self.mu > 0.0) {
            return bad("mu must be > 0");
        }
        if !(self.mass > 0.0 && self.inertia.iter().all(|&i| i > 0.0)) {
            return bad("mass and inertia must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MpcState {
    /// `(roll, pitch, yaw)`, ZYX convention.
    pub euler: Vector3<f64>,
    pub p_com: Vector3<f64>,
    /// World frame.
    pub omega: Vector3<f64>,
    pub v_com: Vector3<f64>,
}

impl MpcState {
    pub fn to_vector(&self) -> MpcVector {
        let mut x = MpcVector::zeros();
        x.fixed_rows_mut::<3>(IDX_ROLL).copy_from(&self.euler);
        x.fixed_rows_mut::<3>(IDX_P).copy_from(&self.p_com);
        x.fixed_rows_mut::<3>(IDX_OMEGA).copy_from(&self.omega);
        x.fixed_rows_mut::<3>(IDX_V).copy_from(&self.v_com);
        x
    }

    pub fn from_vector(x: &MpcVector) -> Self {
        MpcState {
            euler: x.fixed_rows::<3>(IDX_ROLL).into_owned(),
            p_com: x.fixed_rows::<3>(IDX_P).into_owned(),
            omega: x.fixed_rows::<3>(IDX_OMEGA).into_owned(),
            v_com: x.fixed_rows::<3>(IDX_V).into_owned(),
        }
    }
}

/// Stance flags for each horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitSchedule {
    pub stance: Vec<[bool; 4]>,
    pub period: f64,
    pub duty: f64,
}

impl GaitSchedule {
    /// Every leg in stance for `horizon` steps.
    pub fn standing(horizon: usize) -> Self {
        GaitSchedule { stance: vec![[true; 4]; horizon], period: 0.0, duty: 1.0 }
    }

    /// Samples a periodic gait at `t0 + k·dt`. A leg is in stance while its
    /// phase `(t / period + offset) mod 1` is below `duty`.
    pub fn periodic(period: f64, duty: f64, offsets: [f64; 4], t0: f64, dt: f64, horizon: usize) -> Self {
        let stance = (0..horizon)
            .map(|k| {
                let t = t0 + k as f64 * dt;
                offsets.map(|o| gait_phase(t, period, o) < duty)
            })
            .collect();
        GaitSchedule { stance, period, duty }
    }

    pub fn horizon(&self) -> usize {
        self.stance.len()
    }
}

/// Phase in `[0, 1)` of a leg with the given offset.
pub fn gait_phase(t: f64, period: f64, offset: f64) -> f64 {
    if period <= 0.0 {
        return 0.0;
    }
    (t / period + offset).rem_euclid(1.0)
}
