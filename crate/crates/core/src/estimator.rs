//! Linear Kalman filter over CoM position, CoM velocity and the four foot
//! positions, all in the world frame.
//!
//! State layout (18): `[p_com(3), v_com(3), p_FL(3), p_FR(3), p_RL(3), p_RR(3)]`.
//!
//! Observation layout (28): `[rel_pos(4×3), foot_vel(4×3), foot_z(4)]` where
//! `rel_pos_i = p_com − p_i`, `foot_vel_i` is the CoM velocity implied by the
//! odometry of leg `i` (valid while the foot is planted), and `foot_z_i` is the
//! foot height blended between kinematics and the support plane.

use nalgebra::{Cholesky, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Leg, PlaneParams};
use crate::kinematics::KinematicsModel;
use crate::GRAVITY;

pub const STATE_DIM: usize = 18;
pub const OBS_DIM: usize = 28;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type ObsVector = SVector<f64, OBS_DIM>;
pub type ObsMatrix = SMatrix<f64, OBS_DIM, STATE_DIM>;
pub type ObsCovariance = SMatrix<f64, OBS_DIM, OBS_DIM>;

/// Support planes flatter than this (in `|k3|`) are rejected.
pub const MIN_PLANE_K3: f64 = 0.1;
/// Largest accepted condition number of the innovation covariance.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("non-finite input in `{0}`")]
    NonFiniteInput(&'static str),
    #[error("orientation is not a proper rotation")]
    ImproperRotation,
    #[error("time step must be positive and finite (got {0})")]
    InvalidTimestep(f64),
    #[error("innovation covariance is singular or ill-conditioned (condition ≈ {condition:.3e})")]
    SingularInnovation { condition: f64 },
    #[error("support plane too steep for foot-height blending (|k3| = {k3})")]
    PlaneTooSteep { k3: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub p_com: Vector3<f64>,
    pub v_com: Vector3<f64>,
    pub p_feet: [Vector3<f64>; 4],
    pub covariance: StateMatrix,
}

impl EstimatorState {
    pub fn new(p_com: Vector3<f64>, v_com: Vector3<f64>, p_feet: [Vector3<f64>; 4], covariance: StateMatrix) -> Self {
        EstimatorState { p_com, v_com, p_feet, covariance }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p_com);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v_com);
        for (i, f) in self.p_feet.iter().enumerate() {
            x.fixed_rows_mut::<3>(6 + 3 * i).copy_from(f);
        }
        x
    }

    pub fn from_vector(x: &StateVector, covariance: StateMatrix) -> Self {
        let foot = |i: usize| x.fixed_rows::<3>(6 + 3 * i).into_owned();
        EstimatorState {
            p_com: x.fixed_rows::<3>(0).into_owned(),
            v_com: x.fixed_rows::<3>(3).into_owned(),
            p_feet: [foot(0), foot(1), foot(2), foot(3)],
            covariance,
        }
    }
}

/// One tick of proprioceptive measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProprioSample {
    /// Specific force, body frame.
    pub imu_accel: Vector3<f64>,
    /// Angular velocity, body frame.
    pub imu_omega: Vector3<f64>,
    /// Body-to-world rotation.
    pub orientation: Matrix3<f64>,
    pub joint_angles: [Vector3<f64>; 4],
    pub joint_velocities: [Vector3<f64>; 4],
    pub foot_forces: [f64; 4],
    pub timestamp: f64,
}

impl ProprioSample {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let finite3 = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if !finite3(&self.imu_accel) {
            return Err(EstimatorError::NonFiniteInput("imu_accel"));
        }
        if !finite3(&self.imu_omega) {
            return Err(EstimatorError::NonFiniteInput("imu_omega"));
        }
        if !self.orientation.iter().all(|x| x.is_finite()) {
            return Err(EstimatorError::NonFiniteInput("orientation"));
        }
        if !self.joint_angles.iter().all(finite3) {
            return Err(EstimatorError::NonFiniteInput("joint_angles"));
        }
        if !self.joint_velocities.iter().all(finite3) {
            return Err(EstimatorError::NonFiniteInput("joint_velocities"));
        }
        if !self.foot_forces.iter().all(|f| f.is_finite()) {
            return Err(EstimatorError::NonFiniteInput("foot_forces"));
        }
        if !self.timestamp.is_finite() {
            return Err(EstimatorError::NonFiniteInput("timestamp"));
        }
        let r = &self.orientation;
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        if ortho > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(EstimatorError::ImproperRotation);
        }
        Ok(())
    }

    /// Foot position relative to the CoM, world frame.
    pub fn foot_offset_world(&self, kin: &KinematicsModel, leg: Leg) -> Vector3<f64> {
        self.orientation * kin.foot_position(leg, &self.joint_angles[leg.index()])
    }

    /// Foot velocity relative to the CoM, world frame, from the rigid-body
    /// rotation plus joint motion.
    pub fn foot_velocity_world(&self, kin: &KinematicsModel, leg: Leg) -> Vector3<f64> {
        let i = leg.index();
        let r = kin.foot_position(leg, &self.joint_angles[i]);
        let jq = kin.foot_velocity(leg, &self.joint_angles[i], &self.joint_velocities[i]);
        self.orientation * (self.imu_omega.cross(&r) + jq)
    }
}

/// Diagonal process and measurement noise, in per-step variance units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_foot: f64,
    pub swing_q_scale: f64,
    pub r_rel: f64,
    pub r_vel: f64,
    pub r_foot_z: f64,
    pub swing_r_scale: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            q_pos: 1e-4,
            q_vel: 1e-3,
            q_foot: 1e-6,
            swing_q_scale: 1e3,
            r_rel: 1e-4,
            r_vel: 1e-3,
            r_foot_z: 1e-4,
            swing_r_scale: 1e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector {
    pub rel_pos: [Vector3<f64>; 4],
    pub foot_vel: [Vector3<f64>; 4],
    pub foot_z: [f64; 4],
}

impl ObservationVector {
    pub fn to_vector(&self) -> ObsVector {
        let mut z = ObsVector::zeros();
        for i in 0..4 {
            z.fixed_rows_mut::<3>(3 * i).copy_from(&self.rel_pos[i]);
            z.fixed_rows_mut::<3>(12 + 3 * i).copy_from(&self.foot_vel[i]);
            z[24 + i] = self.foot_z[i];
        }
        z
    }
}

/// State transition for one step. Swing feet move with the CoM; stance feet
/// are held.
pub fn transition_matrix(dt: f64, stance: &[bool; 4]) -> StateMatrix {
    let mut a = StateMatrix::identity();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
    for (i, &s) in stance.iter().enumerate() {
        if !s {
            a.fixed_view_mut::<3, 3>(6 + 3 * i, 3).copy_from(&(Matrix3::identity() * dt));
        }
    }
    a
}

pub fn process_noise(cfg: &NoiseConfig, stance: &[bool; 4]) -> StateMatrix {
    let mut q = StateVector::zeros();
    q.fixed_rows_mut::<3>(0).fill(cfg.q_pos);
    q.fixed_rows_mut::<3>(3).fill(cfg.q_vel);
    for (i, &s) in stance.iter().enumerate() {
        let v = if s { cfg.q_foot } else { cfg.q_foot * cfg.swing_q_scale };
        q.fixed_rows_mut::<3>(6 + 3 * i).fill(v);
    }
    StateMatrix::from_diagonal(&q)
}

pub fn observation_matrix() -> ObsMatrix {
    let mut h = ObsMatrix::zeros();
    for i in 0..4 {
        h.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&Matrix3::identity());
        h.fixed_view_mut::<3, 3>(3 * i, 6 + 3 * i).copy_from(&(-Matrix3::identity()));
        h.fixed_view_mut::<3, 3>(12 + 3 * i, 3).copy_from(&Matrix3::identity());
        h[(24 + i, 6 + 3 * i + 2)] = 1.0;
    }
    h
}

pub fn measurement_noise(cfg: &NoiseConfig, stance: &[bool; 4]) -> ObsCovariance {
    let mut r = ObsVector::zeros();
    for (i, &s) in stance.iter().enumerate() {
        let k = if s { 1.0 } else { cfg.swing_r_scale };
        r.fixed_rows_mut::<3>(3 * i).fill(cfg.r_rel);
        r.fixed_rows_mut::<3>(12 + 3 * i).fill(cfg.r_vel * k);
        r[24 + i] = cfg.r_foot_z * k;
    }
    ObsCovariance::from_diagonal(&r)
}

/// Deterministic part of the prediction: `x⁺ = A x + b`.
pub fn predict_input(sample: &ProprioSample, kin: &KinematicsModel, stance: &[bool; 4], dt: f64) -> StateVector {
    let accel = sample.orientation * sample.imu_accel - Vector3::new(0.0, 0.0, GRAVITY);
    let mut b = StateVector::zeros();
    b.fixed_rows_mut::<3>(0).copy_from(&(0.5 * accel * dt * dt));
    b.fixed_rows_mut::<3>(3).copy_from(&(accel * dt));
    for leg in Leg::ALL {
        if !stance[leg.index()] {
            let rel = sample.foot_velocity_world(kin, leg);
            b.fixed_rows_mut::<3>(6 + 3 * leg.index()).copy_from(&(rel * dt));
        }
    }
    b
}

pub fn predict(
    state: &EstimatorState,
    sample: &ProprioSample,
    kin: &KinematicsModel,
    stance: &[bool; 4],
    dt: f64,
    cfg: &NoiseConfig,
) -> Result<EstimatorState, EstimatorError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EstimatorError::InvalidTimestep(dt));
    }
    sample.validate()?;
    let a = transition_matrix(dt, stance);
    let x = a * state.to_vector() + predict_input(sample, kin, stance, dt);
    let p = a * state.covariance * a.transpose() + process_noise(cfg, stance);
    Ok(EstimatorState::from_vector(&x, p))
}

/// Builds the observation. `blend[i]` is the weight given to the support
/// plane for the height of foot `i`; without a plane the weights are ignored.
pub fn build_observation(
    sample: &ProprioSample,
    kin: &KinematicsModel,
    plane: Option<&PlaneParams>,
    blend: &[f64; 4],
    state: &EstimatorState,
) -> Result<ObservationVector, EstimatorError> {
    sample.validate()?;
    if let Some(pl) = plane {
        if pl.k3.abs() <= MIN_PLANE_K3 {
            return Err(EstimatorError::PlaneTooSteep { k3: pl.k3 });
        }
    }
    let mut obs = ObservationVector { rel_pos: [Vector3::zeros(); 4], foot_vel: [Vector3::zeros(); 4], foot_z: [0.0; 4] };
    for leg in Leg::ALL {
        let i = leg.index();
        let offset = sample.foot_offset_world(kin, leg);
        obs.rel_pos[i] = -offset;
        obs.foot_vel[i] = -sample.foot_velocity_world(kin, leg);
        let p_kin = state.p_com + offset;
        obs.foot_z[i] = match plane {
            Some(pl) => {
                let w = blend[i].clamp(0.0, 1.0);
                let z_est = (-pl.k1 * p_kin.x - pl.k2 * p_kin.y - pl.d) / pl.k3;
                (1.0 - w) * p_kin.z + w * z_est
            }
            None => p_kin.z,
        };
    }
    Ok(obs)
}

pub fn update(
    state: &EstimatorState,
    obs: &ObservationVector,
    stance: &[bool; 4],
    cfg: &NoiseConfig,
) -> Result<EstimatorState, EstimatorError> {
    let z = obs.to_vector();
    if !z.iter().all(|v| v.is_finite()) {
        return Err(EstimatorError::NonFiniteInput("observation"));
    }
    let h = observation_matrix();
    let p = &state.covariance;
    let x = state.to_vector();
    let s = h * p * h.transpose() + measurement_noise(cfg, stance);
    let chol = Cholesky::new(s).ok_or(EstimatorError::SingularInnovation { condition: f64::INFINITY })?;
    let diag = chol.l_dirty().diagonal();
    let ratio = diag.max() / diag.min();
    let condition = ratio * ratio;
    if !(condition <= MAX_INNOVATION_CONDITION) {
        return Err(EstimatorError::SingularInnovation { condition });
    }
    // K = P Hᵀ S⁻¹, obtained from S Kᵀ = H P.
    let gain = chol.solve(&(h * p)).transpose();
    let x_new = x + gain * (z - h * x);
    let p_new = (StateMatrix::identity() - gain * h) * p;
    let p_sym = (p_new + p_new.transpose()) * 0.5;
    Ok(EstimatorState::from_vector(&x_new, p_sym))
}
