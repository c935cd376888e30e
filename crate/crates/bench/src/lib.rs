//! Fixed inputs for the hot-path benchmarks.

use legsafe_core::estimator::{EstimatorState, StateMatrix};
use legsafe_core::geometry::PlaneParams;
use legsafe_core::kinematics::KinematicsModel;
use legsafe_core::mpc::{GaitSchedule, MpcState, QpProblem, QP_INFINITY};
use legsafe_core::terrain_map::{Cell, GridMap2p5};
use legsafe_core::{ProprioSample, GRAVITY};
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

pub const FEET: [[f64; 3]; 4] = [[0.19, 0.13, 0.0], [0.19, -0.13, 0.0], [-0.19, 0.13, 0.0], [-0.19, -0.13, 0.0]];

pub fn feet() -> [Vector3<f64>; 4] {
    FEET.map(Vector3::from)
}

/// Box-constrained QP with a dense, well-conditioned Hessian.
pub fn box_qp(n: usize) -> QpProblem {
    let m = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
    let p = m.transpose() * &m + DMatrix::identity(n, n);
    let q = DVector::from_fn(n, |i, _| if i % 2 == 0 { -3.0 } else { 2.0 });
    let mut a = DMatrix::identity(n + 1, n);
    a.row_mut(n).fill(1.0);
    let mut l = DVector::from_element(n + 1, -1.0);
    let mut u = DVector::from_element(n + 1, 1.0);
    (l[n], u[n]) = (-QP_INFINITY, 0.5);
    l[0] = 0.2;
    QpProblem::new(p, q, a, l, u).expect("valid QP")
}

/// Map of `size × size` cells at 5 cm, valid and flat.
pub fn flat_map(size: usize) -> GridMap2p5 {
    let half = 0.025 * size as f64;
    let mut map = GridMap2p5::new(Vector2::new(-half, -half), 0.05, size, size).expect("grid");
    for iy in 0..size {
        for ix in 0..size {
            map.set_cell(ix, iy, Cell { height: 0.0, valid: true, confidence: 1.0 });
        }
    }
    map
}

pub fn standing_sample() -> ProprioSample {
    let q = Vector3::new(0.0, 0.8, -1.6);
    ProprioSample {
        imu_accel: Vector3::new(0.1, 0.0, GRAVITY),
        imu_omega: Vector3::new(0.0, 0.05, 0.0),
        orientation: Matrix3::identity(),
        joint_angles: [q; 4],
        joint_velocities: [Vector3::new(0.0, 0.2, -0.3); 4],
        foot_forces: [30.0; 4],
        timestamp: 0.0,
    }
}

pub fn standing_state(sample: &ProprioSample, kin: &KinematicsModel) -> EstimatorState {
    let p_com = Vector3::new(0.0, 0.0, 0.3);
    let feet = legsafe_core::geometry::Leg::ALL.map(|l| p_com + sample.foot_offset_world(kin, l));
    EstimatorState::new(p_com, Vector3::zeros(), feet, StateMatrix::identity() * 1e-3)
}

/// Trotting MPC problem: start state, reference, schedule and ground plane.
pub fn mpc_problem(horizon: usize, dt: f64) -> (MpcState, Vec<MpcState>, GaitSchedule, PlaneParams) {
    let x0 = MpcState { p_com: Vector3::new(0.0, 0.0, 0.3), v_com: Vector3::new(0.3, 0.0, 0.0), ..Default::default() };
    let reference = (1..=horizon)
        .map(|k| MpcState {
            p_com: Vector3::new(0.3 * dt * k as f64, 0.0, 0.3),
            v_com: Vector3::new(0.3, 0.0, 0.0),
            ..Default::default()
        })
        .collect();
    let gait = GaitSchedule::periodic(0.5, 0.6, [0.0, 0.5, 0.5, 0.0], 0.0, dt, horizon);
    (x0, reference, gait, PlaneParams::horizontal(0.0))
}
