use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::scenario::{PseudoWindow, SensorNoise};
use crate::estimator::ProprioSample;
use crate::geometry::{rotation_from_euler, Leg};
use crate::kinematics::KinematicsModel;
use crate::GRAVITY;

/// Ground truth at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub t: f64,
    pub p_com: Vector3<f64>,
    pub v_com: Vector3<f64>,
    /// World acceleration over the interval ending at `t`.
    pub accel: Vector3<f64>,
    /// `(roll, pitch, yaw)`.
    pub euler: Vector3<f64>,
    pub omega_body: Vector3<f64>,
    pub feet: [Vector3<f64>; 4],
    pub foot_velocities: [Vector3<f64>; 4],
    pub contacts: [bool; 4],
    pub phases: [f64; 4],
}

impl TruthState {
    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_euler(self.euler.x, self.euler.y, self.euler.z)
    }
}

/// Extra labels produced alongside a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorLabels {
    pub pseudo: [bool; 4],
    pub reachable: bool,
}

/// Seeded sensor model. Every tick draws the same number of variates, so
/// the stream depends only on the seed and the tick count.
#[derive(Debug, Clone)]
pub struct SensorSynth {
    rng: ChaCha8Rng,
    noise: SensorNoise,
    pseudo: Vec<PseudoWindow>,
    force_gain: f64,
    mass: f64,
    f_mid: f64,
    duty: f64,
}

impl SensorSynth {
    pub fn new(
        seed: u64,
        noise: SensorNoise,
        pseudo: Vec<PseudoWindow>,
        force_gain: f64,
        mass: f64,
        f_mid: f64,
        duty: f64,
    ) -> Self {
        SensorSynth { rng: ChaCha8Rng::seed_from_u64(seed), noise, pseudo, force_gain, mass, f_mid, duty }
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        sigma * z
    }

    fn gauss3(&mut self, sigma: f64) -> Vector3<f64> {
        Vector3::new(self.gauss(sigma), self.gauss(sigma), self.gauss(sigma))
    }

    /// Nominal stance force in sensor units: the weight share of the leg with
    /// a half-sine loading profile over the stance phase.
    pub fn nominal_force(&self, truth: &TruthState, leg: Leg) -> f64 {
        let i = leg.index();
        if !truth.contacts[i] {
            return 0.0;
        }
        let n = truth.contacts.iter().filter(|&&c| c).count().max(1) as f64;
        let u = if self.duty >= 1.0 { 0.5 } else { (truth.phases[i] / self.duty).clamp(0.0, 1.0) };
        self.force_gain * self.mass * GRAVITY / n * (0.5 + 0.5 * (std::f64::consts::PI * u).sin())
    }

    pub fn sample(&mut self, truth: &TruthState, kin: &KinematicsModel) -> (ProprioSample, SensorLabels) {
        let r = truth.rotation();
        let rt = r.transpose();
        let specific = rt * (truth.accel + Vector3::new(0.0, 0.0, GRAVITY));
        let imu_accel = specific + self.gauss3(self.noise.accel);
        let imu_omega = truth.omega_body + self.gauss3(self.noise.gyro);

        let mut labels = SensorLabels { pseudo: [false; 4], reachable: true };
        let mut joint_angles = [Vector3::zeros(); 4];
        let mut joint_velocities = [Vector3::zeros(); 4];
        let mut foot_forces = [0.0; 4];
        for leg in Leg::ALL {
            let i = leg.index();
            let foot_body = rt * (truth.feet[i] - truth.p_com);
            let ik = kin.inverse(leg, &foot_body);
            labels.reachable &= ik.reachable;
            let q = ik.q;
            let r_body = kin.foot_position(leg, &q);
            let rel_body = rt * (truth.foot_velocities[i] - truth.v_com) - truth.omega_body.cross(&r_body);
            let j = kin.jacobian(leg, &q);
            let svd = j.svd(true, true);
            let tol = 1e-6 * svd.singular_values.max();
            let qd = svd.solve(&rel_body, tol).unwrap_or_else(|_| Vector3::zeros());
            joint_angles[i] = q + self.gauss3(self.noise.encoder);
            joint_velocities[i] = qd + self.gauss3(self.noise.encoder_velocity);

            let force = self.nominal_force(truth, leg) + self.gauss(self.noise.force);
            let sub_threshold = self.rng.random::<f64>() * 0.6 * self.f_mid;
            let pseudo = truth.contacts[i] && self.pseudo.iter().any(|w| w.leg == leg && w.active(truth.t));
            labels.pseudo[i] = pseudo;
            foot_forces[i] = if pseudo { sub_threshold } else { force };
        }
        let sample = ProprioSample {
            imu_accel,
            imu_omega,
            orientation: r,
            joint_angles,
            joint_velocities,
            foot_forces,
            timestamp: truth.t,
        };
        (sample, labels)
    }
}
