//! Three-joint leg kinematics (abduction, hip pitch, knee) in the body frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Leg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicsModel {
    /// Hip joint position of the front-left leg in the body frame; the other
    /// legs mirror it.
    pub hip_offset: [f64; 3],
    /// Lateral offset from the abduction axis to the thigh.
    pub abad_link: f64,
    pub thigh: f64,
    pub calf: f64,
}

impl Default for KinematicsModel {
    fn default() -> Self {
        KinematicsModel { hip_offset: [0.1881, 0.04675, 0.0], abad_link: 0.08, thigh: 0.213, calf: 0.213 }
    }
}

/// Result of inverse kinematics; `reachable` is false when the target had to
/// be clamped onto the workspace boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub q: Vector3<f64>,
    pub reachable: bool,
}

impl KinematicsModel {
    pub fn hip_position(&self, leg: Leg) -> Vector3<f64> {
        let [x, y, z] = self.hip_offset;
        let sx = if leg.is_front() { 1.0 } else { -1.0 };
        let sy = if leg.is_left() { 1.0 } else { -1.0 };
        Vector3::new(sx * x, sy * y, z)
    }

    fn side_link(&self, leg: Leg) -> f64 {
        if leg.is_left() {
            self.abad_link
        } else {
            -self.abad_link
        }
    }

    /// Foot position relative to the hip joint.
    pub fn foot_in_hip(&self, leg: Leg, q: &Vector3<f64>) -> Vector3<f64> {
        let l1 = self.side_link(leg);
        let (s1, c1) = q[0].sin_cos();
        let (s2, c2) = q[1].sin_cos();
        let (s23, c23) = (q[1] + q[2]).sin_cos();
        let r = self.thigh * c2 + self.calf * c23;
        Vector3::new(-self.thigh * s2 - self.calf * s23, l1 * c1 + r * s1, l1 * s1 - r * c1)
    }

    /// Foot position in the body frame.
    pub fn foot_position(&self, leg: Leg, q: &Vector3<f64>) -> Vector3<f64> {
        self.hip_position(leg) + self.foot_in_hip(leg, q)
    }

    /// `∂ foot_position / ∂ q`.
    pub fn jacobian(&self, leg: Leg, q: &Vector3<f64>) -> Matrix3<f64> {
        let l1 = self.side_link(leg);
        let (s1, c1) = q[0].sin_cos();
        let (s2, c2) = q[1].sin_cos();
        let (s23, c23) = (q[1] + q[2]).sin_cos();
        let r = self.thigh * c2 + self.calf * c23;
        let dr2 = -self.thigh * s2 - self.calf * s23;
        let dr3 = -self.calf * s23;
        Matrix3::new(
            0.0,
            -self.thigh * c2 - self.calf * c23,
            -self.calf * c23,
            -l1 * s1 + r * c1,
            s1 * dr2,
            s1 * dr3,
            l1 * c1 + r * s1,
            -c1 * dr2,
            -c1 * dr3,
        )
    }

    /// Foot velocity in the body frame due to joint motion only.
    pub fn foot_velocity(&self, leg: Leg, q: &Vector3<f64>, qd: &Vector3<f64>) -> Vector3<f64> {
        self.jacobian(leg, q) * qd
    }

    /// Knee-backward inverse kinematics for a body-frame foot target.
    pub fn inverse(&self, leg: Leg, foot_body: &Vector3<f64>) -> IkSolution {
        let p = foot_body - self.hip_position(leg);
        let l1 = self.side_link(leg);
        let mut reachable = true;

        let yz2 = p.y * p.y + p.z * p.z;
        let r2 = yz2 - l1 * l1;
        let r = if r2 > 0.0 {
            r2.sqrt()
        } else {
            reachable = false;
            0.0
        };
        let q1 = p.z.atan2(p.y) - (-r).atan2(l1);

        let mut c3 = (p.x * p.x + r * r - self.thigh * self.thigh - self.calf * self.calf)
            / (2.0 * self.thigh * self.calf);
        if !(-1.0..=1.0).contains(&c3) {
            reachable = false;
            c3 = c3.clamp(-1.0, 1.0);
        }
        let q3 = -c3.acos();
        let q2 = (-p.x).atan2(r) - (self.calf * q3.sin()).atan2(self.thigh + self.calf * q3.cos());
        IkSolution { q: Vector3::new(q1, q2, q3), reachable }
    }
}
