use nalgebra::{Vector2, Vector3};

use super::scenario::GaitParams;
use super::terrain::Terrain;
use crate::geometry::{rot_z, Leg};
use crate::kinematics::KinematicsModel;
use crate::mpc::gait_phase;

/// Planar body motion the foot planner needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyMotion {
    pub com_xy: Vector2<f64>,
    pub yaw: f64,
    pub velocity_xy: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitOutput {
    pub feet: [Vector3<f64>; 4],
    pub contacts: [bool; 4],
    /// Phase in `[0, 1)`; stance while below the duty factor.
    pub phases: [f64; 4],
}

/// Kinematic foot placement: stance feet stay pinned to the terrain, swing
/// feet follow a smoothstep arc with a sine apex and land on the terrain at a
/// Raibert-style foothold recomputed every tick.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitGenerator {
    params: GaitParams,
    feet: [Vector3<f64>; 4],
    liftoff: [Vector3<f64>; 4],
    stance: [bool; 4],
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Body-frame xy of the foot under the hip in the nominal stance.
pub fn nominal_foot_xy(kin: &KinematicsModel, leg: Leg) -> Vector2<f64> {
    let hip = kin.hip_position(leg);
    let side = if leg.is_left() { kin.abad_link } else { -kin.abad_link };
    Vector2::new(hip.x, hip.y + side)
}

pub fn in_stance(params: &GaitParams, t: f64, leg: Leg) -> bool {
    params.duty >= 1.0 || gait_phase(t, params.period, params.offsets[leg.index()]) < params.duty
}

impl GaitGenerator {
    /// Feet start in the nominal stance under the body.
    pub fn new(params: GaitParams, body: &BodyMotion, kin: &KinematicsModel, terrain: &Terrain) -> Self {
        let r = rot_z(body.yaw).fixed_view::<2, 2>(0, 0).into_owned();
        let feet = Leg::ALL.map(|leg| {
            let xy = body.com_xy + r * nominal_foot_xy(kin, leg);
            Vector3::new(xy.x, xy.y, terrain.height(xy.x, xy.y))
        });
        GaitGenerator { params, feet, liftoff: feet, stance: [true; 4] }
    }

    pub fn feet(&self) -> &[Vector3<f64>; 4] {
        &self.feet
    }

    fn foothold(&self, leg: Leg, phase: f64, body: &BodyMotion, kin: &KinematicsModel, terrain: &Terrain) -> Vector3<f64> {
        let p = &self.params;
        let remaining = if p.duty >= 1.0 { 0.0 } else { (1.0 - phase).max(0.0) * p.period };
        let r = rot_z(body.yaw).fixed_view::<2, 2>(0, 0).into_owned();
        let xy = body.com_xy + r * nominal_foot_xy(kin, leg) + body.velocity_xy * (remaining + 0.5 * p.duty * p.period);
        Vector3::new(xy.x, xy.y, terrain.height(xy.x, xy.y))
    }

    /// Advances the feet to time `t` given the body motion at `t`.
    pub fn advance(&mut self, t: f64, body: &BodyMotion, kin: &KinematicsModel, terrain: &Terrain) -> GaitOutput {
        let p = self.params;
        let mut phases = [0.0; 4];
        for leg in Leg::ALL {
            let i = leg.index();
            let phase = gait_phase(t, p.period, p.offsets[i]);
            phases[i] = phase;
            let stance = in_stance(&p, t, leg);
            if stance {
                if !self.stance[i] {
                    // touchdown: land exactly on the final foothold
                    self.feet[i] = self.foothold(leg, 1.0, body, kin, terrain);
                }
            } else {
                if self.stance[i] {
                    self.liftoff[i] = self.feet[i];
                }
                let s = (phase - p.duty) / (1.0 - p.duty);
                let target = self.foothold(leg, phase, body, kin, terrain);
                let lo = self.liftoff[i];
                let w = smoothstep(s);
                let mut pos = lo + (target - lo) * w;
                pos.z += p.step_height * (std::f64::consts::PI * s).sin();
                self.feet[i] = pos;
            }
            self.stance[i] = stance;
        }
        GaitOutput { feet: self.feet, contacts: self.stance, phases }
    }
}
