//! Shared geometric types: leg indexing, plane parameters and rotations.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Quadruped legs in the fixed order used by every per-leg array in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leg {
    FL,
    FR,
    RL,
    RR,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::FL, Leg::FR, Leg::RL, Leg::RR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Leg> {
        Leg::ALL.get(idx).copied()
    }

    pub fn is_front(self) -> bool {
        matches!(self, Leg::FL | Leg::FR)
    }

    pub fn is_left(self) -> bool {
        matches!(self, Leg::FL | Leg::RL)
    }

    /// The two legs sharing a body edge with this one (front/rear partner and
    /// left/right partner).
    pub fn neighbors(self) -> [Leg; 2] {
        match self {
            Leg::FL => [Leg::FR, Leg::RL],
            Leg::FR => [Leg::FL, Leg::RR],
            Leg::RL => [Leg::FL, Leg::RR],
            Leg::RR => [Leg::FR, Leg::RL],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Leg::FL => "FL",
            Leg::FR => "FR",
            Leg::RL => "RL",
            Leg::RR => "RR",
        }
    }
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Leg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FL" => Ok(Leg::FL),
            "FR" => Ok(Leg::FR),
            "RL" => Ok(Leg::RL),
            "RR" => Ok(Leg::RR),
            other => Err(format!("unknown leg `{other}`")),
        }
    }
}

/// Plane `k1·x + k2·y + k3·z + d = 0`.
///
/// When `normalized` is set the normal `(k1, k2, k3)` has unit length and
/// points upward (`k3 > 0`), so `k·p + d` is the signed height of `p` above
/// the plane measured along the normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub d: f64,
    pub normalized: bool,
}

/// Below this magnitude the vertical normal component is treated as zero and
/// the upward orientation of the normal is undefined.
const VERTICAL_TOL: f64 = 1e-12;

impl PlaneParams {
    /// Raw (unnormalised) plane from a normal and offset.
    pub fn from_raw(normal: Vector3<f64>, d: f64) -> Self {
        PlaneParams { k1: normal.x, k2: normal.y, k3: normal.z, d, normalized: false }
    }

    /// Plane through `point` with the given normal, normalised.
    ///
    /// Returns `None` for a zero normal.
    pub fn through_point(normal: Vector3<f64>, point: Vector3<f64>) -> Option<Self> {
        PlaneParams::from_raw(normal, -normal.dot(&point)).normalize()
    }

    /// Horizontal plane `z = height`.
    pub fn horizontal(height: f64) -> Self {
        PlaneParams { k1: 0.0, k2: 0.0, k3: 1.0, d: -height, normalized: true }
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.k1, self.k2, self.k3)
    }

    /// Scales to a unit normal and flips it upward.
    ///
    /// A plane whose normal is (numerically) horizontal keeps its orientation
    /// and is returned with `normalized = false`, since "upward" is undefined.
    /// Returns `None` for a zero normal.
    pub fn normalize(&self) -> Option<Self> {
        let n = self.normal();
        let norm = n.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        let mut scale = 1.0 / norm;
        let unit_z = self.k3 * scale;
        if unit_z < -VERTICAL_TOL {
            scale = -scale;
        }
        Some(PlaneParams {
            k1: self.k1 * scale,
            k2: self.k2 * scale,
            k3: self.k3 * scale,
            d: self.d * scale,
            normalized: unit_z.abs() > VERTICAL_TOL,
        })
    }

    /// `k·p + d`; the signed orthogonal distance when the plane is normalised.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.k1 * p.x + self.k2 * p.y + self.k3 * p.z + self.d
    }

    /// Height of the plane above `(x, y)`, or `None` for a vertical plane.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        if self.k3.abs() <= VERTICAL_TOL {
            return None;
        }
        Some((-self.k1 * x - self.k2 * y - self.d) / self.k3)
    }

    /// Angle in radians between the normals of two planes, ignoring orientation.
    pub fn normal_angle(&self, other: &PlaneParams) -> f64 {
        let a = self.normal();
        let b = other.normal();
        let c = (a.dot(&b).abs() / (a.norm() * b.norm())).min(1.0);
        // acos loses precision near 1; use the cross-product form instead.
        let s = a.cross(&b).norm() / (a.norm() * b.norm());
        s.atan2(c)
    }

    /// Pitch and roll (ZYX convention) of a body frame whose z axis is the
    /// plane normal and whose heading is `yaw`.
    ///
    /// Positive pitch tilts the nose down, positive roll lifts the left side.
    pub fn slope_angles(&self, yaw: f64) -> (f64, f64) {
        let n = self.normal().normalize();
        let (s, c) = yaw.sin_cos();
        // normal expressed in the heading-aligned frame
        let nx = c * n.x + s * n.y;
        let ny = -s * n.x + c * n.y;
        let nz = n.z;
        let pitch = nx.atan2(nz);
        let roll = (-ny).atan2((nx * nx + nz * nz).sqrt());
        (pitch, roll)
    }
}

/// Body-to-world rotation for ZYX Euler angles (yaw about z, then pitch about
/// y, then roll about x).
pub fn rotation_from_euler(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    Rotation3::from_euler_angles(roll, pitch, yaw).into_inner()
}

/// Inverse of [`rotation_from_euler`]; returns `(roll, pitch, yaw)`.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> (f64, f64, f64) {
    Rotation3::from_matrix_unchecked(*r).euler_angles()
}

/// Maps ZYX Euler angle rates to body-frame angular velocity.
pub fn euler_rates_to_body_omega(roll: f64, pitch: f64, rates: &Vector3<f64>) -> Vector3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (dr, dp, dy) = (rates.x, rates.y, rates.z);
    Vector3::new(dr - dy * sp, dp * cr + dy * cp * sr, -dp * sr + dy * cp * cr)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Yaw rotation about world z.
pub fn rot_z(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Unit vector in the xy-plane for a heading angle.
pub fn heading_vector(yaw: f64) -> Vector2<f64> {
    Vector2::new(yaw.cos(), yaw.sin())
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    } else if x <= -std::f64::consts::PI {
        x += std::f64::consts::TAU;
    }
    x
}
