//! Terrain-informed discrete-time barrier constraints.
//!
//! The global barrier keeps the CoM on the near side of a hazard boundary
//! found by marching along the command direction through the terrain map:
//! `h = d·(S′ − p_xy) − γ`. The local barriers keep body pitch and roll within
//! a band around the support-plane inclination.
//!
//! Every barrier `h` becomes one row per horizon transition,
//! `(h[k+1] − h[k]) / dt + α·h[k] ≥ 0`, written over the stacked MPC state
//! trajectory `X[0..=N]`.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::MIN_PLANE_K3;
use crate::geometry::PlaneParams;
use crate::mpc::{IDX_P, IDX_PITCH, IDX_ROLL, STATE_SIZE};
use crate::terrain_map::GridMap2p5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SafetyError {
    #[error("invalid safety config: {0}")]
    InvalidConfig(String),
    #[error("support plane too steep for attitude bounds (|k3| = {k3})")]
    PlaneTooSteep { k3: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyConfig {
    /// Height difference that marks a map sample as hazardous, m.
    pub h_thr: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Steepest traversable slope, rad.
    pub theta_thr: f64,
    /// Margin kept from the projected boundary, m.
    pub gamma: f64,
    /// Pitch half-band around the plane inclination, rad.
    pub delta_pitch: f64,
    /// Roll half-band around the plane inclination, rad.
    pub delta_roll: f64,
    pub alpha_glob: f64,
    pub alpha_local: f64,
    /// Treat unknown map cells on the ray as hazards.
    pub strict_unknown: bool,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            h_thr: 0.5,
            l_min: 0.5,
            l_max: 1.2,
            theta_thr: 60f64.to_radians(),
            gamma: 0.15,
            delta_pitch: 10f64.to_radians(),
            delta_roll: 10f64.to_radians(),
            alpha_glob: 1.5,
            alpha_local: 0.5,
            strict_unknown: false,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<(), SafetyError> {
        let bad = |m: &str| Err(SafetyError::InvalidConfig(m.to_string()));
        if !(self.l_min > 0.0 && self.l_min < self.l_max) {
            return bad("need 0 < l_min < l_max");
        }
        if !(self.h_thr > 0.0) {
            return bad("h_thr must be > 0");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be >= 0");
        }
        if !(self.alpha_glob > 0.0 && self.alpha_local > 0.0) {
            return bad("alpha gains must be > 0");
        }
        if !(self.theta_thr > 0.0 && self.theta_thr < std::f64::consts::FRAC_PI_2) {
            return bad("theta_thr must lie in (0, pi/2)");
        }
        if !(self.delta_pitch >= 0.0 && self.delta_roll >= 0.0) {
            return bad("attitude bands must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardInfo {
    pub found: bool,
    /// Hazardous map sample `S` (cell centre and stored height).
    pub s_point: Vector3<f64>,
    /// Boundary point `S′` after pulling `S` back toward the robot.
    pub s_projected_xy: Vector2<f64>,
    pub direction_xy: Vector2<f64>,
}

impl HazardInfo {
    pub fn none(direction_xy: Vector2<f64>) -> Self {
        HazardInfo { found: false, s_point: Vector3::zeros(), s_projected_xy: Vector2::zeros(), direction_xy }
    }

    /// `d·S′`, the offset of the boundary line along the direction.
    pub fn boundary_offset(&self) -> f64 {
        self.direction_xy.dot(&self.s_projected_xy)
    }
}

/// Marches from `robot_xy` along `cmd_dir_xy` in steps of the map resolution
/// over `[l_min, l_max]` and returns the first sample whose height differs
/// from `robot_z` by more than `h_thr`.
pub fn find_hazard_point(
    map: &GridMap2p5,
    robot_xy: &Vector2<f64>,
    robot_z: f64,
    cmd_dir_xy: &Vector2<f64>,
    cfg: &SafetyConfig,
) -> HazardInfo {
    let norm = cmd_dir_xy.norm();
    if !(norm > 0.0) {
        return HazardInfo::none(Vector2::zeros());
    }
    let dir = cmd_dir_xy / norm;
    for l in ray_distances(map.resolution(), cfg) {
        let xy = robot_xy + dir * l;
        let hazard_at = |z: f64| HazardInfo {
            found: true,
            s_point: Vector3::new(xy.x, xy.y, z),
            s_projected_xy: xy,
            direction_xy: dir,
        };
        match map.query_height(&xy) {
            Some(z) if (robot_z - z).abs() > cfg.h_thr => return hazard_at(z),
            Some(_) => {}
            None if cfg.strict_unknown => return hazard_at(f64::NAN),
            None => {}
        }
    }
    HazardInfo::none(dir)
}

/// Sample distances along the hazard ray.
pub fn ray_distances(step: f64, cfg: &SafetyConfig) -> impl Iterator<Item = f64> {
    let (l_min, l_max) = (cfg.l_min, cfg.l_max);
    (0..).map(move |j| l_min + j as f64 * step).take_while(move |&l| l <= l_max + 1e-12)
}

/// Pulls `S` back toward the robot by the run a `theta_thr` ramp needs to
/// climb the height difference between `S` and the support plane.
pub fn project_hazard(
    s: &Vector3<f64>,
    plane: &PlaneParams,
    cfg: &SafetyConfig,
    direction_xy: &Vector2<f64>,
) -> Vector2<f64> {
    let dh = match plane.height_at(s.x, s.y) {
        Some(z) if s.z.is_finite() => (z - s.z).abs(),
        _ => 0.0,
    };
    s.xy() - direction_xy * (dh / cfg.theta_thr.tan())
}

/// Hazard search followed by projection onto the support plane.
pub fn locate_hazard(
    map: &GridMap2p5,
    robot_xy: &Vector2<f64>,
    plane: &PlaneParams,
    cmd_dir_xy: &Vector2<f64>,
    cfg: &SafetyConfig,
) -> HazardInfo {
    let robot_z = plane.height_at(robot_xy.x, robot_xy.y).unwrap_or(0.0);
    let mut hz = find_hazard_point(map, robot_xy, robot_z, cmd_dir_xy, cfg);
    if hz.found {
        hz.s_projected_xy = project_hazard(&hz.s_point, plane, cfg, &hz.direction_xy);
    }
    hz
}

/// Keeps the most conservative boundary seen while the command direction is
/// unchanged, so a hazard that slips below `l_min` is not forgotten.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HazardLatch {
    held: Option<HazardInfo>,
}

impl HazardLatch {
    /// Directions closer than this (rad) count as unchanged.
    const SAME_DIRECTION: f64 = 1e-3;

    pub fn update(&mut self, fresh: HazardInfo) -> HazardInfo {
        if let Some(h) = self.held {
            let turned = h.direction_xy.perp(&fresh.direction_xy).atan2(h.direction_xy.dot(&fresh.direction_xy));
            if fresh.direction_xy.norm() == 0.0 || turned.abs() > Self::SAME_DIRECTION {
                self.held = None;
            }
        }
        if fresh.found {
            let closer = self.held.map_or(true, |h| fresh.boundary_offset() < h.boundary_offset());
            if closer {
                self.held = Some(fresh);
            }
        }
        self.held.unwrap_or(fresh)
    }

    pub fn reset(&mut self) {
        self.held = None;
    }
}

/// `h_glob` at planar position `p_xy`; `None` when no hazard is active.
pub fn global_barrier(hazard: &HazardInfo, cfg: &SafetyConfig, p_xy: &Vector2<f64>) -> Option<f64> {
    hazard.found.then(|| hazard.direction_xy.dot(&(hazard.s_projected_xy - p_xy)) - cfg.gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbfKind {
    Global,
    LocalPitchLo,
    LocalPitchHi,
    LocalRollLo,
    LocalRollHi,
}

/// Linear inequality `coeffs·X ≥ bound` over the stacked state trajectory
/// `X = [X[0]; …; X[N]]` (12 entries per step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbfRow {
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
    pub kind: CbfKind,
    /// Horizon transition `k → k+1` this row constrains.
    pub step: usize,
}

impl CbfRow {
    /// `coeffs·X − bound`; non-negative when satisfied.
    pub fn slack(&self, stacked: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, c)| c * stacked[i]).sum::<f64>() - self.bound
    }
}

fn barrier_row(kind: CbfKind, step: usize, next: &[(usize, f64)], cur: &[(usize, f64)], offset: f64, alpha: f64, dt: f64) -> CbfRow {
    // h[k] = offset + Σ cur·X[k]; h[k+1] uses the same coefficients on X[k+1].
    let mut coeffs = Vec::with_capacity(next.len() + cur.len());
    for &(i, c) in next {
        coeffs.push((i, c / dt));
    }
    for &(i, c) in cur {
        coeffs.push((i, c * (alpha - 1.0 / dt)));
    }
    CbfRow { coeffs, bound: -alpha * offset, kind, step }
}

/// One global row per horizon transition; empty when no hazard is active.
pub fn global_cbf_rows(hazard: &HazardInfo, cfg: &SafetyConfig, horizon: usize, dt: f64) -> Vec<CbfRow> {
    if !hazard.found {
        return Vec::new();
    }
    let d = hazard.direction_xy;
    let offset = hazard.boundary_offset() - cfg.gamma;
    (0..horizon)
        .map(|k| {
            let at = |s: usize| [(s * STATE_SIZE + IDX_P, -d.x), (s * STATE_SIZE + IDX_P + 1, -d.y)];
            barrier_row(CbfKind::Global, k, &at(k + 1), &at(k), offset, cfg.alpha_glob, dt)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttitudeBounds {
    pub pitch: (f64, f64),
    pub roll: (f64, f64),
}

impl AttitudeBounds {
    /// Barrier values `[pitch − lo, hi − pitch, roll − lo, hi − roll]`.
    pub fn barriers(&self, roll: f64, pitch: f64) -> [f64; 4] {
        [pitch - self.pitch.0, self.pitch.1 - pitch, roll - self.roll.0, self.roll.1 - roll]
    }
}

/// Pitch/roll band around the plane inclination seen from heading `yaw`.
pub fn attitude_bounds(plane: &PlaneParams, yaw: f64, cfg: &SafetyConfig) -> Result<AttitudeBounds, SafetyError> {
    if plane.k3.abs() <= MIN_PLANE_K3 {
        return Err(SafetyError::PlaneTooSteep { k3: plane.k3 });
    }
    let (pitch, roll) = plane.slope_angles(yaw);
    Ok(AttitudeBounds {
        pitch: (pitch - cfg.delta_pitch, pitch + cfg.delta_pitch),
        roll: (roll - cfg.delta_roll, roll + cfg.delta_roll),
    })
}

/// Four local rows per horizon transition.
pub fn local_cbf_rows(
    plane: &PlaneParams,
    yaw: f64,
    cfg: &SafetyConfig,
    horizon: usize,
    dt: f64,
) -> Result<Vec<CbfRow>, SafetyError> {
    let b = attitude_bounds(plane, yaw, cfg)?;
    let a = cfg.alpha_local;
    let mut rows = Vec::with_capacity(4 * horizon);
    for k in 0..horizon {
        let at = |s: usize, idx: usize, sign: f64| [(s * STATE_SIZE + idx, sign)];
        rows.push(barrier_row(CbfKind::LocalPitchLo, k, &at(k + 1, IDX_PITCH, 1.0), &at(k, IDX_PITCH, 1.0), -b.pitch.0, a, dt));
        rows.push(barrier_row(CbfKind::LocalPitchHi, k, &at(k + 1, IDX_PITCH, -1.0), &at(k, IDX_PITCH, -1.0), b.pitch.1, a, dt));
        rows.push(barrier_row(CbfKind::LocalRollLo, k, &at(k + 1, IDX_ROLL, 1.0), &at(k, IDX_ROLL, 1.0), -b.roll.0, a, dt));
        rows.push(barrier_row(CbfKind::LocalRollHi, k, &at(k + 1, IDX_ROLL, -1.0), &at(k, IDX_ROLL, -1.0), b.roll.1, a, dt));
    }
    Ok(rows)
}
