use nalgebra::{Vector2, Vector3};

use super::gait::{nominal_foot_xy, BodyMotion, GaitGenerator};
use super::metrics::{compute_metrics, RunMetrics};
use super::scenario::Scenario;
use super::sensors::{SensorSynth, TruthState};
use super::terrain::Terrain;
use super::trace::TraceRow;
use super::{RunMode, SimError};
use crate::contact::{estimate_contact, force_threshold_contact, ContactBelief, ContactHysteresis};
use crate::estimator::{build_observation, predict, update, EstimatorError, EstimatorState, StateMatrix};
use crate::geometry::{euler_rates_to_body_omega, rot_z, wrap_angle, Leg, PlaneParams};
use crate::mpc::{GaitSchedule, MpcController, MpcState};
use crate::safety::{attitude_bounds, global_barrier, global_cbf_rows, local_cbf_rows, locate_hazard, HazardInfo, HazardLatch};
use crate::terrain_map::{build_support_triangles, fit_plane_pca, fit_support_plane, Footprint, GridMap2p5};

/// Largest terrain-following tilt of the scripted body, rad.
const MAX_TILT: f64 = 0.5;
/// Natural frequency of the vertical tracker, rad/s.
const HEIGHT_OMEGA: f64 = 2.0 * std::f64::consts::PI * 3.0;
const MAX_VERTICAL_ACCEL: f64 = 3.0 * crate::GRAVITY;
const MAX_TILT_RATE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Stop after this simulated time instead of the scenario duration.
    pub stop_at: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRow>,
    pub map: GridMap2p5,
    /// True xy of every stance phase the estimator latched as contact.
    pub footholds: Vec<Vector2<f64>>,
    pub terrain: Terrain,
}

pub fn run_scenario(scenario: &Scenario, mode: RunMode) -> Result<RunOutput, SimError> {
    run_scenario_with(scenario, mode, &RunOptions::default())
}

fn module_err(tick: usize, time: f64, module: &'static str, e: impl std::fmt::Display) -> SimError {
    SimError::Module { tick, time, module, message: e.to_string() }
}

/// World xy of the nominal feet for a body pose.
fn nominal_feet(scenario: &Scenario, xy: &Vector2<f64>, yaw: f64) -> [Vector2<f64>; 4] {
    let r = rot_z(yaw).fixed_view::<2, 2>(0, 0).into_owned();
    Leg::ALL.map(|leg| xy + r * nominal_foot_xy(&scenario.kinematics, leg))
}

/// CoM height and `(roll, pitch)` that the scripted body tracks.
fn body_targets(scenario: &Scenario, terrain: &Terrain, xy: &Vector2<f64>, yaw: f64) -> (f64, f64, f64) {
    let pts = nominal_feet(scenario, xy, yaw).map(|p| Vector3::new(p.x, p.y, terrain.height(p.x, p.y)));
    let z = pts.iter().map(|p| p.z).sum::<f64>() / 4.0 + scenario.body.nominal_height;
    let (pitch, roll) = fit_plane_pca(&pts).map(|pl| pl.slope_angles(yaw)).unwrap_or((0.0, 0.0));
    (z, roll.clamp(-MAX_TILT, MAX_TILT), pitch.clamp(-MAX_TILT, MAX_TILT))
}

fn footprint(scenario: &Scenario, xy: &Vector2<f64>, yaw: f64) -> Footprint {
    let [l, w] = scenario.body.footprint;
    let (s, c) = yaw.sin_cos();
    Footprint {
        center: *xy,
        half_extents: Vector2::new(0.5 * (c.abs() * l + s.abs() * w), 0.5 * (s.abs() * l + c.abs() * w)),
    }
}

struct Command {
    velocity: Vector2<f64>,
    yaw: Option<f64>,
}

fn command(scenario: &Scenario, t: f64) -> Command {
    match scenario.command_at(t) {
        Some(c) => Command { velocity: Vector2::from(c.velocity), yaw: c.yaw_deg.map(f64::to_radians) },
        None => Command { velocity: Vector2::zeros(), yaw: None },
    }
}

/// Runs the closed loop: scripted (or MPC-driven) truth, synthetic sensors,
/// contact estimation, Kalman filter, map and support plane, hazard search
/// and, in the barrier modes, the MPC.
pub fn run_scenario_with(scenario: &Scenario, mode: RunMode, opts: &RunOptions) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    let s = scenario;
    let dt = s.dt();
    let duration = opts.stop_at.map_or(s.duration, |t| t.min(s.duration));
    let ticks = (duration / dt).round() as usize;
    let terrain = s.terrain.realize(s.seed);
    let kin = &s.kinematics;

    let xy0 = Vector2::from(s.start.position);
    let yaw0 = s.start.yaw_deg.to_radians();
    let (z0, roll0, pitch0) = body_targets(s, &terrain, &xy0, yaw0);
    let mut gait = GaitGenerator::new(s.gait, &BodyMotion { com_xy: xy0, yaw: yaw0, velocity_xy: Vector2::zeros() }, kin, &terrain);
    let mut truth = TruthState {
        t: 0.0,
        p_com: Vector3::new(xy0.x, xy0.y, z0),
        v_com: Vector3::zeros(),
        accel: Vector3::zeros(),
        euler: Vector3::new(roll0, pitch0, yaw0),
        omega_body: Vector3::zeros(),
        feet: *gait.feet(),
        foot_velocities: [Vector3::zeros(); 4],
        contacts: [true; 4],
        phases: [0.0; 4],
    };
    let mut sensors = SensorSynth::new(
        s.seed,
        s.noise,
        s.pseudo_contacts.clone(),
        s.body.force_gain,
        s.mpc.mass,
        s.contact.f_mid,
        s.gait.duty,
    );

    let mut est = EstimatorState::new(truth.p_com, truth.v_com, truth.feet, StateMatrix::identity() * 1e-6);
    let mut hysteresis = ContactHysteresis::default();
    let mut contact_positions = truth.feet;
    let mut map = GridMap2p5::covering(s.map.min.into(), s.map.max.into(), s.map.resolution)
        .map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;
    let mut plane: Option<PlaneParams> = None;

    let mut controller = if mode.uses_mpc() {
        Some(MpcController::new(s.mpc.clone()).map_err(|e| SimError::ScenarioInvalid(e.to_string()))?)
    } else {
        None
    };
    let mut latch = HazardLatch::default();
    let mut planned_v = Vector2::zeros();
    let mut planned_omega = Vector3::zeros();
    let mut last_mpc_slot: Option<u64> = None;
    let mut yaw_target = yaw0;

    let mut trace = Vec::with_capacity(ticks);
    let mut fell_at = None;
    let mut unreachable_ticks = 0;
    let mut footholds: Vec<Vector2<f64>> = truth.feet.iter().map(|f| f.xy()).collect();
    let mut touchdown_pending = [false; 4];

    for tick in 1..=ticks {
        let t_prev = (tick - 1) as f64 * dt;
        let t = tick as f64 * dt;
        let cmd = command(s, t_prev);
        if let Some(y) = cmd.yaw {
            yaw_target = y;
        } else if cmd.velocity.norm() > 1e-9 {
            yaw_target = cmd.velocity.y.atan2(cmd.velocity.x);
        }

        // truth
        let b = &s.body;
        let yaw = truth.euler.z;
        let yaw_rate = (wrap_angle(yaw_target - yaw) / dt).clamp(-b.max_yaw_rate, b.max_yaw_rate);
        let new_yaw = yaw + yaw_rate * dt;
        let v_xy = truth.v_com.xy();
        let new_v_xy = if mode.uses_mpc() {
            planned_v
        } else {
            let mut a = (cmd.velocity - v_xy) / b.velocity_tau;
            if a.norm() > b.max_accel {
                a *= b.max_accel / a.norm();
            }
            v_xy + a * dt
        };
        let xy = truth.p_com.xy();
        let next_xy = xy + (v_xy + new_v_xy) * (0.5 * dt);
        let (z_target, roll_target, pitch_target) = body_targets(s, &terrain, &next_xy, new_yaw);
        let (z_ahead, _, _) = body_targets(s, &terrain, &(next_xy + new_v_xy * dt), new_yaw);
        let z_rate = (z_ahead - z_target) / dt;
        let az = (HEIGHT_OMEGA * HEIGHT_OMEGA * (z_target - truth.p_com.z) + 2.0 * HEIGHT_OMEGA * (z_rate - truth.v_com.z))
            .clamp(-MAX_VERTICAL_ACCEL, MAX_VERTICAL_ACCEL);
        let new_v = Vector3::new(new_v_xy.x, new_v_xy.y, truth.v_com.z + az * dt);
        let new_p = truth.p_com + (truth.v_com + new_v) * (0.5 * dt);
        let rates = if mode.uses_mpc() {
            let planned = rot_z(yaw).transpose() * planned_omega;
            Vector3::new(planned.x, planned.y, yaw_rate)
        } else {
            Vector3::new(
                ((roll_target - truth.euler.x) / b.attitude_tau).clamp(-MAX_TILT_RATE, MAX_TILT_RATE),
                ((pitch_target - truth.euler.y) / b.attitude_tau).clamp(-MAX_TILT_RATE, MAX_TILT_RATE),
                yaw_rate,
            )
        };
        let new_euler = truth.euler + rates * dt;
        let body_motion = BodyMotion { com_xy: new_p.xy(), yaw: new_euler.z, velocity_xy: new_v.xy() };
        let prev_feet = truth.feet;
        let prev_contacts = truth.contacts;
        let out = gait.advance(t, &body_motion, kin, &terrain);
        truth = TruthState {
            t,
            accel: (new_v - truth.v_com) / dt,
            p_com: new_p,
            v_com: new_v,
            euler: new_euler,
            omega_body: euler_rates_to_body_omega(new_euler.x, new_euler.y, &rates),
            feet: out.feet,
            foot_velocities: std::array::from_fn(|i| (out.feet[i] - prev_feet[i]) / dt),
            contacts: out.contacts,
            phases: out.phases,
        };
        for i in 0..4 {
            if out.contacts[i] && !prev_contacts[i] {
                touchdown_pending[i] = true;
            } else if !out.contacts[i] {
                touchdown_pending[i] = false;
            }
        }

        let (sample, labels) = sensors.sample(&truth, kin);

        // contact
        let coupled = mode.terrain_coupled();
        let (beliefs, stance) = if coupled {
            let guess = est.p_com + est.v_com * dt;
            let beliefs = Leg::ALL.map(|leg| {
                let foot = guess + sample.foot_offset_world(kin, leg);
                estimate_contact(leg, &foot, sample.foot_forces[leg.index()], plane.as_ref(), &s.contact)
            });
            let probs = beliefs.map(|b| b.prob);
            (beliefs, hysteresis.update(&probs))
        } else {
            let stance = Leg::ALL.map(|leg| force_threshold_contact(sample.foot_forces[leg.index()], &s.contact));
            (Leg::ALL.map(|leg| ContactBelief::binary(leg, stance[leg.index()])), stance)
        };
        let probs = beliefs.map(|b| b.prob);

        // estimator
        let est_err = |e: EstimatorError| module_err(tick, t, "state_estimator", e);
        let predicted = predict(&est, &sample, kin, &stance, dt, &s.estimator).map_err(est_err)?;
        let obs = if coupled {
            match build_observation(&sample, kin, plane.as_ref(), &probs, &predicted) {
                Err(EstimatorError::PlaneTooSteep { .. }) => build_observation(&sample, kin, None, &[0.0; 4], &predicted),
                other => other,
            }
        } else {
            build_observation(&sample, kin, None, &[0.0; 4], &predicted)
        }
        .map_err(est_err)?;
        est = update(&predicted, &obs, &stance, &s.estimator).map_err(est_err)?;

        // map and support plane
        for i in 0..4 {
            if stance[i] {
                contact_positions[i] = est.p_feet[i];
                if touchdown_pending[i] {
                    footholds.push(truth.feet[i].xy());
                    touchdown_pending[i] = false;
                }
            }
        }
        map.update_terrain(&build_support_triangles(&contact_positions, &probs));
        let est_xy = est.p_com.xy();
        if let Ok(p) = fit_support_plane(&map, &footprint(s, &est_xy, new_euler.z)) {
            if p.normalized {
                plane = Some(p);
            }
        }

        // barriers
        let safety_plane = plane.unwrap_or_else(|| PlaneParams::horizontal(est.p_com.z - s.body.nominal_height));
        let hazard = if cmd.velocity.norm() > 1e-9 {
            latch.update(locate_hazard(&map, &est_xy, &safety_plane, &cmd.velocity, &s.safety))
        } else {
            latch.update(HazardInfo::none(Vector2::zeros()))
        };
        let h_glob = global_barrier(&hazard, &s.safety, &est_xy);
        let h_glob_true = global_barrier(&hazard, &s.safety, &truth.p_com.xy());
        let h_local = attitude_bounds(&safety_plane, new_euler.z, &s.safety)
            .ok()
            .map(|bounds| bounds.barriers(new_euler.x, new_euler.y));

        // MPC
        let mut mpc_status = None;
        let mut mpc_kkt = None;
        let slot = (t * s.rates.mpc_hz + 1e-9).floor() as u64;
        if let Some(ctl) = controller.as_mut() {
            if last_mpc_slot != Some(slot) {
                last_mpc_slot = Some(slot);
                let cfg = &ctl.cfg;
                let (n, mpc_dt) = (cfg.horizon, cfg.dt);
                let omega_world = sample.orientation * sample.imu_omega;
                let x0 = MpcState { euler: new_euler, p_com: est.p_com, omega: omega_world, v_com: est.v_com };
                let reference: Vec<MpcState> = (1..=n)
                    .map(|k| {
                        let h = k as f64 * mpc_dt;
                        let xy = est_xy + cmd.velocity * h;
                        let z = safety_plane.height_at(xy.x, xy.y).map_or(est.p_com.z, |z| z + s.body.nominal_height);
                        let turn = wrap_angle(yaw_target - new_euler.z).clamp(-b.max_yaw_rate * h, b.max_yaw_rate * h);
                        let yaw_ref = new_euler.z + turn;
                        let (pitch, roll) = safety_plane.slope_angles(yaw_ref);
                        MpcState {
                            euler: Vector3::new(roll, pitch, yaw_ref),
                            p_com: Vector3::new(xy.x, xy.y, z),
                            omega: Vector3::new(0.0, 0.0, yaw_rate),
                            v_com: Vector3::new(cmd.velocity.x, cmd.velocity.y, 0.0),
                        }
                    })
                    .collect();
                let schedule = if s.gait.duty >= 1.0 {
                    GaitSchedule::standing(n)
                } else {
                    GaitSchedule::periodic(s.gait.period, s.gait.duty, s.gait.offsets, t, mpc_dt, n)
                };
                let rows = if mode.barriers() {
                    let mut rows = global_cbf_rows(&hazard, &s.safety, n, mpc_dt);
                    if let Ok(local) = local_cbf_rows(&safety_plane, new_euler.z, &s.safety, n, mpc_dt) {
                        rows.extend(local);
                    }
                    rows
                } else {
                    Vec::new()
                };
                let plan = ctl
                    .solve(&x0, &reference, &schedule, &safety_plane, &est.p_feet, &rows)
                    .map_err(|e| module_err(tick, t, "srb_mpc", e))?;
                planned_v = plan.next_velocity().xy();
                planned_omega = plan.next_omega();
                mpc_status = Some(plan.status);
                mpc_kkt = plan.kkt_residual.is_finite().then_some(plan.kkt_residual);
            }
        }

        trace.push(TraceRow {
            t,
            true_p: truth.p_com.into(),
            est_p: est.p_com.into(),
            true_v: truth.v_com.into(),
            est_v: est.v_com.into(),
            euler: truth.euler.into(),
            true_contact: truth.contacts,
            stance,
            contact_prob: probs,
            force: sample.foot_forces,
            pseudo: labels.pseudo,
            plane,
            h_glob,
            h_glob_true,
            h_local,
            mpc_status,
            mpc_kkt,
            cmd_v: cmd.velocity.into(),
        });
        unreachable_ticks += usize::from(!labels.reachable);
        let clearance = truth.p_com.z - terrain.height(truth.p_com.x, truth.p_com.y);
        if !(clearance > 0.5 * s.body.nominal_height && clearance < 2.0 * s.body.nominal_height) {
            fell_at = Some(t);
            break;
        }
    }

    let mut metrics = compute_metrics(&trace, &terrain, &s.regions, s.contact.f_mid, (&s.name, mode, s.seed));
    metrics.fell_at = fell_at;
    metrics.unreachable_ticks = unreachable_ticks;
    Ok(RunOutput { metrics, trace, map, footholds, terrain })
}
