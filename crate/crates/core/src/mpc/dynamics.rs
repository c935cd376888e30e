use nalgebra::{Matrix3, SMatrix, Vector3};

use super::{MpcConfig, MpcVector, IDX_OMEGA, IDX_P, IDX_PITCH, IDX_ROLL, IDX_V, IDX_YAW, STATE_SIZE};
use crate::geometry::{rot_z, rotation_from_euler, skew};
use crate::GRAVITY;

/// Discrete affine model `X[k+1] = A X[k] + B u[k] + C` with
/// `u = [f_FL, f_FR, f_RL, f_RR]` in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub a: SMatrix<f64, STATE_SIZE, STATE_SIZE>,
    pub b: SMatrix<f64, STATE_SIZE, 12>,
    pub c: MpcVector,
}

fn world_inertia(cfg: &MpcConfig, r: &Matrix3<f64>) -> Matrix3<f64> {
    let ib = Matrix3::from_diagonal(&Vector3::from(cfg.inertia));
    r * ib * r.transpose()
}

/// Forward-Euler discretisation of the rigid body linearised about zero roll
/// and pitch at heading `yaw_ref`, with the feet held at `feet`.
pub fn linearize_dynamics(
    state: &MpcVector,
    yaw_ref: f64,
    feet: &[Vector3<f64>; 4],
    cfg: &MpcConfig,
) -> Dynamics {
    let dt = cfg.dt;
    let rz = rot_z(yaw_ref);
    let inv_inertia = world_inertia(cfg, &rz).try_inverse().unwrap_or_else(Matrix3::zeros);
    let p = state.fixed_rows::<3>(IDX_P).into_owned();

    let mut a = SMatrix::<f64, STATE_SIZE, STATE_SIZE>::identity();
    a.fixed_view_mut::<3, 3>(IDX_ROLL, IDX_OMEGA).copy_from(&(rz.transpose() * dt));
    a.fixed_view_mut::<3, 3>(IDX_P, IDX_V).copy_from(&(Matrix3::identity() * dt));

    let mut b = SMatrix::<f64, STATE_SIZE, 12>::zeros();
    for (i, foot) in feet.iter().enumerate() {
        let r = foot - p;
        b.fixed_view_mut::<3, 3>(IDX_OMEGA, 3 * i).copy_from(&(inv_inertia * skew(&r) * dt));
        b.fixed_view_mut::<3, 3>(IDX_V, 3 * i).copy_from(&(Matrix3::identity() * (dt / cfg.mass)));
    }

    let mut c = MpcVector::zeros();
    c[IDX_V + 2] = -GRAVITY * dt;
    Dynamics { a, b, c }
}

/// Continuous-time rigid-body derivative with the full Euler-rate map,
/// orientation-dependent inertia and the gyroscopic term.
pub fn srb_derivative(x: &MpcVector, u: &[Vector3<f64>; 4], feet: &[Vector3<f64>; 4], cfg: &MpcConfig) -> MpcVector {
    let (roll, pitch, yaw) = (x[IDX_ROLL], x[IDX_PITCH], x[IDX_YAW]);
    let r = rotation_from_euler(roll, pitch, yaw);
    let p = x.fixed_rows::<3>(IDX_P).into_owned();
    let w = x.fixed_rows::<3>(IDX_OMEGA).into_owned();
    let v = x.fixed_rows::<3>(IDX_V).into_owned();

    let wb = r.transpose() * w;
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let euler_rate = Vector3::new(
        wb.x + (wb.y * sr + wb.z * cr) * sp / cp,
        wb.y * cr - wb.z * sr,
        (wb.y * sr + wb.z * cr) / cp,
    );

    let iw = world_inertia(cfg, &r);
    let mut torque = -w.cross(&(iw * w));
    let mut force = Vector3::new(0.0, 0.0, -GRAVITY * cfg.mass);
    for (f, foot) in u.iter().zip(feet) {
        torque += (foot - p).cross(f);
        force += f;
    }
    let w_dot = iw.try_inverse().unwrap_or_else(Matrix3::zeros) * torque;

    let mut dx = MpcVector::zeros();
    dx.fixed_rows_mut::<3>(IDX_ROLL).copy_from(&euler_rate);
    dx.fixed_rows_mut::<3>(IDX_P).copy_from(&v);
    dx.fixed_rows_mut::<3>(IDX_OMEGA).copy_from(&w_dot);
    dx.fixed_rows_mut::<3>(IDX_V).copy_from(&(force / cfg.mass));
    dx
}

/// One forward-Euler step of the nonlinear model.
pub fn srb_step(x: &MpcVector, u: &[Vector3<f64>; 4], feet: &[Vector3<f64>; 4], cfg: &MpcConfig) -> MpcVector {
    x + srb_derivative(x, u, feet, cfg) * cfg.dt
}
