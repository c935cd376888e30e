//! Reference implementations the library is checked against. They favour
//! brute force and textbook formulas over speed.
#![allow(dead_code)]

use legsafe_core::estimator::{NoiseConfig, ProprioSample, OBS_DIM, STATE_DIM};
use legsafe_core::geometry::{Leg, PlaneParams};
use legsafe_core::kinematics::KinematicsModel;
use legsafe_core::mpc::{QpProblem, QP_INFINITY};
use legsafe_core::GRAVITY;
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- QP

/// Optimum of a strictly convex QP by enumerating every candidate active
/// set: each row is off, at its lower bound or at its upper bound. The
/// equality-constrained minimiser of each independent set is kept when it
/// is primal feasible; the smallest objective wins.
pub fn qp_enumerate(qp: &QpProblem) -> Option<(DVector<f64>, f64)> {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let mut choices: Vec<Vec<Option<f64>>> = Vec::with_capacity(m);
    for i in 0..m {
        let (l, u) = (qp.l[i], qp.u[i]);
        let mut c = Vec::new();
        if l == u {
            c.push(Some(l));
        } else {
            c.push(None);
            if l > -QP_INFINITY {
                c.push(Some(l));
            }
            if u < QP_INFINITY {
                c.push(Some(u));
            }
        }
        choices.push(c);
    }
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut pick = vec![0usize; m];
    loop {
        let active: Vec<(usize, f64)> =
            (0..m).filter_map(|i| choices[i][pick[i]].map(|b| (i, b))).collect();
        if active.len() <= n {
            if let Some(x) = equality_qp(qp, &active) {
                let ax = &qp.a * &x;
                let feasible = (0..m).all(|i| {
                    let tol = 1e-9 * (1.0 + ax[i].abs());
                    ax[i] >= qp.l[i] - tol && ax[i] <= qp.u[i] + tol
                });
                if feasible {
                    let f = qp.objective(&x);
                    if best.as_ref().map_or(true, |(_, b)| f < *b) {
                        best = Some((x, f));
                    }
                }
            }
        }
        // Odometer increment over the per-row choices.
        let mut i = 0;
        loop {
            if i == m {
                return best;
            }
            pick[i] += 1;
            if pick[i] < choices[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// `min ½xᵀPx + qᵀx  s.t.  a_i·x = b_i` through the full KKT system.
fn equality_qp(qp: &QpProblem, active: &[(usize, f64)]) -> Option<DVector<f64>> {
    let n = qp.num_vars();
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    let mut rhs = DVector::zeros(n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    for j in 0..n {
        rhs[j] = -qp.q[j];
    }
    for (r, &(i, b)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = qp.a[(i, j)];
            kkt[(j, n + r)] = qp.a[(i, j)];
        }
        rhs[n + r] = b;
    }
    if k > 0 {
        let rows = DMatrix::from_fn(n, k, |j, r| qp.a[(active[r].0, j)]);
        let diag = rows.col_piv_qr().unpack_r().diagonal().abs();
        if diag.min() <= 1e-10 * diag.max() {
            return None;
        }
    }
    let sol = kkt.clone().full_piv_lu().solve(&rhs)?;
    if (&kkt * &sol - &rhs).amax() > 1e-10 * (1.0 + rhs.amax()) {
        return None;
    }
    Some(sol.rows(0, n).into_owned())
}

/// Random strictly convex QP with a known feasible point. Row kinds are
/// mixed (one-sided, two-sided, equality); at most four rows are two-sided
/// to keep enumeration cheap.
pub fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.random_range(2..=10);
    let m = rng.random_range(1..=12);
    let k = rng.random_range(1..=n);
    let mm = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
    let p = mm.transpose() * &mm + DMatrix::identity(n, n) * 1e-2;
    let q = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let ax0 = &a * &x0;
    let mut l = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    let (mut two_sided, mut equalities) = (0, 0);
    for i in 0..m {
        let lo = ax0[i] - rng.random_range(0.0..0.5);
        let hi = ax0[i] + rng.random_range(0.0..0.5);
        let mut kind = rng.random_range(0..4);
        if kind == 2 && two_sided >= 4 {
            kind = 0;
        }
        if kind == 3 && equalities + 1 >= n {
            kind = 1;
        }
        match kind {
            0 => (l[i], u[i]) = (lo, QP_INFINITY),
            1 => (l[i], u[i]) = (-QP_INFINITY, hi),
            2 => {
                two_sided += 1;
                (l[i], u[i]) = (lo, hi)
            }
            _ => {
                equalities += 1;
                (l[i], u[i]) = (ax0[i], ax0[i])
            }
        }
    }
    QpProblem::new(p, q, a, l, u).expect("well-formed QP")
}

// ---------------------------------------------------------------- plane

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi sweeps.
/// Returns eigenvalues and the matching eigenvectors as columns.
pub fn jacobi_eigen(mut a: Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let mut v = Matrix3::identity();
    for _ in 0..100 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off < 1e-300 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[(p, q)] == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            v *= rot;
        }
    }
    (a.diagonal(), v)
}

/// Upward unit normal of the least-squares plane through `points`.
pub fn plane_normal_oracle(points: &[Vector3<f64>]) -> Vector3<f64> {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let mut s = Matrix3::zeros();
    for p in points {
        for r in 0..3 {
            for c in 0..3 {
                s[(r, c)] += (p[r] - mean[r]) * (p[c] - mean[c]);
            }
        }
    }
    let (vals, vecs) = jacobi_eigen(s);
    let i = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let nrm = vecs.column(i).normalize();
    if nrm.z < 0.0 {
        -nrm
    } else {
        nrm
    }
}

pub fn unit_normal(p: &PlaneParams) -> Vector3<f64> {
    let n = p.normal().normalize();
    if n.z < 0.0 {
        -n
    } else {
        n
    }
}

// ---------------------------------------------------------------- Kalman filter

/// Dense textbook Kalman filter over `[p, v, feet]`, built entry by entry.
pub struct DenseKf {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub cfg: NoiseConfig,
}

impl DenseKf {
    pub fn predict(&mut self, sample: &ProprioSample, kin: &KinematicsModel, stance: &[bool; 4], dt: f64) {
        let mut a = DMatrix::<f64>::identity(STATE_DIM, STATE_DIM);
        let mut b = DVector::<f64>::zeros(STATE_DIM);
        let mut qd = DVector::<f64>::zeros(STATE_DIM);
        let acc = sample.orientation * sample.imu_accel - Vector3::new(0.0, 0.0, GRAVITY);
        for r in 0..3 {
            a[(r, 3 + r)] = dt;
            b[r] = 0.5 * acc[r] * dt * dt;
            b[3 + r] = acc[r] * dt;
            qd[r] = self.cfg.q_pos;
            qd[3 + r] = self.cfg.q_vel;
        }
        for leg in Leg::ALL {
            let i = leg.index();
            let vel = sample.foot_velocity_world(kin, leg);
            for r in 0..3 {
                let row = 6 + 3 * i + r;
                if stance[i] {
                    qd[row] = self.cfg.q_foot;
                } else {
                    a[(row, 3 + r)] = dt;
                    b[row] = vel[r] * dt;
                    qd[row] = self.cfg.q_foot * self.cfg.swing_q_scale;
                }
            }
        }
        self.x = &a * &self.x + b;
        self.p = &a * &self.p * a.transpose() + DMatrix::from_diagonal(&qd);
    }

    /// Update with the kinematic observation; `plane` blends foot heights.
    pub fn update(
        &mut self,
        sample: &ProprioSample,
        kin: &KinematicsModel,
        plane: Option<(&PlaneParams, [f64; 4])>,
        stance: &[bool; 4],
    ) {
        let mut h = DMatrix::<f64>::zeros(OBS_DIM, STATE_DIM);
        let mut z = DVector::<f64>::zeros(OBS_DIM);
        let mut rd = DVector::<f64>::zeros(OBS_DIM);
        let p_com = Vector3::new(self.x[0], self.x[1], self.x[2]);
        for leg in Leg::ALL {
            let i = leg.index();
            let off = sample.orientation * kin.foot_position(leg, &sample.joint_angles[i]);
            let vel = sample.foot_velocity_world(kin, leg);
            let scale = if stance[i] { 1.0 } else { self.cfg.swing_r_scale };
            for r in 0..3 {
                h[(3 * i + r, r)] = 1.0;
                h[(3 * i + r, 6 + 3 * i + r)] = -1.0;
                z[3 * i + r] = -off[r];
                rd[3 * i + r] = self.cfg.r_rel;
                h[(12 + 3 * i + r, 3 + r)] = 1.0;
                z[12 + 3 * i + r] = -vel[r];
                rd[12 + 3 * i + r] = self.cfg.r_vel * scale;
            }
            h[(24 + i, 6 + 3 * i + 2)] = 1.0;
            let foot = p_com + off;
            z[24 + i] = match plane {
                Some((pl, w)) => {
                    let on_plane = -(pl.k1 * foot.x + pl.k2 * foot.y + pl.d) / pl.k3;
                    (1.0 - w[i]) * foot.z + w[i] * on_plane
                }
                None => foot.z,
            };
            rd[24 + i] = self.cfg.r_foot_z * scale;
        }
        let s = &h * &self.p * h.transpose() + DMatrix::from_diagonal(&rd);
        let s_inv = s.try_inverse().expect("innovation covariance invertible");
        let k = &self.p * h.transpose() * s_inv;
        self.x = &self.x + &k * (z - &h * &self.x);
        // Joseph form.
        let ikh = DMatrix::<f64>::identity(STATE_DIM, STATE_DIM) - &k * &h;
        self.p = &ikh * &self.p * ikh.transpose() + &k * DMatrix::from_diagonal(&rd) * k.transpose();
    }
}

// ---------------------------------------------------------------- geometry

/// Convex hull (Andrew's monotone chain), counter-clockwise without
/// repeated endpoints.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Inside or on a counter-clockwise convex polygon.
pub fn in_convex_polygon(poly: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    poly.len() >= 3
        && (0..poly.len()).all(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            (b - a).perp(&(p - a)) >= 0.0
        })
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}
