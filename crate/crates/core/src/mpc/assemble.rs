use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::{linearize_dynamics, GaitSchedule, MpcConfig, MpcError, MpcState, MpcVector, QpProblem, STATE_SIZE};
use crate::geometry::{Leg, PlaneParams};
use crate::safety::{CbfKind, CbfRow};

/// Rows `[t1; t2; n]` rotating world vectors into the support-plane frame,
/// with `t1` the heading projected onto the plane.
pub fn plane_frame(yaw: f64, plane: &PlaneParams) -> Matrix3<f64> {
    let n = plane.normal().try_normalize(0.0).unwrap_or_else(Vector3::z);
    let h = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let t1 = (h - n * h.dot(&n)).try_normalize(1e-12).unwrap_or_else(|| {
        // heading along the normal: pick any tangent
        let alt = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        (alt - n * alt.dot(&n)).normalize()
    });
    let t2 = n.cross(&t1);
    Matrix3::from_rows(&[t1.transpose(), t2.transpose(), n.transpose()])
}

/// Per-leg force constraints `l ≤ W f ≤ u`: four pyramid faces
/// `±f_t ≤ μ f_n` in the plane frame, then `f_n ≥ f_min` and `f_n ≤ f_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionRows {
    pub w: SMatrix<f64, 6, 3>,
    pub l: [f64; 6],
    pub u: [f64; 6],
}

impl FrictionRows {
    pub fn slack(&self, f: &Vector3<f64>) -> [f64; 6] {
        let wf = self.w * f;
        std::array::from_fn(|i| (wf[i] - self.l[i]).min(self.u[i] - wf[i]))
    }

    pub fn satisfied(&self, f: &Vector3<f64>, tol: f64) -> bool {
        self.slack(f).iter().all(|&s| s >= -tol)
    }
}

pub fn friction_cone_rows(yaw: f64, plane: &PlaneParams, mu: f64, f_min: f64, f_max: f64) -> FrictionRows {
    let r = plane_frame(yaw, plane);
    let (t1, t2, n) = (r.row(0), r.row(1), r.row(2));
    let mut w = SMatrix::<f64, 6, 3>::zeros();
    w.set_row(0, &(t1 - n * mu));
    w.set_row(1, &(-t1 - n * mu));
    w.set_row(2, &(t2 - n * mu));
    w.set_row(3, &(-t2 - n * mu));
    w.set_row(4, &n);
    w.set_row(5, &n);
    let inf = f64::INFINITY;
    FrictionRows { w, l: [-inf, -inf, -inf, -inf, f_min, -inf], u: [0.0, 0.0, 0.0, 0.0, inf, f_max] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RowKind {
    Friction { step: usize, leg: Leg },
    ForceMin { step: usize, leg: Leg },
    ForceMax { step: usize, leg: Leg },
    Barrier { step: usize, kind: CbfKind },
}

/// QP over stance forces plus the maps back to forces and states.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    pub qp: QpProblem,
    /// `(step, leg)` of each 3-variable force block.
    pub layout: Vec<(usize, Leg)>,
    /// State trajectory with all forces zero, `X[0..=N]`.
    pub free_response: Vec<MpcVector>,
    /// `∂X / ∂U`, `12(N+1) × n`.
    pub sensitivity: DMatrix<f64>,
    pub row_kinds: Vec<RowKind>,
    /// Barrier rows that do not depend on the forces and are violated.
    pub violated_constant_rows: Vec<(CbfKind, usize)>,
}

impl CondensedQp {
    pub fn horizon(&self) -> usize {
        self.free_response.len() - 1
    }

    pub fn expand_forces(&self, u: &DVector<f64>) -> Vec<[Vector3<f64>; 4]> {
        let mut out = vec![[Vector3::zeros(); 4]; self.horizon()];
        for (j, &(k, leg)) in self.layout.iter().enumerate() {
            out[k][leg.index()] = Vector3::new(u[3 * j], u[3 * j + 1], u[3 * j + 2]);
        }
        out
    }

    /// Stacked predicted states `[X[0]; …; X[N]]`.
    pub fn stacked_states(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut x = &self.sensitivity * u;
        for (k, xf) in self.free_response.iter().enumerate() {
            let mut seg = x.rows_mut(k * STATE_SIZE, STATE_SIZE);
            seg += xf;
        }
        x
    }

    pub fn predicted_states(&self, u: &DVector<f64>) -> Vec<MpcVector> {
        let x = self.stacked_states(u);
        (0..=self.horizon()).map(|k| MpcVector::from_iterator(x.rows(k * STATE_SIZE, STATE_SIZE).iter().copied())).collect()
    }
}

/// Condenses the horizon onto the stance forces.
///
/// `reference[k]` is the target for `X[k+1]`; the cost pairs `u[k]` with the
/// state it produces.
#[allow(clippy::too_many_arguments)]
pub fn assemble_qp(
    x0: &MpcState,
    reference: &[MpcState],
    gait: &GaitSchedule,
    cbf_rows: &[CbfRow],
    cfg: &MpcConfig,
    plane: &PlaneParams,
    feet: &[Vector3<f64>; 4],
) -> Result<CondensedQp, MpcError> {
    let n_steps = cfg.horizon;
    if reference.len() != n_steps {
        return Err(MpcError::DimensionMismatch(format!("{} reference states for horizon {n_steps}", reference.len())));
    }
    if gait.horizon() != n_steps {
        return Err(MpcError::DimensionMismatch(format!("gait covers {} steps, horizon is {n_steps}", gait.horizon())));
    }
    let stacked_len = STATE_SIZE * (n_steps + 1);
    if let Some(r) = cbf_rows.iter().find(|r| r.coeffs.iter().any(|&(i, _)| i >= stacked_len)) {
        return Err(MpcError::DimensionMismatch(format!("barrier row at step {} indexes past the horizon", r.step)));
    }

    let x0v = x0.to_vector();
    let yaw_ref = reference[0].euler.z;
    let dynamics = linearize_dynamics(&x0v, yaw_ref, feet, cfg);

    let layout: Vec<(usize, Leg)> = (0..n_steps)
        .flat_map(|k| Leg::ALL.into_iter().filter(move |l| gait.stance[k][l.index()]).map(move |l| (k, l)))
        .collect();
    let nvar = 3 * layout.len();

    let mut free_response = Vec::with_capacity(n_steps + 1);
    free_response.push(x0v);
    for k in 0..n_steps {
        let next = dynamics.a * free_response[k] + dynamics.c;
        free_response.push(next);
    }

    let mut sens = DMatrix::zeros(stacked_len, nvar);
    let a_dyn = DMatrix::from_iterator(STATE_SIZE, STATE_SIZE, dynamics.a.iter().copied());
    for k in 0..n_steps {
        let prev = sens.rows(k * STATE_SIZE, STATE_SIZE).into_owned();
        let mut next = &a_dyn * prev;
        for (j, &(step, leg)) in layout.iter().enumerate() {
            if step == k {
                let b = dynamics.b.fixed_view::<STATE_SIZE, 3>(0, 3 * leg.index());
                next.view_mut((0, 3 * j), (STATE_SIZE, 3)).copy_from(&b);
            }
        }
        sens.rows_mut((k + 1) * STATE_SIZE, STATE_SIZE).copy_from(&next);
    }

    let q_diag = DVector::from_iterator(STATE_SIZE, cfg.q_weights.iter().copied());
    let mut hess = DMatrix::zeros(nvar, nvar);
    let mut grad = DVector::zeros(nvar);
    for k in 1..=n_steps {
        let s_k = sens.rows(k * STATE_SIZE, STATE_SIZE);
        let mut qs = s_k.clone_owned();
        for (i, mut row) in qs.row_iter_mut().enumerate() {
            row *= q_diag[i];
        }
        hess += s_k.tr_mul(&qs);
        let err = free_response[k] - reference[k - 1].to_vector();
        let q_err = DVector::from_iterator(STATE_SIZE, err.iter().zip(q_diag.iter()).map(|(e, w)| e * w));
        grad += s_k.tr_mul(&q_err);
    }
    for (j, &(_, leg)) in layout.iter().enumerate() {
        for c in 0..3 {
            hess[(3 * j + c, 3 * j + c)] += cfg.r_weights[3 * leg.index() + c];
        }
    }
    let mut p = hess * 2.0;
    p = (&p + p.transpose()) * 0.5;
    let q = grad * 2.0;

    let friction = friction_cone_rows(yaw_ref, plane, cfg.mu, cfg.f_min, cfg.f_max);
    let mut rows: Vec<(DVector<f64>, f64, f64, RowKind)> = Vec::new();
    for (j, &(step, leg)) in layout.iter().enumerate() {
        for r in 0..6 {
            let mut coeffs = DVector::zeros(nvar);
            for c in 0..3 {
                coeffs[3 * j + c] = friction.w[(r, c)];
            }
            let kind = match r {
                0..=3 => RowKind::Friction { step, leg },
                4 => RowKind::ForceMin { step, leg },
                _ => RowKind::ForceMax { step, leg },
            };
            rows.push((coeffs, friction.l[r], friction.u[r], kind));
        }
    }

    let free_stacked = DVector::from_iterator(stacked_len, free_response.iter().flat_map(|x| x.iter().copied()));
    let mut violated = Vec::new();
    for row in cbf_rows {
        let mut coeffs = DVector::zeros(nvar);
        let mut constant = 0.0;
        for &(i, c) in &row.coeffs {
            coeffs += sens.row(i).transpose() * c;
            constant += c * free_stacked[i];
        }
        let lower = row.bound - constant;
        if coeffs.amax() <= 1e-14 {
            if lower > 1e-9 {
                violated.push((row.kind, row.step));
            }
            continue;
        }
        rows.push((coeffs, lower, f64::INFINITY, RowKind::Barrier { step: row.step, kind: row.kind }));
    }

    let m = rows.len();
    let mut a = DMatrix::zeros(m, nvar);
    let mut l = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    let mut row_kinds = Vec::with_capacity(m);
    for (i, (coeffs, lo, hi, kind)) in rows.into_iter().enumerate() {
        a.row_mut(i).copy_from(&coeffs.transpose());
        l[i] = lo;
        u[i] = hi;
        row_kinds.push(kind);
    }
    let qp = QpProblem::new(p, q, a, l, u)?;
    Ok(CondensedQp { qp, layout, free_response, sensitivity: sens, row_kinds, violated_constant_rows: violated })
}
