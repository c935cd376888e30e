use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    assemble_qp, solve_qp_warm, CondensedQp, GaitSchedule, MpcConfig, MpcError, MpcState, MpcVector, QpError,
    IDX_OMEGA, IDX_V,
};
use crate::geometry::{Leg, PlaneParams};
use crate::safety::CbfRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum PlanStatus {
    /// Solved with every barrier row.
    Optimal,
    /// Solved after dropping barrier rows for steps beyond `kept_through`.
    Relaxed { kept_through: usize },
    /// No acceptable plan; the caller must stop.
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    pub status: PlanStatus,
    pub forces: Vec<[Vector3<f64>; 4]>,
    /// `X[0..=N]`.
    pub states: Vec<MpcVector>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub barrier_rows: usize,
    pub active_barrier_rows: usize,
    pub message: Option<String>,
}

impl MpcPlan {
    fn stop(x0: &MpcState, horizon: usize, message: String) -> Self {
        let mut x = *x0;
        x.v_com = Vector3::zeros();
        x.omega = Vector3::zeros();
        MpcPlan {
            status: PlanStatus::Stop,
            forces: vec![[Vector3::zeros(); 4]; horizon],
            states: vec![x.to_vector(); horizon + 1],
            objective: f64::NAN,
            iterations: 0,
            kkt_residual: f64::NAN,
            barrier_rows: 0,
            active_barrier_rows: 0,
            message: Some(message),
        }
    }

    /// Planned CoM velocity after the first step.
    pub fn next_velocity(&self) -> Vector3<f64> {
        let x = self.states.get(1).unwrap_or(&self.states[0]);
        Vector3::new(x[IDX_V], x[IDX_V + 1], x[IDX_V + 2])
    }

    /// Planned world angular velocity after the first step.
    pub fn next_omega(&self) -> Vector3<f64> {
        let x = self.states.get(1).unwrap_or(&self.states[0]);
        Vector3::new(x[IDX_OMEGA], x[IDX_OMEGA + 1], x[IDX_OMEGA + 2])
    }
}

/// Solves the condensed MPC each tick. When the barrier rows make the problem
/// infeasible, rows are dropped from the far end of the horizon first; the
/// first transition is always kept.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub cfg: MpcConfig,
    warm: Option<(Vec<(usize, Leg)>, usize, DVector<f64>, DVector<f64>)>,
}

impl MpcController {
    pub fn new(cfg: MpcConfig) -> Result<Self, MpcError> {
        cfg.validate()?;
        Ok(MpcController { cfg, warm: None })
    }

    pub fn solve(
        &mut self,
        x0: &MpcState,
        reference: &[MpcState],
        gait: &GaitSchedule,
        plane: &PlaneParams,
        feet: &[Vector3<f64>; 4],
        barrier_rows: &[CbfRow],
    ) -> Result<MpcPlan, MpcError> {
        let horizon = self.cfg.horizon;
        let mut kept_through = barrier_rows.iter().map(|r| r.step).max().unwrap_or(0);
        let full = kept_through;
        loop {
            let rows: Vec<CbfRow> = barrier_rows.iter().filter(|r| r.step <= kept_through).cloned().collect();
            let cqp = assemble_qp(x0, reference, gait, &rows, &self.cfg, plane, feet)?;
            if let Some((kind, step)) = cqp.violated_constant_rows.first() {
                self.warm = None;
                return Ok(MpcPlan::stop(x0, horizon, format!("barrier {kind:?} at step {step} already violated")));
            }
            let warm = self
                .warm
                .as_ref()
                .filter(|(layout, m, _, _)| *layout == cqp.layout && *m == cqp.qp.num_rows())
                .map(|(_, _, x, y)| (x, y));
            match solve_qp_warm(&cqp.qp, &self.cfg.solver, warm) {
                Ok(sol) => {
                    let plan = self.plan_from(&cqp, &sol.x, sol.objective, sol.iterations, sol.residuals.max(), &rows);
                    self.warm = Some((cqp.layout.clone(), cqp.qp.num_rows(), sol.x, sol.y));
                    let status = if kept_through == full { PlanStatus::Optimal } else { PlanStatus::Relaxed { kept_through } };
                    return Ok(MpcPlan { status, ..plan });
                }
                Err(err @ (QpError::Infeasible { .. } | QpError::MaxIterations { .. })) => {
                    self.warm = None;
                    if rows.is_empty() || kept_through == 0 {
                        return Ok(MpcPlan::stop(x0, horizon, err.to_string()));
                    }
                    kept_through -= 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn plan_from(
        &self,
        cqp: &CondensedQp,
        u: &DVector<f64>,
        objective: f64,
        iterations: usize,
        kkt_residual: f64,
        rows: &[CbfRow],
    ) -> MpcPlan {
        let stacked = cqp.stacked_states(u);
        let active = rows.iter().filter(|r| r.slack(stacked.as_slice()) <= 1e-6).count();
        MpcPlan {
            status: PlanStatus::Optimal,
            forces: cqp.expand_forces(u),
            states: cqp.predicted_states(u),
            objective,
            iterations,
            kkt_residual,
            barrier_rows: rows.len(),
            active_barrier_rows: active,
            message: None,
        }
    }
}
