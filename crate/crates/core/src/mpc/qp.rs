//! Dense operator-splitting QP solver.
//!
//! Solves `min ½ xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u` with the ADMM iteration
//! used by OSQP (Ruiz equilibration, adaptive step size, over-relaxation),
//! followed by a polish step that solves the equality-constrained problem on
//! the guessed active set. Dual variables follow the sign convention
//! `Px + q + Aᵀy = 0`, `y_i > 0` on active upper bounds, `y_i < 0` on active
//! lower bounds.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bounds at or beyond this magnitude are treated as infinite.
pub const QP_INFINITY: f64 = 1e20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("problem is not convex (Hessian not positive semidefinite)")]
    NonConvex,
    #[error("problem is primal infeasible")]
    Infeasible { certificate: DVector<f64> },
    #[error("problem is unbounded below")]
    Unbounded { direction: DVector<f64> },
    #[error("no solution within {iterations} iterations (max KKT residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        l: DVector<f64>,
        u: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = q.len();
        let m = l.len();
        if p.shape() != (n, n) {
            return Err(QpError::DimensionMismatch(format!("P is {:?}, expected ({n}, {n})", p.shape())));
        }
        if a.shape() != (m, n) && !(m == 0 && a.nrows() == 0) {
            return Err(QpError::DimensionMismatch(format!("A is {:?}, expected ({m}, {n})", a.shape())));
        }
        if u.len() != m {
            return Err(QpError::DimensionMismatch(format!("u has {} rows, l has {m}", u.len())));
        }
        if !p.iter().chain(q.iter()).chain(a.iter()).all(|v| v.is_finite()) {
            return Err(QpError::DimensionMismatch("non-finite entries in P, q or A".into()));
        }
        if l.iter().zip(u.iter()).any(|(lo, hi)| lo.is_nan() || hi.is_nan() || lo > hi) {
            return Err(QpError::DimensionMismatch("bounds must satisfy l <= u".into()));
        }
        let scale = p.amax().max(1.0);
        if (&p - p.transpose()).amax() > 1e-9 * scale {
            return Err(QpError::NonConvex);
        }
        let a = if a.shape() == (m, n) { a } else { DMatrix::zeros(m, n) };
        Ok(QpProblem { p, q, a, l, u })
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub check_every: usize,
    pub adaptive_rho: bool,
    pub scaling_iters: usize,
    pub polish: bool,
    pub polish_delta: f64,
    pub polish_refine_iters: usize,
    /// Iteration after which a polish is also tried before the ADMM tolerances are met.
    pub early_polish_after: usize,
    /// Required bound on every KKT residual of an accepted solution.
    pub kkt_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-5,
            eps_rel: 1e-5,
            eps_infeasible: 1e-6,
            max_iter: 20_000,
            check_every: 10,
            adaptive_rho: true,
            scaling_iters: 10,
            polish: true,
            polish_delta: 1e-9,
            polish_refine_iters: 8,
            early_polish_after: 500,
            kkt_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖Px + q + Aᵀy‖∞`
    pub stationarity: f64,
    /// Largest bound violation of `Ax`.
    pub primal: f64,
    /// Largest multiplier on an infinite bound.
    pub dual: f64,
    /// Largest `|y_i|·gap_i` on the bound the multiplier pushes against.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Polished,
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub residuals: KktResiduals,
}

fn is_inf(b: f64) -> bool {
    b.abs() >= QP_INFINITY
}

pub fn kkt_residuals(qp: &QpProblem, x: &DVector<f64>, y: &DVector<f64>) -> KktResiduals {
    let ax = &qp.a * x;
    let grad = &qp.p * x + &qp.q + qp.a.tr_mul(y);
    let mut r = KktResiduals { stationarity: grad.amax(), ..Default::default() };
    for i in 0..qp.num_rows() {
        let (lo, hi, v, yi) = (qp.l[i], qp.u[i], ax[i], y[i]);
        r.primal = r.primal.max(lo - v).max(v - hi);
        if yi > 0.0 {
            if is_inf(hi) {
                r.dual = r.dual.max(yi);
            } else {
                r.complementarity = r.complementarity.max(yi * (hi - v).abs());
            }
        } else if yi < 0.0 {
            if is_inf(lo) {
                r.dual = r.dual.max(-yi);
            } else {
                r.complementarity = r.complementarity.max(-yi * (v - lo).abs());
            }
        }
    }
    r
}

/// Ruiz-equilibrated copy of the problem: `P̄ = c·DPD`, `q̄ = c·Dq`,
/// `Ā = EAD`, `l̄ = El`, `ū = Eu`.
struct Scaled {
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
}

fn limit_scale(v: f64) -> f64 {
    if v < 1e-4 {
        1.0
    } else {
        v.min(1e4)
    }
}

fn equilibrate(qp: &QpProblem, iters: usize) -> Scaled {
    let (n, m) = (qp.num_vars(), qp.num_rows());
    let mut s = Scaled {
        d: DVector::from_element(n, 1.0),
        e: DVector::from_element(m, 1.0),
        c: 1.0,
        p: qp.p.clone(),
        q: qp.q.clone(),
        a: qp.a.clone(),
        l: qp.l.clone(),
        u: qp.u.clone(),
    };
    for _ in 0..iters {
        let dd = DVector::from_fn(n, |j, _| {
            let col = s.p.column(j).amax().max(if m > 0 { s.a.column(j).amax() } else { 0.0 });
            1.0 / limit_scale(col).sqrt()
        });
        let ee = DVector::from_fn(m, |i, _| 1.0 / limit_scale(s.a.row(i).amax()).sqrt());
        for j in 0..n {
            for i in 0..n {
                s.p[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                s.a[(i, j)] *= ee[i] * dd[j];
            }
        }
        s.q.component_mul_assign(&dd);
        s.d.component_mul_assign(&dd);
        s.e.component_mul_assign(&ee);

        let mean_col = if n > 0 { (0..n).map(|j| s.p.column(j).amax()).sum::<f64>() / n as f64 } else { 0.0 };
        let cost = 1.0 / limit_scale(mean_col.max(s.q.amax()));
        s.p *= cost;
        s.q *= cost;
        s.c *= cost;
    }
    for i in 0..m {
        if !is_inf(s.l[i]) {
            s.l[i] *= s.e[i];
        }
        if !is_inf(s.u[i]) {
            s.u[i] *= s.e[i];
        }
    }
    s
}

fn row_rhos(qp: &QpProblem, rho: f64) -> DVector<f64> {
    DVector::from_fn(qp.num_rows(), |i, _| {
        let (lo, hi) = (qp.l[i], qp.u[i]);
        if is_inf(lo) && is_inf(hi) {
            1e-6
        } else if hi - lo < 1e-12 * lo.abs().max(1.0) {
            1e3 * rho
        } else {
            rho
        }
    })
}

fn factor(s: &Scaled, sigma: f64, rho: &DVector<f64>) -> Result<Cholesky<f64, Dyn>, QpError> {
    let n = s.q.len();
    let mut k = s.p.clone();
    for j in 0..n {
        k[(j, j)] += sigma;
    }
    if !rho.is_empty() {
        let mut ra = s.a.clone();
        for (i, mut row) in ra.row_iter_mut().enumerate() {
            row *= rho[i];
        }
        k += s.a.tr_mul(&ra);
    }
    Cholesky::new(k).ok_or(QpError::NonConvex)
}

fn clamp_to(v: &mut DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) {
    for i in 0..v.len() {
        v[i] = v[i].max(l[i]).min(u[i]);
    }
}

/// Solves the equality-constrained problem on the active set guessed from
/// `(x, y)` and returns the refined primal-dual pair.
fn polish(qp: &QpProblem, x: &DVector<f64>, y: &DVector<f64>, settings: &QpSettings) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (qp.num_vars(), qp.num_rows());
    let ax = &qp.a * x;
    // (row, bound) of every active constraint
    let mut active: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        let lower = !is_inf(qp.l[i]) && ax[i] - qp.l[i] < -y[i];
        let upper = !is_inf(qp.u[i]) && qp.u[i] - ax[i] < y[i];
        if lower && upper {
            active.push((i, if y[i] >= 0.0 { qp.u[i] } else { qp.l[i] }));
        } else if lower {
            active.push((i, qp.l[i]));
        } else if upper {
            active.push((i, qp.u[i]));
        }
    }
    let k = active.len();
    let dim = n + k;
    let mut exact = DMatrix::zeros(dim, dim);
    exact.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&qp.q));
    for (r, &(i, b)) in active.iter().enumerate() {
        for j in 0..n {
            exact[(n + r, j)] = qp.a[(i, j)];
            exact[(j, n + r)] = qp.a[(i, j)];
        }
        rhs[n + r] = b;
    }
    let mut reg = exact.clone();
    for j in 0..n {
        reg[(j, j)] += settings.polish_delta;
    }
    for r in 0..k {
        reg[(n + r, n + r)] -= settings.polish_delta;
    }
    let lu = LU::new(reg);
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..settings.polish_refine_iters {
        let res = &rhs - &exact * &sol;
        if res.amax() < 1e-15 {
            break;
        }
        sol += lu.solve(&res)?;
    }
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let xp = sol.rows(0, n).into_owned();
    let mut yp = DVector::zeros(m);
    for (r, &(i, _)) in active.iter().enumerate() {
        yp[i] = sol[n + r];
    }
    Some((xp, yp))
}

/// Cold-started solve.
pub fn solve_qp(qp: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    solve_qp_warm(qp, settings, None)
}

/// Solve starting from a primal-dual guess `(x, y)` in the original scaling.
pub fn solve_qp_warm(
    qp: &QpProblem,
    settings: &QpSettings,
    warm: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<QpSolution, QpError> {
    let (n, m) = (qp.num_vars(), qp.num_rows());
    let s = equilibrate(qp, settings.scaling_iters);
    let mut rho = settings.rho;
    let mut rho_vec = row_rhos(qp, rho);
    let mut chol = factor(&s, settings.sigma, &rho_vec)?;

    let (mut x, mut y) = match warm {
        Some((x0, y0)) if x0.len() == n && y0.len() == m => {
            (x0.component_div(&s.d), y0.component_div(&s.e) * s.c)
        }
        _ => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut z = &s.a * &x;
    clamp_to(&mut z, &s.l, &s.u);

    let unscale = |x: &DVector<f64>, y: &DVector<f64>| (x.component_mul(&s.d), y.component_mul(&s.e) / s.c);
    let mut eps_abs = settings.eps_abs;
    let mut eps_rel = settings.eps_rel;
    let mut best: Option<QpSolution> = None;
    let alpha = settings.alpha;
    // Doubled after every rho change so the penalty cannot oscillate forever.
    let mut adapt_interval = 5 * settings.check_every;
    let mut next_adapt = adapt_interval;
    // Per-update factor bound, shrunk whenever the direction of change flips.
    let mut max_step = 1e3_f64;
    let mut rising = true;

    for iter in 1..=settings.max_iter {
        let x_prev = x.clone();
        let y_prev = y.clone();

        let w = rho_vec.component_mul(&z) - &y;
        let rhs = &x * settings.sigma - &s.q + s.a.tr_mul(&w);
        let x_tilde = chol.solve(&rhs);
        let z_tilde = &s.a * &x_tilde;
        x = &x_tilde * alpha + &x_prev * (1.0 - alpha);
        let z_relax = &z_tilde * alpha + &z * (1.0 - alpha);
        let mut z_new = &z_relax + y.component_div(&rho_vec);
        clamp_to(&mut z_new, &s.l, &s.u);
        y += rho_vec.component_mul(&(&z_relax - &z_new));
        z = z_new;

        if iter % settings.check_every != 0 && iter != settings.max_iter {
            continue;
        }

        // Residuals in the original scaling.
        let ax_s = &s.a * &x;
        let px_s = &s.p * &x;
        let aty_s = s.a.tr_mul(&y);
        let inv_e = s.e.map(|v| 1.0 / v);
        let inv_d = s.d.map(|v| 1.0 / v);
        let r_prim = (&ax_s - &z).component_mul(&inv_e).amax();
        let r_dual = (&px_s + &s.q + &aty_s).component_mul(&inv_d).amax() / s.c;
        let eps_prim = eps_abs + eps_rel * ax_s.component_mul(&inv_e).amax().max(z.component_mul(&inv_e).amax());
        let eps_dual = eps_abs
            + eps_rel / s.c
                * px_s
                    .component_mul(&inv_d)
                    .amax()
                    .max(aty_s.component_mul(&inv_d).amax())
                    .max(s.q.component_mul(&inv_d).amax());

        if r_prim <= eps_prim && r_dual <= eps_dual {
            let (xu, yu) = unscale(&x, &y);
            let res = kkt_residuals(qp, &xu, &yu);
            let mut cand = QpSolution {
                objective: qp.objective(&xu),
                x: xu,
                y: yu,
                iterations: iter,
                status: QpStatus::Converged,
                residuals: res,
            };
            if settings.polish {
                if let Some((xp, yp)) = polish(qp, &cand.x, &cand.y, settings) {
                    let rp = kkt_residuals(qp, &xp, &yp);
                    if rp.max() <= settings.kkt_tol && rp.max() <= cand.residuals.max() {
                        cand = QpSolution {
                            objective: qp.objective(&xp),
                            x: xp,
                            y: yp,
                            iterations: iter,
                            status: QpStatus::Polished,
                            residuals: rp,
                        };
                    }
                }
            }
            let settled = cand.status == QpStatus::Polished || !settings.polish || eps_abs <= 1e-10;
            if settled && cand.residuals.max() <= settings.kkt_tol {
                return Ok(cand);
            }
            if best.as_ref().map_or(true, |b| cand.residuals.max() < b.residuals.max()) {
                best = Some(cand);
            }
            eps_abs = (eps_abs * 0.1).max(1e-13);
            eps_rel = (eps_rel * 0.1).max(1e-13);
        }

        if settings.polish && iter >= settings.early_polish_after && iter % (5 * settings.check_every) == 0 {
            let (xu, yu) = unscale(&x, &y);
            if let Some((xp, yp)) = polish(qp, &xu, &yu, settings) {
                let rp = kkt_residuals(qp, &xp, &yp);
                if rp.max() <= settings.kkt_tol {
                    return Ok(QpSolution {
                        objective: qp.objective(&xp),
                        x: xp,
                        y: yp,
                        iterations: iter,
                        status: QpStatus::Polished,
                        residuals: rp,
                    });
                }
            }
        }

        if let Some(cert) = primal_infeasibility(qp, &s, &(&y - &y_prev), settings.eps_infeasible) {
            return Err(QpError::Infeasible { certificate: cert });
        }
        if let Some(dir) = dual_infeasibility(qp, &s, &(&x - &x_prev), settings.eps_infeasible) {
            return Err(QpError::Unbounded { direction: dir });
        }

        if settings.adaptive_rho && m > 0 && iter >= next_adapt {
            next_adapt = iter + adapt_interval;
            let prim_norm = ax_s.amax().max(z.amax()).max(1e-30);
            let dual_norm = px_s.amax().max(aty_s.amax()).max(s.q.amax()).max(1e-30);
            let sp = (&ax_s - &z).amax() / prim_norm;
            let sd = (&px_s + &s.q + &aty_s).amax() / dual_norm;
            if sp > 0.0 && sd > 0.0 {
                let step = (sp / sd).sqrt().clamp(1.0 / max_step, max_step);
                let new_rho = (rho * step).clamp(1e-6, 1e6);
                if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                    if (new_rho > rho) != rising {
                        rising = !rising;
                        max_step = (max_step.sqrt()).max(5.0);
                    }
                    rho = new_rho;
                    adapt_interval *= 2;
                    next_adapt = iter + adapt_interval;
                    rho_vec = row_rhos(qp, rho);
                    chol = factor(&s, settings.sigma, &rho_vec)?;
                }
            }
        }
    }

    match best {
        Some(b) if b.residuals.max() <= settings.kkt_tol => Ok(b),
        b => Err(QpError::MaxIterations {
            iterations: settings.max_iter,
            residual: b.map_or(f64::INFINITY, |b| b.residuals.max()),
        }),
    }
}

fn primal_infeasibility(qp: &QpProblem, s: &Scaled, dy_scaled: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
    if qp.num_rows() == 0 {
        return None;
    }
    let mut dy = dy_scaled.component_mul(&s.e);
    for i in 0..dy.len() {
        if is_inf(qp.u[i]) {
            dy[i] = dy[i].min(0.0);
        }
        if is_inf(qp.l[i]) {
            dy[i] = dy[i].max(0.0);
        }
    }
    let norm = dy.amax();
    if norm < 1e-30 {
        return None;
    }
    let support: f64 = (0..dy.len())
        .map(|i| {
            let hi = if dy[i] > 0.0 { qp.u[i] * dy[i] } else { 0.0 };
            let lo = if dy[i] < 0.0 { qp.l[i] * dy[i] } else { 0.0 };
            hi + lo
        })
        .sum();
    if qp.a.tr_mul(&dy).amax() <= eps * norm && support < -eps * norm {
        Some(dy / norm)
    } else {
        None
    }
}

fn dual_infeasibility(qp: &QpProblem, s: &Scaled, dx_scaled: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
    let dx = dx_scaled.component_mul(&s.d);
    let norm = dx.amax();
    if norm < 1e-30 {
        return None;
    }
    if (&qp.p * &dx).amax() > eps * norm || qp.q.dot(&dx) >= -eps * norm {
        return None;
    }
    let adx = &qp.a * &dx;
    for i in 0..adx.len() {
        let ok = match (is_inf(qp.l[i]), is_inf(qp.u[i])) {
            (true, true) => true,
            (false, true) => adx[i] >= -eps * norm,
            (true, false) => adx[i] <= eps * norm,
            (false, false) => adx[i].abs() <= eps * norm,
        };
        if !ok {
            return None;
        }
    }
    Some(dx / norm)
}
