use std::io::{self, Write};

use crate::geometry::PlaneParams;
use crate::mpc::PlanStatus;

/// One estimator tick of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub true_p: [f64; 3],
    pub est_p: [f64; 3],
    pub true_v: [f64; 3],
    pub est_v: [f64; 3],
    /// `(roll, pitch, yaw)`, rad.
    pub euler: [f64; 3],
    pub true_contact: [bool; 4],
    pub stance: [bool; 4],
    pub contact_prob: [f64; 4],
    pub force: [f64; 4],
    pub pseudo: [bool; 4],
    pub plane: Option<PlaneParams>,
    /// Barrier at the estimated position, m.
    pub h_glob: Option<f64>,
    /// Same boundary evaluated at the true position, m.
    pub h_glob_true: Option<f64>,
    /// `[pitch_lo, pitch_hi, roll_lo, roll_hi]` barrier values, rad.
    pub h_local: Option<[f64; 4]>,
    /// Set on ticks where the MPC ran.
    pub mpc_status: Option<PlanStatus>,
    pub mpc_kkt: Option<f64>,
    pub cmd_v: [f64; 2],
}

const LEGS: [&str; 4] = ["fl", "fr", "rl", "rr"];

fn header() -> String {
    let mut cols: Vec<String> = vec!["t".into()];
    for prefix in ["true_p", "est_p", "true_v", "est_v"] {
        cols.extend(["x", "y", "z"].iter().map(|a| format!("{prefix}_{a}")));
    }
    cols.extend(["roll", "pitch", "yaw"].map(String::from));
    for prefix in ["true_contact", "stance", "contact_prob", "force", "pseudo"] {
        cols.extend(LEGS.iter().map(|l| format!("{prefix}_{l}")));
    }
    cols.extend(["plane_k1", "plane_k2", "plane_k3", "plane_d"].map(String::from));
    cols.extend(["h_glob", "h_glob_true", "h_pitch_lo", "h_pitch_hi", "h_roll_lo", "h_roll_hi"].map(String::from));
    cols.extend(["mpc_status", "mpc_kkt", "cmd_vx", "cmd_vy"].map(String::from));
    cols.join(",")
}

fn status_name(s: Option<PlanStatus>) -> &'static str {
    match s {
        None => "",
        Some(PlanStatus::Optimal) => "optimal",
        Some(PlanStatus::Relaxed { .. }) => "relaxed",
        Some(PlanStatus::Stop) => "stop",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

/// Writes the trace as CSV with a header row; absent values print `nan`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{}", header())?;
    let b = |v: bool| if v { "1" } else { "0" };
    for r in rows {
        let mut f: Vec<String> = vec![r.t.to_string()];
        for v in [r.true_p, r.est_p, r.true_v, r.est_v, r.euler] {
            f.extend(v.iter().map(f64::to_string));
        }
        f.extend(r.true_contact.iter().map(|&c| b(c).to_string()));
        f.extend(r.stance.iter().map(|&c| b(c).to_string()));
        f.extend(r.contact_prob.iter().map(f64::to_string));
        f.extend(r.force.iter().map(f64::to_string));
        f.extend(r.pseudo.iter().map(|&c| b(c).to_string()));
        match r.plane {
            Some(p) => f.extend([p.k1, p.k2, p.k3, p.d].iter().map(f64::to_string)),
            None => f.extend(std::iter::repeat("nan".to_string()).take(4)),
        }
        f.push(opt(r.h_glob));
        f.push(opt(r.h_glob_true));
        match r.h_local {
            Some(h) => f.extend(h.iter().map(f64::to_string)),
            None => f.extend(std::iter::repeat("nan".to_string()).take(4)),
        }
        f.push(status_name(r.mpc_status).to_string());
        f.push(opt(r.mpc_kkt));
        f.extend(r.cmd_v.iter().map(f64::to_string));
        writeln!(out, "{}", f.join(","))?;
    }
    Ok(())
}
