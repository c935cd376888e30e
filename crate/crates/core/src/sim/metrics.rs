use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::scenario::{Region, RegionKind};
use super::terrain::Terrain;
use super::trace::TraceRow;
use super::RunMode;
use crate::mpc::PlanStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMetric {
    pub name: String,
    pub kind: RegionKind,
    /// Ticks with the true CoM inside the region and a support plane.
    pub ticks: usize,
    /// Mean angle between estimated and true terrain normals, deg.
    pub mean_angle_error_deg: Option<f64>,
    /// Mean estimated minus true terrain height under the CoM, cm.
    pub mean_height_error_cm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub mode: RunMode,
    pub seed: u64,
    pub ticks: usize,
    /// Time at which the CoM height above the ground left
    /// `[0.5, 2]·nominal_height`; the run ends on that tick.
    pub fell_at: Option<f64>,
    /// Ticks on which some foot was out of leg reach.
    pub unreachable_ticks: usize,
    pub regions: Vec<RegionMetric>,
    /// Mean over every platform region tick, cm.
    pub platform_height_error_cm: Option<f64>,
    /// Mean absolute CoM height error, m.
    pub com_z_mae: f64,
    /// Mean CoM position error norm, m.
    pub com_mae: f64,
    pub pseudo_ticks: usize,
    /// Fraction of pseudo-contact ticks with fused probability ≥ 0.5; 1 when
    /// there are none.
    pub pseudo_coverage: f64,
    /// Fraction of pseudo-contact ticks where the force alone reaches the
    /// threshold; 1 when there are none.
    pub force_only_coverage: f64,
    pub min_h_glob: Option<f64>,
    pub min_h_glob_true: Option<f64>,
    /// `[pitch_lo, pitch_hi, roll_lo, roll_hi]`, deg.
    pub min_h_local_deg: Option<[f64; 4]>,
    pub mpc_solves: usize,
    pub mpc_relaxed: usize,
    pub mpc_stops: usize,
    pub mpc_max_kkt: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn min_opt(acc: Option<f64>, v: Option<f64>) -> Option<f64> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Reduces a trace to run metrics. `f_mid` is the force threshold of the
/// force-only detector.
pub fn compute_metrics(
    trace: &[TraceRow],
    terrain: &Terrain,
    regions: &[Region],
    f_mid: f64,
    header: (&str, RunMode, u64),
) -> RunMetrics {
    let mut region_metrics = Vec::with_capacity(regions.len());
    let mut platform_errors = Vec::new();
    for region in regions {
        let mut angles = Vec::new();
        let mut heights = Vec::new();
        for row in trace {
            let xy = Vector2::new(row.true_p[0], row.true_p[1]);
            let Some(plane) = row.plane else { continue };
            if !region.bounds.contains(&xy) {
                continue;
            }
            let truth = terrain.tangent_plane(xy.x, xy.y);
            angles.push(plane.normal_angle(&truth).to_degrees());
            if let Some(z) = plane.height_at(xy.x, xy.y) {
                heights.push(100.0 * (z - terrain.height(xy.x, xy.y)));
            }
        }
        if region.kind == RegionKind::Platform {
            platform_errors.extend_from_slice(&heights);
        }
        region_metrics.push(RegionMetric {
            name: region.name.clone(),
            kind: region.kind,
            ticks: angles.len(),
            mean_angle_error_deg: mean(&angles),
            mean_height_error_cm: mean(&heights),
        });
    }

    let n = trace.len().max(1) as f64;
    let com_z_mae = trace.iter().map(|r| (r.est_p[2] - r.true_p[2]).abs()).sum::<f64>() / n;
    let com_mae = trace
        .iter()
        .map(|r| (0..3).map(|i| (r.est_p[i] - r.true_p[i]).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / n;

    let mut pseudo_ticks = 0;
    let mut fused_hits = 0;
    let mut force_hits = 0;
    for row in trace {
        for i in 0..4 {
            if row.pseudo[i] {
                pseudo_ticks += 1;
                fused_hits += usize::from(row.contact_prob[i] >= 0.5);
                force_hits += usize::from(row.force[i] >= f_mid);
            }
        }
    }
    let ratio = |hits: usize| if pseudo_ticks == 0 { 1.0 } else { hits as f64 / pseudo_ticks as f64 };

    let mut min_h_glob = None;
    let mut min_h_glob_true = None;
    let mut min_local: Option<[f64; 4]> = None;
    let (mut solves, mut relaxed, mut stops) = (0, 0, 0);
    let mut max_kkt: Option<f64> = None;
    for row in trace {
        min_h_glob = min_opt(min_h_glob, row.h_glob);
        min_h_glob_true = min_opt(min_h_glob_true, row.h_glob_true);
        if let Some(h) = row.h_local {
            let deg = h.map(f64::to_degrees);
            min_local = Some(match min_local {
                Some(m) => std::array::from_fn(|i| m[i].min(deg[i])),
                None => deg,
            });
        }
        match row.mpc_status {
            Some(PlanStatus::Optimal) => solves += 1,
            Some(PlanStatus::Relaxed { .. }) => {
                solves += 1;
                relaxed += 1;
            }
            Some(PlanStatus::Stop) => {
                solves += 1;
                stops += 1;
            }
            None => {}
        }
        if let Some(k) = row.mpc_kkt.filter(|k| k.is_finite()) {
            max_kkt = Some(max_kkt.map_or(k, |m| m.max(k)));
        }
    }

    RunMetrics {
        scenario: header.0.to_string(),
        mode: header.1,
        seed: header.2,
        ticks: trace.len(),
        fell_at: None,
        unreachable_ticks: 0,
        regions: region_metrics,
        platform_height_error_cm: mean(&platform_errors),
        com_z_mae,
        com_mae,
        pseudo_ticks,
        pseudo_coverage: ratio(fused_hits),
        force_only_coverage: ratio(force_hits),
        min_h_glob,
        min_h_glob_true,
        min_h_local_deg: min_local,
        mpc_solves: solves,
        mpc_relaxed: relaxed,
        mpc_stops: stops,
        mpc_max_kkt: max_kkt,
    }
}

/// Per-mode summary of a multi-seed comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: RunMode,
    pub seeds: Vec<u64>,
    pub mae: Vec<f64>,
    pub mean: f64,
    /// Sample variance; 0 for a single seed.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: ModeSummary,
    pub candidate: ModeSummary,
    /// `100·(baseline − candidate)/baseline` of the mean MAE.
    pub mae_reduction_pct: f64,
    /// Same for the variance.
    pub variance_reduction_pct: f64,
    pub warnings: Vec<String>,
}

fn summarize(runs: &[RunMetrics]) -> Option<ModeSummary> {
    let mode = runs.first()?.mode;
    let mae: Vec<f64> = runs.iter().map(|r| r.com_z_mae).collect();
    let m = mean(&mae)?;
    let variance = if mae.len() > 1 {
        mae.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (mae.len() - 1) as f64
    } else {
        0.0
    };
    Some(ModeSummary { mode, seeds: runs.iter().map(|r| r.seed).collect(), mae, mean: m, variance })
}

fn reduction(base: f64, cand: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (base - cand) / base
    }
}

/// CoM-height MAE statistics of `candidate` relative to `baseline`.
pub fn compare_runs(baseline: &[RunMetrics], candidate: &[RunMetrics]) -> Option<Comparison> {
    let b = summarize(baseline)?;
    let c = summarize(candidate)?;
    let mut warnings = Vec::new();
    if b.mae.len() < 2 || c.mae.len() < 2 {
        warnings.push("fewer than two seeds: variance reported as 0".to_string());
    }
    Some(Comparison {
        mae_reduction_pct: reduction(b.mean, c.mean),
        variance_reduction_pct: reduction(b.variance, c.variance),
        baseline: b,
        candidate: c,
        warnings,
    })
}

impl Comparison {
    /// Aligned text table, one row per seed plus summary rows.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<8} {:>14} {:>14}\n",
            "seed",
            self.baseline.mode.name(),
            self.candidate.mode.name()
        );
        for (i, seed) in self.baseline.seeds.iter().enumerate() {
            let c = self.candidate.mae.get(i).map_or("-".to_string(), |v| format!("{v:.6}"));
            s += &format!("{:<8} {:>14.6} {:>14}\n", seed, self.baseline.mae[i], c);
        }
        s += &format!("{:<8} {:>14.6} {:>14.6}\n", "mean", self.baseline.mean, self.candidate.mean);
        s += &format!("{:<8} {:>14.3e} {:>14.3e}\n", "variance", self.baseline.variance, self.candidate.variance);
        s += &format!("mae_reduction_pct {:.2}\n", self.mae_reduction_pct);
        s += &format!("variance_reduction_pct {:.2}\n", self.variance_reduction_pct);
        for w in &self.warnings {
            s += &format!("warning: {w}\n");
        }
        s
    }

    /// Machine-readable CSV with the same content.
    pub fn to_csv(&self) -> String {
        let mut s = format!("seed,{}_mae,{}_mae\n", self.baseline.mode.name(), self.candidate.mode.name());
        for (i, seed) in self.baseline.seeds.iter().enumerate() {
            let c = self.candidate.mae.get(i).map_or(String::new(), |v| v.to_string());
            s += &format!("{seed},{},{c}\n", self.baseline.mae[i]);
        }
        s += &format!("mean,{},{}\n", self.baseline.mean, self.candidate.mean);
        s += &format!("variance,{},{}\n", self.baseline.variance, self.candidate.variance);
        s += &format!("reduction_pct,{},{}\n", self.mae_reduction_pct, self.variance_reduction_pct);
        s
    }
}
