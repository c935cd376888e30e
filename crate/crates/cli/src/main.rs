//! `legsafe`: run scenarios, sweep modes and seeds, compare estimators and
//! dump reconstructed maps.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 usage or scenario
//! error, 3 runtime module error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use legsafe_core::sim::{
    compare_runs, run_scenario, run_scenario_with, write_trace_csv, RunMetrics, RunMode, RunOptions, RunOutput,
    Scenario, SimError,
};
use rayon::prelude::*;

#[derive(Debug, Parser)]
#[command(name = "legsafe", version, about = "Terrain-aware quadruped estimation and safety scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run one scenario and write trace.csv, metrics.json and map.csv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "coupled")]
        mode: RunMode,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the map resolution, m.
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Run every mode for consecutive seeds and tabulate the metrics.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "coupled,decoupled")]
        modes: Vec<RunMode>,
        /// Number of seeds, starting at the scenario seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// CoM-height error statistics of the second mode against the first.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "decoupled,coupled")]
        modes: Vec<RunMode>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the reconstructed map at a given time as CSV.
    DumpMap {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        at: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "coupled")]
        mode: RunMode,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Sim(SimError),
    Output(String),
    Usage(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Sim(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Output(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Sim(SimError::Module { .. }) => 3,
            Failure::Sim(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Sim(e) => e.to_string(),
            Failure::Output(m) | Failure::Usage(m) => m.clone(),
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let fail = |e: &dyn std::fmt::Display| Failure::Output(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| fail(&e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.as_file().sync_all().map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

fn metrics_json(m: &RunMetrics) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
    s.push('\n');
    s.into_bytes()
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn write_run(out: &Path, run: &RunOutput) -> Result<(), Failure> {
    let mut trace = Vec::new();
    write_trace_csv(&run.trace, &mut trace).map_err(|e| Failure::Output(e.to_string()))?;
    write_atomic(&out.join("trace.csv"), &trace)?;
    let mut map = Vec::new();
    run.map.write_csv(&mut map).map_err(|e| Failure::Output(e.to_string()))?;
    write_atomic(&out.join("map.csv"), &map)?;
    write_atomic(&out.join("metrics.json"), &metrics_json(&run.metrics))
}

/// Runs `modes × seeds` in parallel; results are ordered by mode, then seed.
fn batch(scenario: &Scenario, modes: &[RunMode], seeds: u64) -> Result<Vec<RunMetrics>, Failure> {
    let jobs: Vec<(RunMode, u64)> =
        modes.iter().flat_map(|&m| (0..seeds).map(move |k| (m, scenario.seed + k))).collect();
    let results: Vec<Result<RunMetrics, SimError>> = jobs
        .par_iter()
        .map(|&(mode, seed)| {
            let mut s = scenario.clone();
            s.seed = seed;
            run_scenario(&s, mode).map(|o| o.metrics)
        })
        .collect();
    results.into_iter().map(|r| r.map_err(Failure::from)).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| x.to_string())
}

fn sweep_csv(runs: &[RunMetrics]) -> String {
    let mut s = String::from(
        "mode,seed,com_z_mae,com_mae,platform_height_error_cm,pseudo_coverage,force_only_coverage,min_h_glob,min_h_glob_true,mpc_solves,mpc_stops\n",
    );
    for r in runs {
        s += &format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.mode,
            r.seed,
            r.com_z_mae,
            r.com_mae,
            opt(r.platform_height_error_cm),
            r.pseudo_coverage,
            r.force_only_coverage,
            opt(r.min_h_glob),
            opt(r.min_h_glob_true),
            r.mpc_solves,
            r.mpc_stops
        );
    }
    s
}

fn execute(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run { scenario, mode, seed, out, resolution } => {
            let mut s = load(&scenario, seed)?;
            if let Some(r) = resolution {
                s.map.resolution = r;
            }
            let run = run_scenario(&s, mode)?;
            write_run(&out, &run)
        }
        Cmd::Sweep { scenario, modes, seeds, out } => {
            let s = load(&scenario, None)?;
            if seeds == 0 || modes.is_empty() {
                return Err(Failure::Usage("sweep needs at least one mode and one seed".into()));
            }
            let runs = batch(&s, &modes, seeds)?;
            for r in &runs {
                write_atomic(&out.join(format!("metrics_{}_{}.json", r.mode, r.seed)), &metrics_json(r))?;
            }
            write_atomic(&out.join("sweep.csv"), sweep_csv(&runs).as_bytes())
        }
        Cmd::Compare { scenario, modes, seeds, out } => {
            let s = load(&scenario, None)?;
            let [base, cand] = modes[..] else {
                return Err(Failure::Usage(format!("compare needs exactly two modes, got {}", modes.len())));
            };
            if seeds == 0 {
                return Err(Failure::Usage("compare needs at least one seed".into()));
            }
            let runs = batch(&s, &[base, cand], seeds)?;
            let (b, c) = runs.split_at(seeds as usize);
            let cmp = compare_runs(b, c).expect("non-empty runs");
            for w in &cmp.warnings {
                eprintln!("warning: {w}");
            }
            let text = cmp.to_text();
            print!("{text}");
            write_atomic(&out.join("comparison.txt"), text.as_bytes())?;
            write_atomic(&out.join("comparison.csv"), cmp.to_csv().as_bytes())?;
            let json = serde_json::to_string_pretty(&cmp).expect("comparison serialize") + "\n";
            write_atomic(&out.join("comparison.json"), json.as_bytes())
        }
        Cmd::DumpMap { scenario, at, out, mode, seed } => {
            let s = load(&scenario, seed)?;
            if !(at >= 0.0) {
                return Err(Failure::Usage(format!("--at must be non-negative, got {at}")));
            }
            let run = run_scenario_with(&s, mode, &RunOptions { stop_at: Some(at) })?;
            let mut map = Vec::new();
            run.map.write_csv(&mut map).map_err(|e| Failure::Output(e.to_string()))?;
            write_atomic(&out, &map)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
