//! Result files of an experiment directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rfs_slam::eval::{write_csv, MetricsRow};
use rfs_slam::experiment::{FilterKind, MonteCarlo};
use serde::Serialize;

use crate::config::{Failure, RunConfig};

pub const METRICS: &str = "metrics.csv";
pub const RUNS: &str = "runs.csv";
pub const TIMING: &str = "timing.csv";
pub const REPORT: &str = "report.csv";
pub const VEHICLE: &str = "vehicle.csv";
pub const LANDMARKS: &str = "landmarks.csv";
pub const FAILURES: &str = "failures.csv";
pub const CONFIG: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";

/// Accuracy columns of a metrics row; wall time lives in the timing table.
#[derive(Serialize)]
struct AccuracyRow<'a> {
    filter: &'a str,
    step: usize,
    gospa_va: f64,
    gospa_va_loc: f64,
    gospa_va_missed: f64,
    gospa_va_false: f64,
    gospa_sp: f64,
    gospa_sp_loc: f64,
    gospa_sp_missed: f64,
    gospa_sp_false: f64,
    rmse_position_m: f64,
    rmse_bias_m: f64,
    rmse_heading_rad: f64,
}

impl<'a> From<&'a MetricsRow> for AccuracyRow<'a> {
    fn from(r: &'a MetricsRow) -> Self {
        Self {
            filter: &r.filter,
            step: r.step,
            gospa_va: r.gospa_va,
            gospa_va_loc: r.gospa_va_loc,
            gospa_va_missed: r.gospa_va_missed,
            gospa_va_false: r.gospa_va_false,
            gospa_sp: r.gospa_sp,
            gospa_sp_loc: r.gospa_sp_loc,
            gospa_sp_missed: r.gospa_sp_missed,
            gospa_sp_false: r.gospa_sp_false,
            rmse_position_m: r.rmse_position_m,
            rmse_bias_m: r.rmse_bias_m,
            rmse_heading_rad: r.rmse_heading_rad,
        }
    }
}

/// One line of the joint complexity and accuracy report.
#[derive(Debug, Serialize)]
pub struct ReportRow {
    pub filter: String,
    pub global_hypotheses: &'static str,
    pub vehicle_weight: &'static str,
    pub complexity: &'static str,
    pub particles: usize,
    pub max_hypotheses: usize,
    pub lbp_max_iterations: usize,
    pub mean_hypotheses: f64,
    pub mean_bernoullis: f64,
    pub mean_step_ms: f64,
    pub mean_gospa_va: f64,
    pub mean_gospa_sp: f64,
    pub final_rmse_position_m: f64,
    pub final_rmse_bias_m: f64,
    pub final_rmse_heading_rad: f64,
    pub completed_runs: usize,
    pub failed_runs: usize,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Joint report with one row per filter.
pub fn report(mc: &MonteCarlo, filters: &[FilterKind], cfg: &RunConfig) -> Vec<ReportRow> {
    filters
        .iter()
        .map(|&kind| {
            let name = kind.name();
            let (global_hypotheses, vehicle_weight, complexity) = match kind {
                FilterKind::Pmbm => ("many per particle", "updated mbm", "O(sum_n |A_n| (I+J)^3 B_max)"),
                FilterKind::Pmb => ("one per particle", "bethe free energy", "O(N I J L_max)"),
                FilterKind::Mpmb => ("one", "none", "O(I J L_max)"),
            };
            let timing = || mc.timing.iter().filter(|t| t.filter == name);
            let rows = mc.rows(kind);
            let last = rows.last();
            ReportRow {
                filter: name.into(),
                global_hypotheses,
                vehicle_weight,
                complexity,
                particles: if kind == FilterKind::Mpmb { 0 } else { cfg.params.particles },
                max_hypotheses: cfg.params.max_hypotheses,
                lbp_max_iterations: cfg.params.lbp.max_iterations,
                mean_hypotheses: mean(timing().map(|t| t.hypotheses as f64)),
                mean_bernoullis: mean(timing().map(|t| t.bernoullis as f64)),
                mean_step_ms: mean(timing().map(|t| t.wall_ms)),
                mean_gospa_va: mean(rows.iter().map(|r| r.gospa_va)),
                mean_gospa_sp: mean(rows.iter().map(|r| r.gospa_sp)),
                final_rmse_position_m: last.map_or(f64::NAN, |r| r.rmse_position_m),
                final_rmse_bias_m: last.map_or(f64::NAN, |r| r.rmse_bias_m),
                final_rmse_heading_rad: last.map_or(f64::NAN, |r| r.rmse_heading_rad),
                completed_runs: mc.runs.iter().filter(|r| r.filter == name).count(),
                failed_runs: mc.failures.iter().filter(|f| f.filter == name).count(),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct SeedPair {
    run: usize,
    scenario_seed: u64,
    filter_seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    filters: Vec<&'static str>,
    config: &'a RunConfig,
    seeds: Vec<SeedPair>,
    files: Vec<&'static str>,
    failures: usize,
    invariant_violations: usize,
}

/// Package version plus `git describe` of the build tree.
pub const VERSION: &str = env!("RFS_SLAM_VERSION");

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn table<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), Failure> {
    write_csv(rows, create(dir, name)?).map_err(|e| Failure::Runtime(format!("{name}: {e}")))
}

/// Writes every result table, the resolved config and the manifest.
pub fn write_all(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    filters: &[FilterKind],
    mc: &MonteCarlo,
    report: &[ReportRow],
) -> Result<(), Failure> {
    let metrics: Vec<AccuracyRow> = mc.metrics.iter().map(AccuracyRow::from).collect();
    table(dir, METRICS, &metrics)?;
    table(dir, RUNS, &mc.runs)?;
    table(dir, TIMING, &mc.timing)?;
    table(dir, REPORT, report)?;
    table(dir, VEHICLE, &mc.vehicles)?;
    table(dir, LANDMARKS, &mc.landmarks)?;
    table(dir, FAILURES, &mc.failures)?;
    let toml = cfg.to_toml()?;
    std::fs::write(dir.join(CONFIG), toml).map_err(|e| Failure::Runtime(format!("{CONFIG}: {e}")))?;
    let seeds = (0..cfg.runs)
        .map(|r| {
            let (scenario_seed, filter_seed) = if cfg.bundle_file.is_some() {
                (cfg.scenario.seed, cfg.params.seed)
            } else {
                rfs_slam::experiment::run_seeds(&cfg.scenario, &cfg.params, r)
            };
            SeedPair {
                run: r,
                scenario_seed,
                filter_seed,
            }
        })
        .collect();
    let manifest = Manifest {
        tool: "rfs-slam",
        version: VERSION,
        command,
        filters: filters.iter().map(|k| k.name()).collect(),
        config: cfg,
        seeds,
        files: vec![METRICS, RUNS, TIMING, REPORT, VEHICLE, LANDMARKS, FAILURES, CONFIG],
        failures: mc.failures.len(),
        invariant_violations: mc.violations.len(),
    };
    let mut out = create(dir, MANIFEST)?;
    serde_json::to_writer_pretty(&mut out, &manifest).map_err(|e| Failure::Runtime(format!("{MANIFEST}: {e}")))?;
    std::io::Write::write_all(&mut out, b"\n").map_err(|e| Failure::Runtime(format!("{MANIFEST}: {e}")))
}
