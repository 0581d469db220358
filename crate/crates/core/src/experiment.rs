//! Runs a filter over a simulated bundle, timing each step and checking
//! density invariants along the way.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ckf::Space;
use crate::error::{Result, SlamError};
use crate::eval::{extract_pmb, extract_pmbm, map_gospa, rmse, Gospa, GospaConfig, MapEstimate, MetricsRow};
use crate::filters::mpmb::{mpmb_step, MarginalSlamState};
use crate::filters::pmbm::initial_pmbm;
use crate::filters::{base_station_bernoulli, pmb_step, pmbm_step, FilterConfig, MapCounts, ParticleSlamState};
use crate::geometry::VehicleState;
use crate::linalg::is_psd;
use crate::rfs::{BernoulliComponent, GaussianDensity, LandmarkType, PmbDensity, PmbmDensity};
use crate::sim::{simulate, Bundle, ScenarioConfig};

/// Which SLAM filter to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Pmbm,
    Pmb,
    Mpmb,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Pmbm, FilterKind::Pmb, FilterKind::Mpmb];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Pmbm => "pmbm",
            FilterKind::Pmb => "pmb",
            FilterKind::Mpmb => "mpmb",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = SlamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pmbm" => Ok(FilterKind::Pmbm),
            "pmb" => Ok(FilterKind::Pmb),
            "mpmb" => Ok(FilterKind::Mpmb),
            other => Err(SlamError::config("filter", format!("unknown filter `{other}`"))),
        }
    }
}

/// Snapshot after one filter step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub k: usize,
    pub vehicle: VehicleState,
    pub map: MapEstimate,
    pub wall_ms: f64,
    /// Largest global-hypothesis count over particles (1 for PMB maps).
    pub hypotheses: usize,
    /// Largest Bernoulli count over particles.
    pub bernoullis: usize,
    /// Invariant violations found after this step.
    pub violations: Vec<String>,
}

/// A complete filter run over one bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub filter: FilterKind,
    pub steps: Vec<StepOutput>,
}

impl RunOutput {
    pub fn violations(&self) -> impl Iterator<Item = &String> {
        self.steps.iter().flat_map(|s| s.violations.iter())
    }
}

fn check_bernoulli(b: &BernoulliComponent, what: &str, out: &mut Vec<String>) {
    if !(0.0..=1.0).contains(&b.existence) {
        out.push(format!("{what}: existence {} outside [0, 1]", b.existence));
    }
    for (t, c) in b.active_types() {
        if let Some(g) = &c.density {
            if !is_psd(&g.cov, 1e-9) {
                out.push(format!("{what}: {} covariance not PSD", t.name()));
            }
        }
    }
}

fn check_density(g: &GaussianDensity, what: &str, out: &mut Vec<String>) {
    if !is_psd(&g.cov, 1e-9) {
        out.push(format!("{what}: covariance not PSD"));
    }
}

fn check_counts(c: &MapCounts, out: &mut Vec<String>) {
    if c.updated > c.prior + c.measurements {
        out.push(format!(
            "{} Bernoullis after update exceed {} prior plus {} measurements",
            c.updated, c.prior, c.measurements
        ));
    }
}

/// Invariant violations of a PMB map.
pub fn check_pmb(map: &PmbDensity, out: &mut Vec<String>) {
    for (i, b) in map.bernoullis.iter().enumerate() {
        check_bernoulli(b, &format!("bernoulli {i}"), out);
    }
}

/// Invariant violations of a PMBM map.
pub fn check_pmbm(map: &PmbmDensity, cfg: &FilterConfig, out: &mut Vec<String>) {
    for (i, t) in map.tracks.iter().enumerate() {
        for (l, b) in t.iter().enumerate() {
            check_bernoulli(b, &format!("track {i} hypothesis {l}"), out);
        }
    }
    if !map.is_consistent() {
        out.push("global hypotheses reference missing local hypotheses".into());
    }
    let total: f64 = map.hypotheses.iter().map(|h| h.log_weight.exp()).sum();
    if (total - 1.0).abs() > 1e-9 || map.hypotheses.iter().any(|h| h.log_weight > 1e-12) {
        out.push(format!("hypothesis weights sum to {total}"));
    }
    if map.hypotheses.len() > cfg.max_hypotheses {
        out.push(format!("{} hypotheses exceed the cap", map.hypotheses.len()));
    }
}

fn check_particle_weights<M>(state: &ParticleSlamState<M>, out: &mut Vec<String>) {
    let total: f64 = state.weights().iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        out.push(format!("particle weights sum to {total}"));
    }
}

fn frames(bundle: &Bundle) -> Vec<Vec<DVector<f64>>> {
    bundle.frames.iter().map(|f| f.vectors()).collect()
}

/// Runs one filter over a bundle.
pub fn run_filter(kind: FilterKind, bundle: &Bundle, cfg: &FilterConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let scenario = &bundle.scenario;
    scenario.validate()?;
    let model = scenario.model();
    model.validate()?;
    let prior = scenario.vehicle_prior()?;
    let bs = base_station_bernoulli(DVector::from_column_slice(scenario.bs().as_slice()), scenario.prior.bs_std_m)?;
    let undetected = scenario.undetected_intensity()?;
    let zs = frames(bundle);
    let mut steps = Vec::with_capacity(zs.len());
    match kind {
        FilterKind::Pmbm => {
            let map = initial_pmbm(undetected, bs);
            let mut state = ParticleSlamState::from_prior(&prior, map, cfg.particles, Space::VEHICLE, cfg.seed)?;
            for (k, z) in zs.iter().enumerate() {
                let start = Instant::now();
                let report = pmbm_step(&mut state, z, &model, cfg)?;
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let mut violations = Vec::new();
                report.counts.iter().for_each(|c| check_counts(c, &mut violations));
                check_particle_weights(&state, &mut violations);
                for p in &state.particles {
                    check_pmbm(&p.map, cfg, &mut violations);
                }
                let best = &state.particles[state.best_particle()];
                steps.push(StepOutput {
                    k: k + 1,
                    vehicle: VehicleState::from_slice(state.vehicle_estimate(Space::VEHICLE).as_slice()),
                    map: extract_pmbm(&best.map, cfg.existence_threshold),
                    wall_ms,
                    hypotheses: state.particles.iter().map(|p| p.map.hypotheses.len()).max().unwrap_or(0),
                    bernoullis: state.particles.iter().map(|p| p.map.tracks.len()).max().unwrap_or(0),
                    violations,
                });
            }
        }
        FilterKind::Pmb => {
            let map = PmbDensity {
                undetected,
                bernoullis: vec![bs],
            };
            let mut state = ParticleSlamState::from_prior(&prior, map, cfg.particles, Space::VEHICLE, cfg.seed)?;
            for (k, z) in zs.iter().enumerate() {
                let start = Instant::now();
                let report = pmb_step(&mut state, z, &model, cfg)?;
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let mut violations = Vec::new();
                report.counts.iter().for_each(|c| check_counts(c, &mut violations));
                check_particle_weights(&state, &mut violations);
                for p in &state.particles {
                    check_pmb(&p.map, &mut violations);
                }
                let best = &state.particles[state.best_particle()];
                steps.push(StepOutput {
                    k: k + 1,
                    vehicle: VehicleState::from_slice(state.vehicle_estimate(Space::VEHICLE).as_slice()),
                    map: extract_pmb(&best.map, cfg.existence_threshold),
                    wall_ms,
                    hypotheses: 1,
                    bernoullis: state.particles.iter().map(|p| p.map.bernoullis.len()).max().unwrap_or(0),
                    violations,
                });
            }
        }
        FilterKind::Mpmb => {
            let mut state = MarginalSlamState {
                vehicle: prior,
                map: PmbDensity {
                    undetected,
                    bernoullis: vec![bs],
                },
                step: 0,
            };
            for (k, z) in zs.iter().enumerate() {
                let start = Instant::now();
                let report = mpmb_step(&mut state, z, &model, cfg)?;
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let mut violations = Vec::new();
                check_counts(&report.counts, &mut violations);
                check_pmb(&state.map, &mut violations);
                check_density(&state.vehicle, "vehicle", &mut violations);
                steps.push(StepOutput {
                    k: k + 1,
                    vehicle: VehicleState::from_slice(state.vehicle.mean.as_slice()),
                    map: extract_pmb(&state.map, cfg.existence_threshold),
                    wall_ms,
                    hypotheses: 1,
                    bernoullis: state.map.bernoullis.len(),
                    violations,
                });
            }
        }
    }
    Ok(RunOutput { filter: kind, steps })
}

/// Per-step timing and map size of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub filter: String,
    pub run: usize,
    pub step: usize,
    pub wall_ms: f64,
    pub hypotheses: usize,
    pub bernoullis: usize,
}

/// Summary of one filter run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub filter: String,
    pub run: usize,
    pub scenario_seed: u64,
    pub filter_seed: u64,
    pub mean_gospa_va: f64,
    pub mean_gospa_sp: f64,
    pub final_position_error_m: f64,
    pub total_wall_ms: f64,
    pub max_hypotheses: usize,
    pub violations: usize,
}

/// Vehicle estimate of one filter step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRow {
    pub filter: String,
    pub run: usize,
    pub step: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub heading_rad: f64,
    pub speed_mps: f64,
    pub turn_rate_radps: f64,
    pub bias_m: f64,
}

/// One detected landmark of one filter step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRow {
    pub filter: String,
    pub run: usize,
    pub step: usize,
    pub landmark_type: LandmarkType,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub existence: f64,
}

/// A filter run that stopped with an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub filter: String,
    pub run: usize,
    pub error: String,
}

/// Output of a Monte-Carlo experiment.
#[derive(Clone, Debug, Default)]
pub struct MonteCarlo {
    /// Per filter and step, averaged over the runs that completed.
    pub metrics: Vec<MetricsRow>,
    pub runs: Vec<RunSummary>,
    pub timing: Vec<TimingRow>,
    pub failures: Vec<RunFailure>,
    pub vehicles: Vec<VehicleRow>,
    pub landmarks: Vec<LandmarkRow>,
    /// First few invariant violations, prefixed by filter and run.
    pub violations: Vec<String>,
}

impl MonteCarlo {
    /// Metrics rows of one filter in step order.
    pub fn rows(&self, kind: FilterKind) -> Vec<&MetricsRow> {
        self.metrics.iter().filter(|r| r.filter == kind.name()).collect()
    }

    /// Mean per-step wall time of one filter over every run.
    pub fn mean_step_ms(&self, kind: FilterKind) -> f64 {
        let t: Vec<f64> = self.timing.iter().filter(|r| r.filter == kind.name()).map(|r| r.wall_ms).collect();
        t.iter().sum::<f64>() / t.len().max(1) as f64
    }
}

/// Seeds of run `r`: scenario seed and filter seed both offset by `r`.
pub fn run_seeds(scenario: &ScenarioConfig, cfg: &FilterConfig, r: usize) -> (u64, u64) {
    (scenario.seed.wrapping_add(r as u64), cfg.seed.wrapping_add(r as u64))
}

/// One completed filter run, scored against its truth.
struct ScoredRun {
    va: Vec<Gospa>,
    sp: Vec<Gospa>,
    vehicle: Vec<VehicleState>,
    wall_ms: Vec<f64>,
    summary: RunSummary,
    timing: Vec<TimingRow>,
    vehicles: Vec<VehicleRow>,
    landmarks: Vec<LandmarkRow>,
    violations: Vec<String>,
}

fn score_run(
    kind: FilterKind,
    r: usize,
    seeds: (u64, u64),
    bundle: &Bundle,
    cfg: &FilterConfig,
    gospa_cfg: &GospaConfig,
) -> Result<ScoredRun> {
    let output = run_filter(kind, bundle, cfg)?;
    let mut va = Vec::new();
    let mut sp = Vec::new();
    let mut timing = Vec::new();
    let mut vehicles = Vec::new();
    let mut landmarks = Vec::new();
    for step in &output.steps {
        let v = &step.vehicle;
        vehicles.push(VehicleRow {
            filter: kind.name().into(),
            run: r,
            step: step.k,
            x_m: v.position[0],
            y_m: v.position[1],
            z_m: v.position[2],
            heading_rad: v.heading,
            speed_mps: v.speed,
            turn_rate_radps: v.turn_rate,
            bias_m: v.bias,
        });
        landmarks.extend(step.map.landmarks.iter().map(|l| LandmarkRow {
            filter: kind.name().into(),
            run: r,
            step: step.k,
            landmark_type: l.landmark_type,
            x_m: l.position[0],
            y_m: l.position[1],
            z_m: l.position[2],
            existence: l.existence,
        }));
        va.push(map_gospa(&step.map, &bundle.truth.landmarks, LandmarkType::Va, gospa_cfg)?);
        sp.push(map_gospa(&step.map, &bundle.truth.landmarks, LandmarkType::Sp, gospa_cfg)?);
        timing.push(TimingRow {
            filter: kind.name().into(),
            run: r,
            step: step.k,
            wall_ms: step.wall_ms,
            hypotheses: step.hypotheses,
            bernoullis: step.bernoullis,
        });
    }
    let violations: Vec<String> = output.violations().cloned().collect();
    let last = output.steps.last().zip(bundle.truth.states.last());
    let summary = RunSummary {
        filter: kind.name().into(),
        run: r,
        scenario_seed: seeds.0,
        filter_seed: seeds.1,
        mean_gospa_va: va.iter().map(|g| g.total).sum::<f64>() / va.len().max(1) as f64,
        mean_gospa_sp: sp.iter().map(|g| g.total).sum::<f64>() / sp.len().max(1) as f64,
        final_position_error_m: last.map_or(0.0, |(e, t)| (e.vehicle.pos() - t.pos()).norm()),
        total_wall_ms: output.steps.iter().map(|s| s.wall_ms).sum(),
        max_hypotheses: output.steps.iter().map(|s| s.hypotheses).max().unwrap_or(0),
        violations: violations.len(),
    };
    Ok(ScoredRun {
        va,
        sp,
        vehicle: output.steps.iter().map(|s| s.vehicle).collect(),
        wall_ms: output.steps.iter().map(|s| s.wall_ms).collect(),
        summary,
        timing,
        vehicles,
        landmarks,
        violations,
    })
}

/// Runs every filter over `runs` independent scenario realisations.
///
/// Runs execute on the rayon pool and are collected in run order. A run that
/// fails is recorded in `failures` and left out of the averaged metrics.
pub fn run_monte_carlo(
    scenario: &ScenarioConfig,
    cfg: &FilterConfig,
    filters: &[FilterKind],
    runs: usize,
    gospa_cfg: &GospaConfig,
) -> Result<MonteCarlo> {
    if runs == 0 {
        return Err(SlamError::config("runs", "must be at least 1"));
    }
    check_gospa(gospa_cfg)?;
    scenario.validate()?;
    cfg.validate()?;
    let results: Vec<RunResults> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seeds = run_seeds(scenario, cfg, r);
            let bundle = simulate(&ScenarioConfig {
                seed: seeds.0,
                ..scenario.clone()
            });
            let bundle = match bundle {
                Ok(b) => b,
                Err(e) => return (Vec::new(), filters.iter().map(|_| Err(e.to_string())).collect()),
            };
            let run_cfg = FilterConfig {
                seed: seeds.1,
                ..cfg.clone()
            };
            let scored = filters
                .iter()
                .map(|&kind| score_run(kind, r, seeds, &bundle, &run_cfg, gospa_cfg).map_err(|e| e.to_string()))
                .collect();
            (bundle.truth.states, scored)
        })
        .collect();
    collect_runs(&results, filters)
}

/// Runs every filter once over a stored bundle.
pub fn run_on_bundle(
    bundle: &Bundle,
    cfg: &FilterConfig,
    filters: &[FilterKind],
    gospa_cfg: &GospaConfig,
) -> Result<MonteCarlo> {
    check_gospa(gospa_cfg)?;
    cfg.validate()?;
    let seeds = (bundle.scenario.seed, cfg.seed);
    let scored = filters
        .iter()
        .map(|&kind| score_run(kind, 0, seeds, bundle, cfg, gospa_cfg).map_err(|e| e.to_string()))
        .collect();
    collect_runs(&[(bundle.truth.states.clone(), scored)], filters)
}

fn check_gospa(cfg: &GospaConfig) -> Result<()> {
    if !(cfg.p >= 1.0) {
        return Err(SlamError::config("gospa.p", "must be at least 1"));
    }
    if !(cfg.c_m > 0.0) {
        return Err(SlamError::config("gospa.c_m", "must be positive"));
    }
    Ok(())
}

/// True vehicle states of one run and the outcome of each filter on it.
type RunResults = (Vec<VehicleState>, Vec<std::result::Result<ScoredRun, String>>);

fn collect_runs(results: &[RunResults], filters: &[FilterKind]) -> Result<MonteCarlo> {
    let mut out = MonteCarlo::default();
    let mut per_filter: Vec<Vec<(&ScoredRun, &Vec<VehicleState>)>> = vec![Vec::new(); filters.len()];
    for (r, (truth, scored)) in results.iter().enumerate() {
        for (f, result) in scored.iter().enumerate() {
            match result {
                Ok(run) => {
                    out.timing.extend(run.timing.iter().cloned());
                    out.vehicles.extend(run.vehicles.iter().cloned());
                    out.landmarks.extend(run.landmarks.iter().cloned());
                    out.runs.push(run.summary.clone());
                    out.violations.extend(
                        run.violations
                            .iter()
                            .take(5)
                            .map(|v| format!("{} run {r}: {v}", filters[f].name())),
                    );
                    per_filter[f].push((run, truth));
                }
                Err(e) => out.failures.push(RunFailure {
                    filter: filters[f].name().into(),
                    run: r,
                    error: e.clone(),
                }),
            }
        }
    }
    for (f, &kind) in filters.iter().enumerate() {
        let done = &per_filter[f];
        if done.is_empty() {
            continue;
        }
        let est: Vec<Vec<VehicleState>> = done.iter().map(|(s, _)| s.vehicle.clone()).collect();
        let truths: Vec<Vec<VehicleState>> = done.iter().map(|(_, t)| (*t).clone()).collect();
        for (k, e) in rmse(&est, &truths)?.into_iter().enumerate() {
            let va: Vec<Gospa> = done.iter().map(|(s, _)| s.va[k]).collect();
            let sp: Vec<Gospa> = done.iter().map(|(s, _)| s.sp[k]).collect();
            let times: Vec<f64> = done.iter().map(|(s, _)| s.wall_ms[k]).collect();
            out.metrics.push(MetricsRow::new(kind.name(), k + 1, &va, &sp, e, &times));
        }
    }
    Ok(out)
}
