//! The PMBM, PMB and marginalized PMB SLAM filters.
//!
//! The two particle filters sample the vehicle state and carry a map density
//! per particle; the marginalized filter keeps a single Gaussian vehicle
//! density next to one PMB map.

pub mod model;
pub mod mpmb;
pub mod pmb;
pub mod pmbm;
pub mod prune;
pub mod resample;
pub mod update;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assoc::LbpConfig;
use crate::ckf::Space;
use crate::error::{Result, SlamError};
use crate::linalg::{log_sum_exp, psd_sqrt, wrap_angle};
use crate::rfs::{BernoulliComponent, GaussianDensity, LandmarkType, PppIntensity};

pub use model::{LinearModel, MmwaveModel};
pub use mpmb::{mpmb_step, MarginalSlamState};
pub use pmb::pmb_step;
pub use pmbm::pmbm_step;
pub use prune::{prune_pmb, prune_pmbm};
pub use resample::{effective_sample_size, systematic_resample};
pub use update::VehicleBelief;

/// Dynamics, measurement and birth geometry seen by the filters.
pub trait SlamModel: Sync {
    fn vehicle_dim(&self) -> usize;
    fn landmark_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;
    /// Angular layout of the vehicle state; landmark entries appended to it are Euclidean.
    fn vehicle_space(&self) -> Space;
    fn meas_space(&self) -> Space;
    /// Noise-free transition over one step.
    fn transition(&self, s: &DVector<f64>) -> DVector<f64>;
    fn process_noise(&self) -> &DMatrix<f64>;
    /// Noise-free measurement of a type-`m` landmark at `x`.
    fn measure(&self, s: &DVector<f64>, x: &DVector<f64>, m: LandmarkType) -> Result<DVector<f64>>;
    fn meas_noise(&self, m: LandmarkType) -> &DMatrix<f64>;
    /// Landmark position consistent with measurement `z` of a type-`m` landmark.
    fn birth_point(&self, s: &DVector<f64>, z: &DVector<f64>, m: LandmarkType) -> Result<DVector<f64>>;
    /// Types that new landmarks may take.
    fn birth_types(&self) -> &[LandmarkType];
    fn in_fov(&self, s: &DVector<f64>, x: &DVector<f64>, m: LandmarkType) -> bool;
    /// Clutter intensity `c(z)`.
    fn clutter_intensity(&self, z: &DVector<f64>) -> f64;
}

/// Tuning shared by the three filters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Particle count `N` of the PMBM and PMB filters.
    pub particles: usize,
    /// Global hypothesis cap `B_max`.
    pub max_hypotheses: usize,
    pub lbp: LbpConfig,
    /// Detection probability `P_D` inside the field of view and gate.
    pub p_d: f64,
    /// Gate probability `P_G`.
    pub p_g: f64,
    /// Detection probability applied to the undetected intensity.
    pub p_d_undetected: f64,
    /// Existence threshold `T_EP` for estimates and for the vehicle update.
    pub existence_threshold: f64,
    pub prune_existence: f64,
    pub prune_hypothesis: f64,
    /// Noise inflation of the birth and detection steps.
    pub robust_factor: f64,
    /// Covariance inflation of the marginalized vehicle posterior.
    pub dither_factor: f64,
    /// Importance samples per birth type.
    pub birth_samples: usize,
    /// Resample when the effective sample size falls below this fraction of `N`.
    pub resample_fraction: f64,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 50,
            max_hypotheses: 200,
            lbp: LbpConfig::default(),
            p_d: 0.95,
            p_g: 0.99,
            p_d_undetected: 0.0,
            existence_threshold: 0.4,
            prune_existence: 1e-5,
            prune_hypothesis: 1e-4,
            robust_factor: 4.0,
            dither_factor: 1.5,
            birth_samples: 100,
            resample_fraction: 0.5,
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if self.particles == 0 {
            return Err(SlamError::config("particles", "must be at least 1"));
        }
        if self.max_hypotheses == 0 {
            return Err(SlamError::config("max_hypotheses", "must be at least 1"));
        }
        if self.lbp.max_iterations == 0 {
            return Err(SlamError::config("lbp.max_iterations", "must be at least 1"));
        }
        if !(self.lbp.tolerance > 0.0) {
            return Err(SlamError::config("lbp.tolerance", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.lbp.damping) {
            return Err(SlamError::config("lbp.damping", "must lie in [0, 1)"));
        }
        if !unit(self.p_d) {
            return Err(SlamError::config("p_d", "must lie in [0, 1]"));
        }
        if !open_unit(self.p_g) {
            return Err(SlamError::config("p_g", "must lie in (0, 1)"));
        }
        if !unit(self.p_d_undetected) {
            return Err(SlamError::config("p_d_undetected", "must lie in [0, 1]"));
        }
        if !unit(self.existence_threshold) {
            return Err(SlamError::config("existence_threshold", "must lie in [0, 1]"));
        }
        if !open_unit(self.prune_existence) {
            return Err(SlamError::config("prune_existence", "must lie in (0, 1)"));
        }
        if !open_unit(self.prune_hypothesis) {
            return Err(SlamError::config("prune_hypothesis", "must lie in (0, 1)"));
        }
        if !(self.robust_factor >= 1.0) || !self.robust_factor.is_finite() {
            return Err(SlamError::config("robust_factor", "must be finite and at least 1"));
        }
        if !(self.dither_factor >= 1.0) || !self.dither_factor.is_finite() {
            return Err(SlamError::config("dither_factor", "must be finite and at least 1"));
        }
        if self.birth_samples == 0 {
            return Err(SlamError::config("birth_samples", "must be at least 1"));
        }
        if !unit(self.resample_fraction) {
            return Err(SlamError::config("resample_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Squared-Mahalanobis gate for a `dof`-dimensional measurement.
    pub fn gate(&self, dof: usize) -> Result<f64> {
        crate::geometry::gate_threshold_dof(self.p_g, dof)
    }
}

/// The undetected intensity, thinned by `1 − p_d_undetected`.
pub fn thin_undetected(undetected: &PppIntensity, cfg: &FilterConfig) -> PppIntensity {
    if cfg.p_d_undetected == 0.0 {
        undetected.clone()
    } else {
        undetected.thinned(1.0 - cfg.p_d_undetected)
    }
}

/// The permanent base-station Bernoulli: known to exist, Gaussian around its surveyed position.
pub fn base_station_bernoulli(position: DVector<f64>, std_m: f64) -> Result<BernoulliComponent> {
    if !(std_m > 0.0) {
        return Err(SlamError::config("bs_prior_std_m", "must be positive"));
    }
    let n = position.len();
    let density = GaussianDensity::new(position, DMatrix::identity(n, n) * std_m * std_m)?;
    Ok(BernoulliComponent::single_type(1.0, LandmarkType::Bs, density))
}

/// Whether a Bernoulli is the never-pruned base station.
pub fn is_permanent(b: &BernoulliComponent) -> bool {
    b.type_weight(LandmarkType::Bs) > 0.0
}

/// One weighted vehicle sample with its conditional map.
#[derive(Clone, Debug)]
pub struct Particle<M> {
    pub state: DVector<f64>,
    pub log_weight: f64,
    pub map: M,
}

/// Particle representation of the vehicle posterior.
#[derive(Clone, Debug)]
pub struct ParticleSlamState<M> {
    pub particles: Vec<Particle<M>>,
    /// Number of completed steps.
    pub step: usize,
}

impl<M: Clone> ParticleSlamState<M> {
    /// `n` particles drawn from `prior`, each with a copy of `map` and uniform weight.
    pub fn from_prior(prior: &GaussianDensity, map: M, n: usize, space: Space, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(SlamError::config("particles", "must be at least 1"));
        }
        let root = psd_sqrt(&prior.cov);
        let mut rng = stream_rng(seed, u64::MAX, 0);
        let log_w = -(n as f64).ln();
        let particles = (0..n)
            .map(|_| {
                let mut state = &prior.mean + &root * standard_normal(&mut rng, prior.dim());
                space.normalize(&mut state);
                Particle {
                    state,
                    log_weight: log_w,
                    map: map.clone(),
                }
            })
            .collect();
        Ok(Self { particles, step: 0 })
    }
}

impl<M> ParticleSlamState<M> {
    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight.exp()).collect()
    }

    /// Weighted mean state; angular entries use the circular mean.
    pub fn vehicle_estimate(&self, space: Space) -> DVector<f64> {
        let states: Vec<&DVector<f64>> = self.particles.iter().map(|p| &p.state).collect();
        weighted_state_mean(&states, &self.weights(), space)
    }

    /// Index of the highest-weight particle (lowest index on ties).
    pub fn best_particle(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.log_weight > self.particles[best].log_weight {
                best = i;
            }
        }
        best
    }

    /// Normalises the log weights; errors when every weight vanished.
    pub fn normalize_weights(&mut self) -> Result<f64> {
        let total = log_sum_exp(self.particles.iter().map(|p| p.log_weight));
        if !total.is_finite() {
            return Err(SlamError::DegeneratePosterior(
                "every particle weight vanished".into(),
            ));
        }
        for p in &mut self.particles {
            p.log_weight -= total;
        }
        Ok(total)
    }
}

/// Map sizes around one update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MapCounts {
    /// Bernoullis (or tracks) before the update.
    pub prior: usize,
    pub measurements: usize,
    /// Bernoullis (or tracks) after the update and before pruning.
    pub updated: usize,
}

/// Diagnostics of one particle-filter step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Per-particle log weight multiplier before normalisation.
    pub log_multipliers: Vec<f64>,
    pub counts: Vec<MapCounts>,
    /// Effective sample size after normalisation and before resampling.
    pub ess: f64,
    pub resampled: bool,
}

pub(crate) fn weighted_state_mean(states: &[&DVector<f64>], weights: &[f64], space: Space) -> DVector<f64> {
    let dim = states.first().map_or(0, |s| s.len());
    let mut mean = DVector::zeros(dim);
    for (s, w) in states.iter().zip(weights) {
        mean += *s * *w;
    }
    for i in 0..dim {
        if space.angles.contains(&(i % space.period.max(1))) {
            let (sin, cos) = states
                .iter()
                .zip(weights)
                .fold((0.0, 0.0), |(a, b), (s, w)| (a + w * s[i].sin(), b + w * s[i].cos()));
            mean[i] = wrap_angle(sin.atan2(cos));
        }
    }
    mean
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent random stream for one (step, particle) pair.
pub fn stream_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(step ^ splitmix(index))))
}

/// Random stream for the birth of measurement `z`, keyed by its content so
/// that the frame order does not matter.
pub(crate) fn measurement_rng(key: u64, z: &DVector<f64>) -> ChaCha8Rng {
    let h = z.iter().fold(splitmix(key), |h, v| splitmix(h ^ v.to_bits()));
    ChaCha8Rng::seed_from_u64(h)
}

/// Draws the next vehicle state from the transition density.
pub(crate) fn sample_transition<S: SlamModel, R: Rng + ?Sized>(
    model: &S,
    noise_root: &DMatrix<f64>,
    s: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let mut next = model.transition(s) + noise_root * standard_normal(rng, s.len());
    model.vehicle_space().normalize(&mut next);
    next
}

/// Normalises, records the effective sample size and resamples when it falls below the threshold.
pub(crate) fn finish_particle_step<M: Clone>(
    state: &mut ParticleSlamState<M>,
    log_multipliers: Vec<f64>,
    counts: Vec<MapCounts>,
    cfg: &FilterConfig,
) -> Result<StepReport> {
    state.normalize_weights()?;
    let weights = state.weights();
    let ess = effective_sample_size(&weights);
    let n = state.particles.len();
    let resampled = ess < cfg.resample_fraction * n as f64;
    if resampled {
        let mut rng = stream_rng(cfg.seed, state.step as u64, u64::MAX);
        let picks = systematic_resample(&weights, n, &mut rng);
        let log_w = -(n as f64).ln();
        state.particles = picks
            .into_iter()
            .map(|i| {
                let mut p = state.particles[i].clone();
                p.log_weight = log_w;
                p
            })
            .collect();
    }
    state.step += 1;
    Ok(StepReport {
        log_multipliers,
        counts,
        ess,
        resampled,
    })
}
