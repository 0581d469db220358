//! Rao–Blackwellised PMB SLAM: belief-propagation association, TOMB/P
//! reduction and Bethe-free-energy particle weights.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use super::prune::prune_pmb;
use super::update::{birth_update, detected_update, Birth, LocalUpdate, StepContext, VehicleBelief};
use super::{finish_particle_step, measurement_rng, is_permanent, sample_transition, stream_rng, thin_undetected, FilterConfig, MapCounts, ParticleSlamState, SlamModel, StepReport};
use crate::assoc::{bethe_free_energy, lbp_marginals, tombp_reduce, AssociationProblem, Beliefs};
use crate::error::Result;
use crate::linalg::psd_sqrt;
use crate::rfs::{BernoulliComponent, PmbDensity};

/// Outcome of one PMB map update.
#[derive(Clone, Debug)]
pub struct PmbUpdate {
    /// Pruned posterior map.
    pub map: PmbDensity,
    /// `−F`, the log of the Bethe estimate of the association normaliser.
    pub log_multiplier: f64,
    pub beliefs: Beliefs,
    pub counts: MapCounts,
}

/// Steps i–iv, belief propagation and TOMB/P reduction for one PMB map.
pub fn pmb_map_update<M: SlamModel, R: Rng + ?Sized>(
    ctx: &StepContext<M>,
    vehicle: VehicleBelief,
    map: &PmbDensity,
    zs: &[DVector<f64>],
    rng: &mut R,
) -> Result<PmbUpdate> {
    let cfg = ctx.cfg;
    let locals: Vec<LocalUpdate> = map
        .bernoullis
        .iter()
        .map(|b| LocalUpdate::new(ctx, vehicle, b, zs))
        .collect::<Result<_>>()?;
    let key: u64 = rng.random();
    let births: Vec<Birth> = zs
        .iter()
        .map(|z| birth_update(ctx, vehicle, &map.undetected, z, &mut measurement_rng(key, z)))
        .collect::<Result<_>>()?;
    let problem = AssociationProblem::from_log(
        locals.iter().map(|u| u.missed.log_nu).collect(),
        locals.iter().map(|u| u.detect_log_nu.clone()).collect(),
        births.iter().map(|b| b.log_nu).collect(),
    )?;
    let beliefs = lbp_marginals(&problem, &cfg.lbp);
    let free_energy = bethe_free_energy(&problem, &beliefs);
    let detected: Vec<Vec<Option<BernoulliComponent>>> = map
        .bernoullis
        .iter()
        .zip(&locals)
        .map(|(b, u)| {
            zs.iter()
                .zip(&u.detect_log_nu)
                .map(|(z, nu)| {
                    if nu.is_finite() {
                        Ok(detected_update(ctx, b, &u.preds, z)?.map(|d| d.component))
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let missed: Vec<BernoulliComponent> = locals.iter().map(|u| u.missed.component.clone()).collect();
    let new: Vec<Option<BernoulliComponent>> = births.into_iter().map(|b| b.component).collect();
    let reduced = tombp_reduce(&missed, &detected, &new, &beliefs)?;
    let counts = MapCounts {
        prior: map.bernoullis.len(),
        measurements: zs.len(),
        updated: reduced.bernoullis.len(),
    };
    let bernoullis = reduced
        .bernoullis
        .into_iter()
        .zip(reduced.prunable)
        .filter(|(b, prunable)| is_permanent(b) || !prunable)
        .map(|(b, _)| b)
        .collect();
    let mut posterior = PmbDensity {
        undetected: thin_undetected(&map.undetected, cfg),
        bernoullis,
    };
    prune_pmb(&mut posterior, cfg);
    let log_multiplier = -free_energy - cfg.p_d_undetected * map.undetected.integral();
    Ok(PmbUpdate {
        map: posterior,
        log_multiplier,
        beliefs,
        counts,
    })
}

/// One PMB SLAM step: sample the vehicle, update every particle's map, reweight and resample.
pub fn pmb_step<M: SlamModel>(
    state: &mut ParticleSlamState<PmbDensity>,
    zs: &[DVector<f64>],
    model: &M,
    cfg: &FilterConfig,
) -> Result<StepReport> {
    cfg.validate()?;
    let ctx = StepContext::new(model, cfg)?;
    let noise_root = psd_sqrt(model.process_noise());
    let step = state.step as u64;
    let results: Vec<(f64, MapCounts)> = state
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(n, p)| {
            let mut rng = stream_rng(cfg.seed, step, n as u64);
            p.state = sample_transition(model, &noise_root, &p.state, &mut rng);
            let update = pmb_map_update(&ctx, VehicleBelief::Point(&p.state), &p.map, zs, &mut rng)?;
            p.map = update.map;
            p.log_weight += update.log_multiplier;
            Ok((update.log_multiplier, update.counts))
        })
        .collect::<Result<_>>()?;
    let (log_multipliers, counts) = results.into_iter().unzip();
    finish_particle_step(state, log_multipliers, counts, cfg)
}
