//! Rao–Blackwellised PMBM SLAM: each particle carries a full hypothesis forest.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use super::prune::prune_pmbm;
use super::update::{birth_update, detected_update, Birth, LocalUpdate, StepContext, VehicleBelief};
use super::{finish_particle_step, measurement_rng, sample_transition, stream_rng, thin_undetected, FilterConfig, MapCounts, ParticleSlamState, SlamModel, StepReport};
use crate::assoc::{murty_kbest_within, AssociationProblem};
use crate::error::Result;
use crate::linalg::{log_sum_exp, psd_sqrt};
use crate::rfs::{BernoulliComponent, GlobalHypothesis, PmbmDensity, PppIntensity};

/// A PMBM holding only the base station.
pub fn initial_pmbm(undetected: PppIntensity, base_station: BernoulliComponent) -> PmbmDensity {
    PmbmDensity {
        undetected,
        tracks: vec![vec![base_station]],
        hypotheses: vec![GlobalHypothesis {
            assignments: vec![Some(0)],
            log_weight: 0.0,
        }],
    }
}

/// One candidate posterior hypothesis before its components are built.
struct Child {
    parent: usize,
    /// Per present track row: 0 for a miss, `j + 1` for measurement `j`.
    assignment: Vec<usize>,
    log_weight: f64,
}

/// Map update of one PMBM given the vehicle state `s`.
///
/// Replaces `map` with the pruned posterior and returns the log weight
/// multiplier `ln Σ_a β_a Σ_{a'} w(a')` together with the track counts. When no
/// valid association exists the map is left unchanged and the multiplier is `−∞`.
pub fn pmbm_map_update<M: SlamModel, R: Rng + ?Sized>(
    ctx: &StepContext<M>,
    s: &DVector<f64>,
    map: &mut PmbmDensity,
    zs: &[DVector<f64>],
    rng: &mut R,
) -> Result<(f64, MapCounts)> {
    let cfg = ctx.cfg;
    let vehicle = VehicleBelief::Point(s);
    let n_tracks = map.tracks.len();
    let n_meas = zs.len();
    let locals: Vec<Vec<LocalUpdate>> = map
        .tracks
        .iter()
        .map(|t| t.iter().map(|b| LocalUpdate::new(ctx, vehicle, b, zs)).collect())
        .collect::<Result<_>>()?;
    let key: u64 = rng.random();
    let births: Vec<Birth> = zs
        .iter()
        .map(|z| birth_update(ctx, vehicle, &map.undetected, z, &mut measurement_rng(key, z)))
        .collect::<Result<_>>()?;
    let log_new: Vec<f64> = births.iter().map(|b| b.log_nu).collect();

    let mut children = Vec::new();
    for (a, h) in map.hypotheses.iter().enumerate() {
        let rows: Vec<&LocalUpdate> = h
            .assignments
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| &locals[i][l]))
            .collect();
        let problem = AssociationProblem::from_log(
            rows.iter().map(|u| u.missed.log_nu).collect(),
            rows.iter().map(|u| u.detect_log_nu.clone()).collect(),
            log_new.clone(),
        )?;
        let k = ((cfg.max_hypotheses as f64) * h.log_weight.exp()).ceil().max(1.0) as usize;
        for ranked in murty_kbest_within(&problem, k, cfg.prune_hypothesis.ln()) {
            children.push(Child {
                parent: a,
                assignment: ranked.assignment,
                log_weight: h.log_weight + ranked.log_weight,
            });
        }
    }
    let counts = MapCounts {
        prior: n_tracks,
        measurements: n_meas,
        updated: n_tracks + n_meas,
    };
    let log_chi = log_sum_exp(children.iter().map(|c| c.log_weight));
    if children.is_empty() || !log_chi.is_finite() {
        return Ok((f64::NEG_INFINITY, counts));
    }
    children.sort_by(|a, b| {
        b.log_weight
            .total_cmp(&a.log_weight)
            .then_with(|| a.parent.cmp(&b.parent))
            .then_with(|| a.assignment.cmp(&b.assignment))
    });
    let best = children[0].log_weight;
    let floor = best + cfg.prune_hypothesis.ln();
    let keep = children.iter().take_while(|c| c.log_weight >= floor).count().clamp(1, cfg.max_hypotheses);
    children.truncate(keep);

    let mut tracks: Vec<Vec<BernoulliComponent>> = vec![Vec::new(); n_tracks + n_meas];
    let mut made: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for (j, b) in births.iter().enumerate() {
        if let Some(c) = &b.component {
            tracks[n_tracks + j].push(c.clone());
        }
    }
    let mut hypotheses = Vec::with_capacity(children.len());
    for child in &children {
        let parent = &map.hypotheses[child.parent];
        let mut assignments = vec![None; n_tracks + n_meas];
        let mut used = vec![false; n_meas];
        let mut row = 0;
        for (i, l) in parent.assignments.iter().enumerate() {
            let Some(l) = *l else { continue };
            let a = child.assignment[row];
            row += 1;
            if a > 0 {
                used[a - 1] = true;
            }
            let key = (i, l, a);
            let idx = match made.get(&key) {
                Some(&idx) => Some(idx),
                None => {
                    let local = &locals[i][l];
                    let component = if a == 0 {
                        Some(local.missed.component.clone())
                    } else {
                        detected_update(ctx, &map.tracks[i][l], &local.preds, &zs[a - 1])?.map(|u| u.component)
                    };
                    component.map(|c| {
                        tracks[i].push(c);
                        made.insert(key, tracks[i].len() - 1);
                        tracks[i].len() - 1
                    })
                }
            };
            assignments[i] = idx;
        }
        for j in 0..n_meas {
            if !used[j] && !tracks[n_tracks + j].is_empty() {
                assignments[n_tracks + j] = Some(0);
            }
        }
        hypotheses.push(GlobalHypothesis {
            assignments,
            log_weight: child.log_weight - log_chi,
        });
    }
    let mut posterior = PmbmDensity {
        undetected: thin_undetected(&map.undetected, cfg),
        tracks,
        hypotheses,
    };
    prune_pmbm(&mut posterior, cfg)?;
    *map = posterior;
    Ok((log_chi - cfg.p_d_undetected * map.undetected.integral(), counts))
}

/// One PMBM SLAM step: sample the vehicle, update every particle's map, reweight and resample.
pub fn pmbm_step<M: SlamModel>(
    state: &mut ParticleSlamState<PmbmDensity>,
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
            let (log_m, counts) = pmbm_map_update(&ctx, &p.state, &mut p.map, zs, &mut rng)?;
            p.log_weight += log_m;
            Ok((log_m, counts))
        })
        .collect::<Result<_>>()?;
    let (log_multipliers, counts) = results.into_iter().unzip();
    finish_particle_step(state, log_multipliers, counts, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{LinearModel, Particle};
    use crate::linalg::LN_2PI;
    use crate::rfs::{GaussianDensity, LandmarkType, UniformBox};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(clutter: f64) -> LinearModel {
        LinearModel::new(
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 0.25),
            vec![LandmarkType::Va],
            clutter,
        )
        .unwrap()
    }

    fn cfg() -> FilterConfig {
        FilterConfig {
            particles: 1,
            robust_factor: 1.0,
            ..FilterConfig::default()
        }
    }

    fn va(r: f64, mean: f64, var: f64) -> BernoulliComponent {
        BernoulliComponent::single_type(
            r,
            LandmarkType::Va,
            GaussianDensity::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var)).unwrap(),
        )
    }

    fn ppp(mass: f64) -> PppIntensity {
        PppIntensity::uniform(UniformBox::new(vec![-50.0], vec![50.0]).unwrap(), &[(LandmarkType::Va, mass)]).unwrap()
    }

    fn single(map: PmbmDensity, s: f64) -> ParticleSlamState<PmbmDensity> {
        ParticleSlamState {
            particles: vec![Particle {
                state: DVector::from_element(1, s),
                log_weight: 0.0,
                map,
            }],
            step: 0,
        }
    }

    fn normal(x: f64, mean: f64, var: f64) -> f64 {
        (-(x - mean).powi(2) / (2.0 * var) - 0.5 * (LN_2PI + var.ln())).exp()
    }

    #[test]
    fn empty_frame_keeps_map_and_weight() {
        let model = toy(0.0);
        let cfg = cfg();
        let mut state = single(initial_pmbm(ppp(2.0), va(0.7, 1.0, 0.5)), 0.0);
        let report = pmbm_step(&mut state, &[], &model, &cfg).unwrap();
        assert_eq!(report.log_multipliers, vec![0.0]);
        let map = &state.particles[0].map;
        assert_eq!(map.tracks.len(), 1);
        assert!((map.tracks[0][0].existence - 0.7).abs() < 1e-15);
        assert!(state.particles[0].log_weight.abs() < 1e-15);
    }

    #[test]
    fn two_hypothesis_weights_match_enumeration() {
        let model = toy(0.0);
        let cfg = cfg();
        let ctx = StepContext::new(&model, &cfg).unwrap();
        let mut map = initial_pmbm(ppp(2.0), va(0.7, 1.0, 0.5));
        let s = DVector::from_element(1, 0.3);
        let z = 1.2;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (log_m, counts) = pmbm_map_update(&ctx, &s, &mut map, &[DVector::from_element(1, z)], &mut rng).unwrap();
        assert_eq!(counts.updated, 2);
        let detect = 0.7 * 0.95 * normal(z, 0.7, 0.75);
        let missed = 1.0 - 0.7 * 0.95;
        let birth = 0.95 * 2.0 / 100.0;
        let total = detect + missed * birth;
        assert!((log_m - total.ln()).abs() < 1e-9);
        let mut probs: Vec<f64> = map.hypotheses.iter().map(|h| h.log_weight.exp()).collect();
        probs.sort_by(|a, b| b.total_cmp(a));
        let mut expected = vec![detect / total, missed * birth / total];
        expected.sort_by(|a, b| b.total_cmp(a));
        for (p, e) in probs.iter().zip(&expected) {
            assert!((p - e).abs() < 1e-9);
        }
        assert!(map.is_consistent());
    }

    #[test]
    fn hypothesis_count_respects_cap() {
        let model = toy(0.01);
        let cfg = FilterConfig {
            max_hypotheses: 3,
            ..cfg()
        };
        let ctx = StepContext::new(&model, &cfg).unwrap();
        let mut map = initial_pmbm(ppp(2.0), va(0.9, 0.0, 1.0));
        let s = DVector::from_element(1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3 {
            let zs: Vec<DVector<f64>> = [0.1, 0.4, -0.3].iter().map(|&z| DVector::from_element(1, z)).collect();
            pmbm_map_update(&ctx, &s, &mut map, &zs, &mut rng).unwrap();
            assert!(map.hypotheses.len() <= 3);
            assert!(map.is_consistent());
            let total: f64 = map.hypotheses.iter().map(|h| h.log_weight.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_particles_keep_uniform_weights() {
        let model = toy(0.01);
        let cfg = FilterConfig {
            particles: 4,
            ..cfg()
        };
        let prior = GaussianDensity::new(DVector::from_element(1, 0.0), DMatrix::zeros(1, 1)).unwrap();
        let mut state = ParticleSlamState::from_prior(
            &prior,
            initial_pmbm(ppp(2.0), va(0.7, 1.0, 0.5)),
            4,
            crate::ckf::Space::EUCLIDEAN,
            3,
        )
        .unwrap();
        let zs = vec![DVector::from_element(1, 1.1)];
        let report = pmbm_step(&mut state, &zs, &model, &cfg).unwrap();
        for w in state.weights() {
            assert!((w - 0.25).abs() < 1e-12);
        }
        assert!(!report.resampled);
    }
}
