//! Marginalized PMB SLAM: a Gaussian vehicle density next to one PMB map,
//! both propagated with cubature Kalman filtering.

use nalgebra::{DMatrix, DVector};

use super::pmb::pmb_map_update;
use super::update::{StepContext, VehicleBelief};
use super::{stream_rng, FilterConfig, MapCounts, SlamModel};
use crate::assoc::Beliefs;
use crate::ckf::{ckf_predict, cubature_points, dither, joint_ckf_update};
use crate::error::Result;
use crate::rfs::{BernoulliComponent, GaussianDensity, LandmarkType, PmbDensity};

/// Vehicle density and map of the marginalized filter.
#[derive(Clone, Debug)]
pub struct MarginalSlamState {
    pub vehicle: GaussianDensity,
    pub map: PmbDensity,
    /// Number of completed steps.
    pub step: usize,
}

/// Diagnostics of one marginalized step.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalReport {
    pub counts: MapCounts,
    /// Landmark–measurement pairs used in the vehicle update.
    pub selected: Vec<(usize, usize)>,
    pub lbp_converged: bool,
}

/// Most likely landmark–measurement pairs from the landmark beliefs.
///
/// Each landmark proposes its highest-belief association (lowest index on
/// ties); detections are accepted in decreasing belief order and a measurement
/// already taken is not reused.
pub fn hard_decision(beliefs: &Beliefs) -> Vec<(usize, usize)> {
    let mut proposals: Vec<(f64, usize, usize)> = Vec::new();
    for (i, bel) in beliefs.landmark.iter().enumerate() {
        let mut best = 0;
        for (k, &p) in bel.iter().enumerate() {
            if p > bel[best] {
                best = k;
            }
        }
        if best > 0 {
            proposals.push((bel[best], i, best - 1));
        }
    }
    proposals.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut taken = Vec::new();
    let mut pairs = Vec::new();
    for (_, i, j) in proposals {
        if !taken.contains(&j) {
            taken.push(j);
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Whether a landmark is confident enough to correct the vehicle.
fn selectable(b: &BernoulliComponent, threshold: f64) -> Option<LandmarkType> {
    let m = b.dominant_type();
    (b.existence * b.type_weight(m) > threshold && b.density(m).is_some()).then_some(m)
}

/// One marginalized PMB SLAM step.
pub fn mpmb_step<M: SlamModel>(
    state: &mut MarginalSlamState,
    zs: &[DVector<f64>],
    model: &M,
    cfg: &FilterConfig,
) -> Result<MarginalReport> {
    cfg.validate()?;
    let ctx = StepContext::new(model, cfg)?;
    let space = model.vehicle_space();
    let mut predicted = ckf_predict(&state.vehicle, |s| model.transition(s), model.process_noise(), space)?;
    space.normalize(&mut predicted.mean);
    let points = cubature_points(&predicted)?.points;
    let vehicle = VehicleBelief::Gaussian {
        density: &predicted,
        points: &points,
    };
    let mut rng = stream_rng(cfg.seed, state.step as u64, 0);
    let update = pmb_map_update(&ctx, vehicle, &state.map, zs, &mut rng)?;

    let mut selected = Vec::new();
    let mut landmarks: Vec<&GaussianDensity> = Vec::new();
    let mut types = Vec::new();
    let mut z_sel = Vec::new();
    let mut r_sel: Vec<DMatrix<f64>> = Vec::new();
    for (i, j) in hard_decision(&update.beliefs) {
        let b = &state.map.bernoullis[i];
        if let Some(m) = selectable(b, cfg.existence_threshold) {
            selected.push((i, j));
            landmarks.push(b.density(m).expect("selectable types carry a density"));
            types.push(m);
            z_sel.push(zs[j].clone());
            r_sel.push(model.meas_noise(m).clone());
        }
    }
    let vehicle = if selected.is_empty() {
        predicted
    } else {
        let posterior = joint_ckf_update(
            &predicted,
            &landmarks,
            |s, x, l| model.measure(s, x, types[l]),
            &z_sel,
            &r_sel,
            space,
            model.meas_space(),
        )?;
        let mut v = dither(&posterior, cfg.dither_factor)?;
        space.normalize(&mut v.mean);
        v
    };
    state.vehicle = vehicle;
    state.map = update.map;
    state.step += 1;
    Ok(MarginalReport {
        counts: update.counts,
        selected,
        lbp_converged: update.beliefs.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{base_station_bernoulli, LinearModel};
    use crate::rfs::{PppIntensity, UniformBox};

    fn toy() -> LinearModel {
        // vehicle (position, velocity), landmark position, z = x − position
        LinearModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.05, 0.01])),
            DMatrix::identity(1, 1),
            DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
            DMatrix::from_element(1, 1, 0.04),
            vec![LandmarkType::Va],
            0.01,
        )
        .unwrap()
    }

    fn state() -> MarginalSlamState {
        let ppp = PppIntensity::uniform(UniformBox::new(vec![-50.0], vec![50.0]).unwrap(), &[(LandmarkType::Va, 1.0)]).unwrap();
        MarginalSlamState {
            vehicle: GaussianDensity::new(DVector::from_vec(vec![0.0, 1.0]), DMatrix::identity(2, 2) * 0.5).unwrap(),
            map: PmbDensity {
                undetected: ppp,
                bernoullis: vec![base_station_bernoulli(DVector::from_element(1, 10.0), 0.01).unwrap()],
            },
            step: 0,
        }
    }

    #[test]
    fn empty_frame_returns_the_prediction() {
        let model = toy();
        let cfg = FilterConfig::default();
        let mut st = state();
        let report = mpmb_step(&mut st, &[], &model, &cfg).unwrap();
        assert!(report.selected.is_empty());
        assert!((st.vehicle.mean[0] - 1.0).abs() < 1e-12);
        let expected = 0.5 + 0.5 + 0.05;
        assert!((st.vehicle.cov[(0, 0)] - expected).abs() < 1e-12);
        assert_eq!(st.map.bernoullis.len(), 1);
    }

    #[test]
    fn noiseless_base_station_measurement_reduces_error() {
        let model = toy();
        let cfg = FilterConfig::default();
        let mut st = state();
        let truth = 1.6;
        let z = DVector::from_element(1, 10.0 - truth);
        let report = mpmb_step(&mut st, &[z], &model, &cfg).unwrap();
        assert_eq!(report.selected, vec![(0, 0)]);
        let predicted_error: f64 = (1.0 - truth as f64).abs();
        assert!((st.vehicle.mean[0] - truth).abs() < predicted_error);
    }

    #[test]
    fn hard_decision_resolves_conflicts_by_belief() {
        let beliefs = Beliefs {
            landmark: vec![vec![0.2, 0.8, 0.0], vec![0.1, 0.6, 0.3], vec![0.5, 0.25, 0.25]],
            measurement: vec![vec![1.0; 4], vec![1.0; 4]],
            iterations: 1,
            converged: true,
        };
        assert_eq!(hard_decision(&beliefs), vec![(0, 0)]);
    }
}
