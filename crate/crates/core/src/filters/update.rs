//! Map-update steps shared by the filters: missed detection, detection and birth.
//!
//! Each step returns the updated Bernoulli together with the log of its
//! normalising constant `ν`, the weight used by the association problem.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{FilterConfig, SlamModel};
use crate::ckf::{apply_measurement, birth_density, predict_measurement, MeasurementPrediction};
use crate::error::{Result, SlamError};
use crate::linalg::{block_diag, log_sum_exp, GaussianEvaluator};
use crate::rfs::{BernoulliComponent, GaussianDensity, LandmarkType, PppIntensity, TypeComponent};

/// The vehicle as seen by the map update.
#[derive(Clone, Copy, Debug)]
pub enum VehicleBelief<'a> {
    /// A particle: the state is known exactly.
    Point(&'a DVector<f64>),
    /// A Gaussian density with its cubature points.
    Gaussian {
        density: &'a GaussianDensity,
        points: &'a [DVector<f64>],
    },
}

impl VehicleBelief<'_> {
    fn points(&self) -> Vec<DVector<f64>> {
        match self {
            VehicleBelief::Point(s) => vec![(*s).clone()],
            VehicleBelief::Gaussian { points, .. } => points.to_vec(),
        }
    }

    fn mean(&self) -> &DVector<f64> {
        match self {
            VehicleBelief::Point(s) => s,
            VehicleBelief::Gaussian { density, .. } => &density.mean,
        }
    }
}

/// Per-step constants shared by every Bernoulli.
#[derive(Clone, Debug)]
pub struct StepContext<'a, M: SlamModel> {
    pub model: &'a M,
    pub cfg: &'a FilterConfig,
    pub gate: f64,
    /// Robust measurement noise `R_U` per type.
    pub robust_noise: [DMatrix<f64>; 3],
}

impl<'a, M: SlamModel> StepContext<'a, M> {
    pub fn new(model: &'a M, cfg: &'a FilterConfig) -> Result<Self> {
        let robust = |t: LandmarkType| model.meas_noise(t) * cfg.robust_factor;
        Ok(Self {
            model,
            cfg,
            gate: cfg.gate(model.meas_dim())?,
            robust_noise: LandmarkType::ALL.map(robust),
        })
    }
}

/// Predicted measurement of one type hypothesis of a Bernoulli.
#[derive(Clone, Debug)]
pub struct TypePrediction {
    pub landmark_type: LandmarkType,
    /// Prior the prediction was built from: the landmark alone, or vehicle and landmark stacked.
    pub prior: GaussianDensity,
    /// Offset of the landmark inside `prior`.
    pub offset: usize,
    pub pred: MeasurementPrediction,
}

fn is_geometric(e: &SlamError) -> bool {
    matches!(e, SlamError::UndefinedAngle(_) | SlamError::DegenerateGeometry(_))
}

/// Robust measurement predictions for every type hypothesis of `b`.
///
/// Types whose measurement is geometrically undefined are left out and are
/// treated as undetectable.
pub fn predict_bernoulli<M: SlamModel>(
    ctx: &StepContext<M>,
    vehicle: VehicleBelief,
    b: &BernoulliComponent,
) -> Result<Vec<TypePrediction>> {
    let model = ctx.model;
    let mut out = Vec::new();
    for (t, comp) in b.active_types() {
        let Some(density) = &comp.density else { continue };
        let r = &ctx.robust_noise[t.index()];
        let (prior, offset, pred) = match vehicle {
            VehicleBelief::Point(s) => {
                let pred = predict_measurement(
                    density,
                    |x| model.measure(s, x, t),
                    r,
                    crate::ckf::Space::EUCLIDEAN,
                    model.meas_space(),
                );
                (density.clone(), 0, pred)
            }
            VehicleBelief::Gaussian { density: v, .. } => {
                let dv = v.dim();
                let mean = DVector::from_iterator(
                    dv + density.dim(),
                    v.mean.iter().chain(density.mean.iter()).copied(),
                );
                let joint = GaussianDensity::from_parts(mean, block_diag(&[&v.cov, &density.cov]));
                let pred = predict_measurement(
                    &joint,
                    |j| model.measure(&j.rows(0, dv).into_owned(), &j.rows(dv, j.len() - dv).into_owned(), t),
                    r,
                    model.vehicle_space(),
                    model.meas_space(),
                );
                (joint, dv, pred)
            }
        };
        match pred {
            Ok(pred) => out.push(TypePrediction {
                landmark_type: t,
                prior,
                offset,
                pred,
            }),
            Err(e) if is_geometric(&e) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// A Bernoulli after one update step with `ln ν`.
#[derive(Clone, Debug)]
pub struct Updated {
    pub component: BernoulliComponent,
    pub log_nu: f64,
}

/// Missed-detection update.
///
/// A type is detectable when some measurement falls inside its gate; the
/// existence shrinks by the detectable mass.
pub fn missed_update<M: SlamModel>(
    ctx: &StepContext<M>,
    b: &BernoulliComponent,
    preds: &[TypePrediction],
    zs: &[DVector<f64>],
) -> Updated {
    let mut per_type = b.per_type.clone();
    let mut mass = 0.0;
    for t in LandmarkType::ALL {
        let w = b.type_weight(t);
        if w <= 0.0 {
            continue;
        }
        let gated = preds
            .iter()
            .find(|p| p.landmark_type == t)
            .is_some_and(|p| zs.iter().any(|z| p.pred.mahalanobis_sq(z) < ctx.gate));
        let p_d = if gated { ctx.cfg.p_d } else { 0.0 };
        per_type[t.index()].weight = w * (1.0 - p_d);
        mass += w * (1.0 - p_d);
    }
    let r = b.existence;
    let nu = 1.0 - r + r * mass;
    if mass > 0.0 {
        for c in &mut per_type {
            c.weight /= mass;
        }
    } else {
        per_type = b.per_type.clone();
    }
    let existence = if nu > 0.0 { (r * mass / nu).clamp(0.0, 1.0) } else { 0.0 };
    Updated {
        component: BernoulliComponent {
            existence,
            per_type,
            log_weight: b.log_weight,
        },
        log_nu: nu.ln(),
    }
}

fn detection_log_terms(ctx: &StepContext<impl SlamModel>, b: &BernoulliComponent, preds: &[TypePrediction], z: &DVector<f64>) -> Vec<(usize, f64)> {
    if ctx.cfg.p_d <= 0.0 || b.existence <= 0.0 {
        return Vec::new();
    }
    preds
        .iter()
        .enumerate()
        .filter(|(_, p)| p.pred.mahalanobis_sq(z) < ctx.gate)
        .map(|(k, p)| {
            (
                k,
                b.type_weight(p.landmark_type).ln() + ctx.cfg.p_d.ln() + p.pred.log_likelihood(z),
            )
        })
        .collect()
}

/// `ln ν` of the detection of `b` by `z`; `−∞` when `z` is outside every gate.
pub fn detected_log_nu<M: SlamModel>(
    ctx: &StepContext<M>,
    b: &BernoulliComponent,
    preds: &[TypePrediction],
    z: &DVector<f64>,
) -> f64 {
    let terms = detection_log_terms(ctx, b, preds, z);
    if terms.is_empty() {
        return f64::NEG_INFINITY;
    }
    b.existence.ln() + log_sum_exp(terms.iter().map(|(_, l)| *l))
}

/// The Bernoulli updated with measurement `z`; `None` when `z` is outside every gate.
pub fn detected_update<M: SlamModel>(
    ctx: &StepContext<M>,
    b: &BernoulliComponent,
    preds: &[TypePrediction],
    z: &DVector<f64>,
) -> Result<Option<Updated>> {
    let terms = detection_log_terms(ctx, b, preds, z);
    if terms.is_empty() {
        return Ok(None);
    }
    let total = log_sum_exp(terms.iter().map(|(_, l)| *l));
    let mut per_type: [TypeComponent; 3] = std::array::from_fn(|_| TypeComponent::zero());
    for (k, log_e) in &terms {
        let p = &preds[*k];
        let post = apply_measurement(&p.prior, &p.pred, z, ctx.model.vehicle_space())?;
        let d = post.dim() - p.offset;
        let landmark = GaussianDensity::from_parts(
            post.mean.rows(p.offset, d).into_owned(),
            post.cov.view((p.offset, p.offset), (d, d)).into_owned(),
        );
        per_type[p.landmark_type.index()] = TypeComponent {
            weight: (log_e - total).exp(),
            density: Some(landmark),
        };
    }
    Ok(Some(Updated {
        component: BernoulliComponent {
            existence: 1.0,
            per_type,
            log_weight: b.log_weight,
        },
        log_nu: b.existence.ln() + total,
    }))
}

/// New-landmark update for measurement `z`.
///
/// The component is `None` when no birth type can explain `z`; `ln ν` then
/// reduces to the clutter intensity.
#[derive(Clone, Debug)]
pub struct Birth {
    pub component: Option<BernoulliComponent>,
    pub log_nu: f64,
}

/// Birth update from the undetected intensity, by importance sampling.
pub fn birth_update<M: SlamModel, R: Rng + ?Sized>(
    ctx: &StepContext<M>,
    vehicle: VehicleBelief,
    undetected: &PppIntensity,
    z: &DVector<f64>,
    rng: &mut R,
) -> Result<Birth> {
    let model = ctx.model;
    let clutter = model.clutter_intensity(z);
    let mut log_e: Vec<(LandmarkType, f64, GaussianDensity)> = Vec::new();
    if ctx.cfg.p_d > 0.0 {
        let points = vehicle.points();
        let anchor = vehicle.mean();
        for &t in model.birth_types() {
            let mass = undetected.weight_of(t);
            let Some(region) = undetected.region_of(t) else {
                continue;
            };
            if mass <= 0.0 {
                continue;
            }
            let r = &ctx.robust_noise[t.index()];
            let Some(samples) = birth_density(
                &points,
                z,
                r,
                |s, zc| model.birth_point(s, zc, t),
                region,
                ctx.cfg.birth_samples,
                rng,
            )?
            else {
                continue;
            };
            // A Gaussian vehicle contributes the cubature spread at the proposal mean,
            // shared by every sample.
            let (eval, offset) = match vehicle {
                VehicleBelief::Point(_) => (GaussianEvaluator::new(r)?, None),
                VehicleBelief::Gaussian { density, .. } => {
                    let centre = &samples.proposal.mean;
                    let shared = predict_measurement(density, |s| model.measure(s, centre, t), r, model.vehicle_space(), model.meas_space())
                        .and_then(|pred| Ok((model.measure(anchor, centre, t)?, pred)));
                    match shared {
                        Ok((h0, pred)) => (
                            GaussianEvaluator::new(&pred.cov)?,
                            Some(model.meas_space().diff(&pred.mean, &h0)),
                        ),
                        Err(e) if is_geometric(&e) => continue,
                        Err(e) => return Err(e),
                    }
                }
            };
            let mut terms = Vec::with_capacity(samples.samples.len());
            for (x, w) in samples.samples.iter().zip(&samples.weights) {
                if *w <= 0.0 || !model.in_fov(anchor, x, t) {
                    continue;
                }
                let mut zh = match model.measure(anchor, x, t) {
                    Ok(zh) => zh,
                    Err(e) if is_geometric(&e) => continue,
                    Err(e) => return Err(e),
                };
                if let Some(o) = &offset {
                    zh += o;
                }
                let log_g = eval.log_pdf(&model.meas_space().diff(z, &zh));
                terms.push(w.ln() + log_g);
            }
            if terms.is_empty() {
                continue;
            }
            let le = ctx.cfg.p_d.ln() + mass.ln() + samples.log_mean_raw_weight + log_sum_exp(terms);
            if le.is_finite() {
                log_e.push((t, le, samples.proposal));
            }
        }
    }
    let log_sum_e = log_sum_exp(log_e.iter().map(|(_, l, _)| *l));
    let log_nu = log_sum_exp([log_sum_e, clutter.ln()]);
    if log_e.is_empty() || !log_nu.is_finite() {
        return Ok(Birth {
            component: None,
            log_nu,
        });
    }
    let mut per_type: [TypeComponent; 3] = std::array::from_fn(|_| TypeComponent::zero());
    for (t, le, proposal) in log_e {
        per_type[t.index()] = TypeComponent {
            weight: (le - log_sum_e).exp(),
            density: Some(proposal),
        };
    }
    Ok(Birth {
        component: Some(BernoulliComponent {
            existence: (log_sum_e - log_nu).exp().clamp(0.0, 1.0),
            per_type,
            log_weight: 0.0,
        }),
        log_nu,
    })
}

/// Step outputs for one Bernoulli against a whole measurement set.
#[derive(Clone, Debug)]
pub struct LocalUpdate {
    pub preds: Vec<TypePrediction>,
    pub missed: Updated,
    /// `ln ν` per measurement.
    pub detect_log_nu: Vec<f64>,
}

impl LocalUpdate {
    pub fn new<M: SlamModel>(
        ctx: &StepContext<M>,
        vehicle: VehicleBelief,
        b: &BernoulliComponent,
        zs: &[DVector<f64>],
    ) -> Result<Self> {
        let preds = predict_bernoulli(ctx, vehicle, b)?;
        let missed = missed_update(ctx, b, &preds, zs);
        let detect_log_nu = zs.iter().map(|z| detected_log_nu(ctx, b, &preds, z)).collect();
        Ok(Self {
            preds,
            missed,
            detect_log_nu,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::LinearModel;
    use crate::linalg::LN_2PI;
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
            robust_factor: 1.0,
            ..FilterConfig::default()
        }
    }

    fn bern(r: f64, mean: f64, var: f64) -> BernoulliComponent {
        BernoulliComponent::single_type(
            r,
            LandmarkType::Va,
            GaussianDensity::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var)).unwrap(),
        )
    }

    fn normal(x: f64, mean: f64, var: f64) -> f64 {
        (-(x - mean).powi(2) / (2.0 * var) - 0.5 * (LN_2PI + var.ln())).exp()
    }

    #[test]
    fn missed_update_inside_gate_shrinks_existence() {
        let model = toy(0.0);
        let cfg = cfg();
        let ctx = StepContext::new(&model, &cfg).unwrap();
        let s = DVector::from_element(1, 0.0);
        let b = bern(0.6, 1.0, 0.5);
        let preds = predict_bernoulli(&ctx, VehicleBelief::Point(&s), &b).unwrap();
        let zs = vec![DVector::from_element(1, 1.2)];
        let out = missed_update(&ctx, &b, &preds, &zs);
        let nu: f64 = 1.0 - 0.6 + 0.6 * 0.05;
        assert!((out.log_nu - nu.ln()).abs() < 1e-12);
        assert!((out.component.existence - 0.6 * 0.05 / nu).abs() < 1e-12);
    }

    #[test]
    fn missed_update_without_gated_measurement_keeps_existence() {
        let model = toy(0.0);
        let cfg = cfg();
        let ctx = StepContext::new(&model, &cfg).unwrap();
        let s = DVector::from_element(1, 0.0);
        let b = bern(0.6, 1.0, 0.5);
        let preds = predict_bernoulli(&ctx, VehicleBelief::Point(&s), &b).unwrap();
        let out = missed_update(&ctx, &b, &preds, &[DVector::from_element(1, 50.0)]);
        assert!(out.log_nu.abs() < 1e-12);
        assert!((out.component.existence - 0.6).abs() < 1e-12);
    }

    #[test]
    fn detected_update_matches_kalman() {
        let model = toy(0.0);
        let cfg = cfg();
        let ctx = StepContext::new(&model, &cfg).unwrap();
        let s = DVector::from_element(1, 0.3);
        let b = bern(0.6, 1.0, 0.5);
        let preds = predict_bernoulli(&ctx, VehicleBelief::Point(&s), &b).unwrap();
        let z = DVector::from_element(1, 1.1);
        let out = detected_update(&ctx, &b, &preds, &z).unwrap().unwrap();
        let innov_var = 0.5 + 0.25;
        let nu = 0.6 * 0.95 * normal(1.1, 1.0 - 0.3, innov_var);
        assert!((out.log_nu - nu.ln()).abs() < 1e-10);
        let gain = 0.5 / innov_var;
        let g = out.component.density(LandmarkType::Va).unwrap();
        assert!((g.mean[0] - (1.0 + gain * (1.1 - 0.7))).abs() < 1e-10);
        assert!((g.cov[(0, 0)] - (1.0 - gain) * 0.5).abs() < 1e-10);
        assert_eq!(out.component.existence, 1.0);
        assert!((detected_log_nu(&ctx, &b, &preds, &z) - out.log_nu).abs() < 1e-14);
    }

    #[test]
    fn far_measurement_cannot_be_a_detection() {
        let model = toy(0.0);
        let cfg = cfg();
        let ctx = StepContext::new(&model, &cfg).unwrap();
        let s = DVector::from_element(1, 0.0);
        let b = bern(0.6, 1.0, 0.5);
        let preds = predict_bernoulli(&ctx, VehicleBelief::Point(&s), &b).unwrap();
        let z = DVector::from_element(1, 40.0);
        assert!(detected_update(&ctx, &b, &preds, &z).unwrap().is_none());
        assert_eq!(detected_log_nu(&ctx, &b, &preds, &z), f64::NEG_INFINITY);
    }

    #[test]
    fn birth_constant_equals_prior_mass_times_uniform_density() {
        // with the proposal equal to the likelihood every importance term is 1/V
        let model = toy(0.02);
        let cfg = cfg();
        let ctx = StepContext::new(&model, &cfg).unwrap();
        let region = crate::rfs::UniformBox::new(vec![-100.0], vec![100.0]).unwrap();
        let ppp = PppIntensity::uniform(region, &[(LandmarkType::Va, 3.0)]).unwrap();
        let s = DVector::from_element(1, 0.4);
        let z = DVector::from_element(1, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = birth_update(&ctx, VehicleBelief::Point(&s), &ppp, &z, &mut rng).unwrap();
        let e = 0.95 * 3.0 / 200.0;
        assert!((out.log_nu - (e + 0.02f64).ln()).abs() < 1e-12);
        let b = out.component.unwrap();
        assert!((b.existence - e / (e + 0.02)).abs() < 1e-12);
        let g = b.density(LandmarkType::Va).unwrap();
        assert!((g.mean[0] - 2.4).abs() < 1e-12);
        assert!((g.cov[(0, 0)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn clutter_only_measurement_has_clutter_constant() {
        let model = toy(0.02);
        let cfg = cfg();
        let ctx = StepContext::new(&model, &cfg).unwrap();
        let ppp = PppIntensity::new(Vec::new()).unwrap();
        let s = DVector::from_element(1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = birth_update(&ctx, VehicleBelief::Point(&s), &ppp, &DVector::from_element(1, 1.0), &mut rng).unwrap();
        assert!(out.component.is_none());
        assert!((out.log_nu - 0.02f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_vehicle_detection_matches_joint_kalman() {
        let model = toy(0.0);
        let cfg = cfg();
        let ctx = StepContext::new(&model, &cfg).unwrap();
        let v = GaussianDensity::new(DVector::from_element(1, 0.2), DMatrix::from_element(1, 1, 0.3)).unwrap();
        let points = crate::ckf::cubature_points(&v).unwrap().points;
        let vehicle = VehicleBelief::Gaussian {
            density: &v,
            points: &points,
        };
        let b = bern(1.0, 1.0, 0.5);
        let preds = predict_bernoulli(&ctx, vehicle, &b).unwrap();
        let z = DVector::from_element(1, 0.9);
        let out = detected_update(&ctx, &b, &preds, &z).unwrap().unwrap();
        // z = x − s + r: innovation variance 0.5 + 0.3 + 0.25, landmark gain 0.5 / S
        let s_var = 1.05;
        let g = out.component.density(LandmarkType::Va).unwrap();
        assert!((g.mean[0] - (1.0 + 0.5 / s_var * (0.9 - 0.8))).abs() < 1e-10);
        assert!((g.cov[(0, 0)] - (0.5 - 0.25 / s_var)).abs() < 1e-10);
        assert!((out.log_nu - (0.95 * normal(0.9, 0.8, s_var)).ln()).abs() < 1e-10);
    }
}
