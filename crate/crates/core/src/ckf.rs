//! Cubature Kalman filtering: cubature points, predict/update, the joint
//! vehicle–landmark update, importance-sampled birth densities and dithering.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SlamError};
use crate::linalg::{block_diag, matrix_sqrt, symmetrize, wrap_angle, GaussianEvaluator};
use crate::rfs::{GaussianDensity, UniformBox};

/// Marks which vector entries are angles, so differences are wrapped.
///
/// Entry `i` is angular when `i % period` is listed in `angles`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Space {
    pub angles: &'static [usize],
    pub period: usize,
}

impl Space {
    pub const EUCLIDEAN: Space = Space {
        angles: &[],
        period: usize::MAX,
    };

    /// Vehicle state, optionally followed by stacked landmark positions.
    pub const VEHICLE: Space = Space {
        angles: crate::geometry::VEHICLE_ANGLES,
        period: usize::MAX,
    };

    /// One or more stacked channel measurements.
    pub const MEASUREMENT: Space = Space {
        angles: crate::geometry::MEAS_ANGLES,
        period: crate::geometry::MEAS_DIM,
    };

    fn is_angle(&self, i: usize) -> bool {
        !self.angles.is_empty() && self.angles.contains(&(i % self.period))
    }

    /// `a − b` with angular entries wrapped.
    pub fn diff(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut d = a - b;
        for i in 0..d.len() {
            if self.is_angle(i) {
                d[i] = wrap_angle(d[i]);
            }
        }
        d
    }

    pub fn normalize(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            if self.is_angle(i) {
                x[i] = wrap_angle(x[i]);
            }
        }
    }
}

/// Symmetric cubature points with equal weights.
#[derive(Clone, Debug)]
pub struct CubatureSet {
    pub points: Vec<DVector<f64>>,
    pub weight: f64,
}

/// `2d` points at `mean ± √d · L[:, i]`, each with weight `1/(2d)`.
pub fn cubature_points(g: &GaussianDensity) -> Result<CubatureSet> {
    let d = g.dim();
    let l = matrix_sqrt(&g.cov)? * (d as f64).sqrt();
    let mut points = Vec::with_capacity(2 * d);
    for i in 0..d {
        points.push(&g.mean + l.column(i));
    }
    for i in 0..d {
        points.push(&g.mean - l.column(i));
    }
    Ok(CubatureSet {
        points,
        weight: 1.0 / (2 * d) as f64,
    })
}

/// Equal-weight mean and scatter, anchored at the first point for angle wrapping.
pub fn point_moments(points: &[DVector<f64>], space: Space) -> (DVector<f64>, DMatrix<f64>) {
    let w = 1.0 / points.len() as f64;
    let anchor = &points[0];
    let mut offset = DVector::zeros(anchor.len());
    for p in points {
        offset += space.diff(p, anchor) * w;
    }
    let mut mean = anchor + offset;
    space.normalize(&mut mean);
    let mut cov = DMatrix::zeros(mean.len(), mean.len());
    for p in points {
        let d = space.diff(p, &mean);
        cov += &d * d.transpose() * w;
    }
    symmetrize(&mut cov);
    (mean, cov)
}

/// Cubature prediction through `f` with additive noise `q`.
pub fn ckf_predict<F>(prior: &GaussianDensity, f: F, q: &DMatrix<f64>, space: Space) -> Result<GaussianDensity>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let cps = cubature_points(prior)?;
    let propagated: Vec<DVector<f64>> = cps.points.iter().map(&f).collect();
    let (mean, cov) = point_moments(&propagated, space);
    Ok(GaussianDensity::from_parts(mean, cov + q))
}

/// Predicted measurement moments for one CKF update.
#[derive(Clone, Debug)]
pub struct MeasurementPrediction {
    pub mean: DVector<f64>,
    /// Innovation covariance `S`.
    pub cov: DMatrix<f64>,
    /// State–measurement cross covariance `P_xz`.
    pub cross: DMatrix<f64>,
    pub space: Space,
    evaluator: GaussianEvaluator,
}

impl MeasurementPrediction {
    pub fn innovation(&self, z: &DVector<f64>) -> DVector<f64> {
        self.space.diff(z, &self.mean)
    }

    pub fn mahalanobis_sq(&self, z: &DVector<f64>) -> f64 {
        self.evaluator.mahalanobis_sq(&self.innovation(z))
    }

    pub fn log_likelihood(&self, z: &DVector<f64>) -> f64 {
        self.evaluator.log_pdf(&self.innovation(z))
    }

    pub fn density(&self) -> GaussianDensity {
        GaussianDensity::from_parts(self.mean.clone(), self.cov.clone())
    }
}

/// Propagates the cubature points of `prior` through `h` and adds `r`.
pub fn predict_measurement<H>(
    prior: &GaussianDensity,
    h: H,
    r: &DMatrix<f64>,
    state_space: Space,
    meas_space: Space,
) -> Result<MeasurementPrediction>
where
    H: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let cps = cubature_points(prior)?;
    let images = cps.points.iter().map(&h).collect::<Result<Vec<_>>>()?;
    let (mean, scatter) = point_moments(&images, meas_space);
    let mut cov = scatter + r;
    symmetrize(&mut cov);
    let mut cross = DMatrix::zeros(prior.dim(), mean.len());
    for (x, z) in cps.points.iter().zip(&images) {
        cross += state_space.diff(x, &prior.mean) * meas_space.diff(z, &mean).transpose() * cps.weight;
    }
    let evaluator = GaussianEvaluator::new(&cov).map_err(|_| SlamError::SingularInnovation)?;
    Ok(MeasurementPrediction {
        mean,
        cov,
        cross,
        space: meas_space,
        evaluator,
    })
}

/// Posterior given a measurement prediction and the observed `z`.
///
/// The covariance uses the Joseph form with the statistically linearised model
/// `H = P_xzᵀ P⁻¹` and effective noise `S − H P Hᵀ`; a singular prior falls back to `P − K S Kᵀ`.
pub fn apply_measurement(
    prior: &GaussianDensity,
    pred: &MeasurementPrediction,
    z: &DVector<f64>,
    state_space: Space,
) -> Result<GaussianDensity> {
    // K = P_xz S⁻¹ = (S⁻¹ P_zx)ᵀ
    let gain = pred.evaluator.solve(&pred.cross.transpose()).transpose();
    let mut mean = &prior.mean + &gain * pred.innovation(z);
    state_space.normalize(&mut mean);
    let mut cov = match Cholesky::new(prior.cov.clone()) {
        Some(chol) => {
            let h = chol.solve(&pred.cross).transpose();
            let n = prior.dim();
            let mut noise = &pred.cov - &h * &prior.cov * h.transpose();
            symmetrize(&mut noise);
            let a = DMatrix::identity(n, n) - &gain * &h;
            &a * &prior.cov * a.transpose() + &gain * noise * gain.transpose()
        }
        None => &prior.cov - &gain * &pred.cov * gain.transpose(),
    };
    symmetrize(&mut cov);
    Ok(GaussianDensity::from_parts(mean, cov))
}

/// Result of [`ckf_update`].
#[derive(Clone, Debug)]
pub struct CkfUpdate {
    pub posterior: GaussianDensity,
    pub predicted: GaussianDensity,
    pub log_likelihood: f64,
}

/// One cubature Kalman update of `prior` with measurement `z`.
pub fn ckf_update<H>(
    prior: &GaussianDensity,
    h: H,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    state_space: Space,
    meas_space: Space,
) -> Result<CkfUpdate>
where
    H: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let pred = predict_measurement(prior, h, r, state_space, meas_space)?;
    let posterior = apply_measurement(prior, &pred, z, state_space)?;
    Ok(CkfUpdate {
        posterior,
        log_likelihood: pred.log_likelihood(z),
        predicted: pred.density(),
    })
}

/// Joint update of the vehicle and a set of independent landmarks, returning the vehicle marginal.
///
/// `h(s, x, l)` maps the vehicle state and the position of landmark `l` to its measurement.
pub fn joint_ckf_update<H>(
    vehicle: &GaussianDensity,
    landmarks: &[&GaussianDensity],
    h: H,
    zs: &[DVector<f64>],
    rs: &[DMatrix<f64>],
    state_space: Space,
    meas_space: Space,
) -> Result<GaussianDensity>
where
    H: Fn(&DVector<f64>, &DVector<f64>, usize) -> Result<DVector<f64>>,
{
    if landmarks.len() != zs.len() || zs.len() != rs.len() {
        return Err(SlamError::Dimension(format!(
            "{} landmarks, {} measurements, {} noise matrices",
            landmarks.len(),
            zs.len(),
            rs.len()
        )));
    }
    if landmarks.is_empty() {
        return Ok(vehicle.clone());
    }
    let dv = vehicle.dim();
    let mut mean = vehicle.mean.clone();
    let mut offsets = Vec::with_capacity(landmarks.len());
    for g in landmarks {
        offsets.push(mean.len());
        let old = mean.len();
        mean = mean.resize_vertically(old + g.dim(), 0.0);
        mean.rows_mut(old, g.dim()).copy_from(&g.mean);
    }
    let covs: Vec<&DMatrix<f64>> = std::iter::once(&vehicle.cov).chain(landmarks.iter().map(|g| &g.cov)).collect();
    let joint = GaussianDensity::from_parts(mean, block_diag(&covs));
    let dims: Vec<usize> = landmarks.iter().map(|g| g.dim()).collect();
    let stacked_h = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let s = x.rows(0, dv).into_owned();
        let mut out = Vec::new();
        for (l, (&o, &d)) in offsets.iter().zip(&dims).enumerate() {
            out.extend(h(&s, &x.rows(o, d).into_owned(), l)?.iter().copied());
        }
        Ok(DVector::from_vec(out))
    };
    let z = DVector::from_iterator(zs.iter().map(|z| z.len()).sum(), zs.iter().flat_map(|z| z.iter().copied()));
    let r_refs: Vec<&DMatrix<f64>> = rs.iter().collect();
    let r = block_diag(&r_refs);
    let update = ckf_update(&joint, stacked_h, &z, &r, state_space, meas_space)?;
    Ok(GaussianDensity::from_parts(
        update.posterior.mean.rows(0, dv).into_owned(),
        update.posterior.cov.view((0, 0), (dv, dv)).into_owned(),
    ))
}

/// Gaussian proposal for a new landmark built from birth points.
///
/// For each vehicle point the birth points of all measurement cubature points
/// are averaged; the proposal covariance combines the inner scatter with the
/// spread of those averages. Degenerate birth points are skipped; `None` means
/// every point was degenerate.
pub fn birth_proposal<B>(
    vehicle_points: &[DVector<f64>],
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    birth: B,
) -> Result<Option<GaussianDensity>>
where
    B: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    let meas_cps = cubature_points(&GaussianDensity::from_parts(z.clone(), r.clone()))?;
    let mut groups: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::with_capacity(vehicle_points.len());
    for s in vehicle_points {
        let pts: Vec<DVector<f64>> = meas_cps.points.iter().filter_map(|zc| birth(s, zc).ok()).collect();
        if pts.is_empty() {
            continue;
        }
        groups.push(point_moments(&pts, Space::EUCLIDEAN));
    }
    if groups.is_empty() {
        return Ok(None);
    }
    let means: Vec<DVector<f64>> = groups.iter().map(|(m, _)| m.clone()).collect();
    let (mean, outer) = point_moments(&means, Space::EUCLIDEAN);
    let mut cov = outer;
    for (_, inner) in &groups {
        cov += inner / groups.len() as f64;
    }
    symmetrize(&mut cov);
    Ok(Some(GaussianDensity::from_parts(mean, cov)))
}

/// Importance samples of a new landmark's position.
#[derive(Clone, Debug)]
pub struct BirthSamples {
    /// Proposal `q`, also used as the landmark's spatial density.
    pub proposal: GaussianDensity,
    pub samples: Vec<DVector<f64>>,
    /// Normalised importance weights `∝ U(x)/q(x)`.
    pub weights: Vec<f64>,
    /// `ln((1/B) Σ U(x_b)/q(x_b))`, the estimate of `∫U` under the proposal's support.
    pub log_mean_raw_weight: f64,
}

/// Draws `count` samples from the proposal and weights them against a uniform prior over `region`.
///
/// Returns `None` (stillborn) when no birth point is valid or every sample falls outside `region`.
pub fn birth_density<B, R>(
    vehicle_points: &[DVector<f64>],
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    birth: B,
    region: &UniformBox,
    count: usize,
    rng: &mut R,
) -> Result<Option<BirthSamples>>
where
    B: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
    R: Rng + ?Sized,
{
    if count == 0 {
        return Err(SlamError::config("birth_samples", "must be at least 1"));
    }
    let Some(proposal) = birth_proposal(vehicle_points, z, r, birth)? else {
        return Ok(None);
    };
    let chol = crate::linalg::cholesky_jittered(&proposal.cov)?;
    let l = chol.l();
    let q = GaussianEvaluator::new(&proposal.cov)?;
    let log_u_inside = -region.volume().ln();
    let d = proposal.dim();
    let mut samples = Vec::with_capacity(count);
    let mut log_raw = Vec::with_capacity(count);
    for _ in 0..count {
        let eps = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &proposal.mean + &l * eps;
        let lw = if region.contains(&x) {
            log_u_inside - q.log_pdf(&(&x - &proposal.mean))
        } else {
            f64::NEG_INFINITY
        };
        samples.push(x);
        log_raw.push(lw);
    }
    let total = crate::linalg::log_sum_exp(log_raw.iter().copied());
    if !total.is_finite() {
        return Ok(None);
    }
    let weights = log_raw.iter().map(|lw| (lw - total).exp()).collect();
    Ok(Some(BirthSamples {
        proposal,
        samples,
        weights,
        log_mean_raw_weight: total - (count as f64).ln(),
    }))
}

/// Inflates the covariance by `factor ≥ 1`.
pub fn dither(posterior: &GaussianDensity, factor: f64) -> Result<GaussianDensity> {
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(SlamError::config("dither_factor", "must be finite and at least 1"));
    }
    Ok(GaussianDensity {
        mean: posterior.mean.clone(),
        cov: &posterior.cov * factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn cubature_points_example() {
        let g = GaussianDensity::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let cps = cubature_points(&g).unwrap();
        assert_eq!(cps.points.len(), 4);
        assert_eq!(cps.weight, 0.25);
        let r2 = 2f64.sqrt();
        let expected = [[r2, 0.0], [0.0, r2], [-r2, 0.0], [0.0, -r2]];
        for (p, e) in cps.points.iter().zip(expected) {
            assert!((p[0] - e[0]).abs() < 1e-15 && (p[1] - e[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_covariance_collapses_points() {
        let g = GaussianDensity::from_parts(DVector::from_vec(vec![1.0, 2.0]), DMatrix::zeros(2, 2));
        let cps = cubature_points(&g).unwrap();
        assert!(cps.points.iter().all(|p| p == &g.mean));
    }

    #[test]
    fn identity_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GaussianDensity::from_parts(random_vec(&mut rng, 3), random_spd(&mut rng, 3));
        let out = ckf_predict(&g, |x| x.clone(), &DMatrix::zeros(3, 3), Space::EUCLIDEAN).unwrap();
        assert!((out.mean - &g.mean).norm() < 1e-9);
        assert!((out.cov - &g.cov).norm() < 1e-9);
    }

    #[test]
    fn linear_prediction_matches_kalman() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.random_range(1..8);
            let g = GaussianDensity::from_parts(random_vec(&mut rng, n), random_spd(&mut rng, n));
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.5..1.5));
            let b = random_vec(&mut rng, n);
            let q = random_spd(&mut rng, n);
            let out = ckf_predict(&g, |x| &a * x + &b, &q, Space::EUCLIDEAN).unwrap();
            let mean = &a * &g.mean + &b;
            let cov = &a * &g.cov * a.transpose() + &q;
            assert!((out.mean - mean).norm() < 1e-8);
            assert!((out.cov - cov).norm() < 1e-8);
        }
    }

    fn kalman(
        g: &GaussianDensity,
        h: &DMatrix<f64>,
        c: &DVector<f64>,
        r: &DMatrix<f64>,
        z: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>, f64) {
        let zhat = h * &g.mean + c;
        let s = h * &g.cov * h.transpose() + r;
        let sinv = s.clone().try_inverse().unwrap();
        let k = &g.cov * h.transpose() * &sinv;
        let innov = z - &zhat;
        let mean = &g.mean + &k * &innov;
        let cov = &g.cov - &k * &s * k.transpose();
        let m = z.len() as f64;
        let ll = -0.5 * (m * crate::linalg::LN_2PI + s.determinant().ln() + (innov.transpose() * &sinv * &innov)[0]);
        (mean, cov, ll)
    }

    #[test]
    fn linear_update_matches_kalman() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(1..7);
            let m = rng.random_range(1..5);
            let g = GaussianDensity::from_parts(random_vec(&mut rng, n), random_spd(&mut rng, n));
            let h = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let c = random_vec(&mut rng, m);
            let r = random_spd(&mut rng, m);
            let z = random_vec(&mut rng, m);
            let up = ckf_update(&g, |x| Ok(&h * x + &c), &z, &r, Space::EUCLIDEAN, Space::EUCLIDEAN).unwrap();
            let (mean, cov, ll) = kalman(&g, &h, &c, &r, &z);
            assert!((up.posterior.mean - mean).norm() < 1e-8);
            assert!((up.posterior.cov - cov).norm() < 1e-8);
            assert!((up.log_likelihood - ll).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = GaussianDensity::from_parts(random_vec(&mut rng, 3), random_spd(&mut rng, 3));
        let h = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let z = &h * &g.mean;
        let up = ckf_update(&g, |x| Ok(&h * x), &z, &random_spd(&mut rng, 2), Space::EUCLIDEAN, Space::EUCLIDEAN)
            .unwrap();
        assert!((up.posterior.mean - &g.mean).norm() < 1e-10);
    }

    #[test]
    fn uninformative_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GaussianDensity::from_parts(random_vec(&mut rng, 3), random_spd(&mut rng, 3));
        let h = DMatrix::identity(3, 3);
        let r = DMatrix::identity(3, 3) * 1e12;
        let z = random_vec(&mut rng, 3);
        let up = ckf_update(&g, |x| Ok(&h * x), &z, &r, Space::EUCLIDEAN, Space::EUCLIDEAN).unwrap();
        assert!((up.posterior.mean - &g.mean).norm() <= 1e-4 * g.mean.norm().max(1.0));
        assert!((up.posterior.cov - &g.cov).norm() <= 1e-4 * g.cov.norm());
    }

    #[test]
    fn singular_innovation_is_an_error() {
        let g = GaussianDensity::from_parts(DVector::zeros(2), DMatrix::zeros(2, 2));
        let r = DMatrix::zeros(2, 2);
        let res = ckf_update(&g, |x| Ok(x.clone()), &DVector::zeros(2), &r, Space::EUCLIDEAN, Space::EUCLIDEAN);
        assert!(matches!(res, Err(SlamError::SingularInnovation)));
    }

    #[test]
    fn angle_wrapping_in_update() {
        // prior heading near π, measurement on the other side of the branch cut
        let g = GaussianDensity::from_parts(DVector::from_vec(vec![3.1]), DMatrix::from_element(1, 1, 0.01));
        let space = Space {
            angles: &[0],
            period: usize::MAX,
        };
        let z = DVector::from_vec(vec![-3.1]);
        let r = DMatrix::from_element(1, 1, 0.01);
        let up = ckf_update(&g, |x| Ok(x.clone()), &z, &r, space, space).unwrap();
        assert!((up.posterior.mean[0].abs() - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn joint_update_matches_joint_kalman() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let dv = rng.random_range(1..5);
            let dl = rng.random_range(1..4);
            let m = rng.random_range(1..4);
            let v = GaussianDensity::from_parts(random_vec(&mut rng, dv), random_spd(&mut rng, dv));
            let l = GaussianDensity::from_parts(random_vec(&mut rng, dl), random_spd(&mut rng, dl));
            let hs = DMatrix::from_fn(m, dv, |_, _| rng.random_range(-1.0..1.0));
            let hx = DMatrix::from_fn(m, dl, |_, _| rng.random_range(-1.0..1.0));
            let r = random_spd(&mut rng, m);
            let z = random_vec(&mut rng, m);
            let post = joint_ckf_update(
                &v,
                &[&l],
                |s, x, _| Ok(&hs * s + &hx * x),
                &[z.clone()],
                &[r.clone()],
                Space::EUCLIDEAN,
                Space::EUCLIDEAN,
            )
            .unwrap();
            let mut h = DMatrix::zeros(m, dv + dl);
            h.view_mut((0, 0), (m, dv)).copy_from(&hs);
            h.view_mut((0, dv), (m, dl)).copy_from(&hx);
            let joint_mean = DVector::from_iterator(dv + dl, v.mean.iter().chain(l.mean.iter()).copied());
            let joint = GaussianDensity::from_parts(joint_mean, block_diag(&[&v.cov, &l.cov]));
            let (mean, cov, _) = kalman(&joint, &h, &DVector::zeros(m), &r, &z);
            assert!((post.mean - mean.rows(0, dv)).norm() < 1e-8);
            assert!((post.cov - cov.view((0, 0), (dv, dv))).norm() < 1e-8);
        }
    }

    #[test]
    fn joint_update_empty_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = GaussianDensity::from_parts(random_vec(&mut rng, 3), random_spd(&mut rng, 3));
        let l = GaussianDensity::from_parts(random_vec(&mut rng, 3), random_spd(&mut rng, 3));
        let h = |s: &DVector<f64>, x: &DVector<f64>, _: usize| Ok(x - s);
        let e = Space::EUCLIDEAN;
        let none = joint_ckf_update(&v, &[], h, &[], &[], e, e).unwrap();
        assert_eq!(none, v);
        let z = random_vec(&mut rng, 3);
        let r = DMatrix::identity(3, 3);
        let once = joint_ckf_update(&v, &[&l], h, &[z.clone()], &[r.clone()], e, e).unwrap();
        let twice = joint_ckf_update(&v, &[&l, &l], h, &[z.clone(), z], &[r.clone(), r], e, e).unwrap();
        assert!(twice.cov.trace() < once.cov.trace());
        assert!(once.cov.trace() < v.cov.trace());
    }

    #[test]
    fn dither_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = GaussianDensity::from_parts(random_vec(&mut rng, 3), random_spd(&mut rng, 3));
        assert_eq!(dither(&g, 1.0).unwrap(), g);
        let d = dither(&g, 4.0).unwrap();
        assert_eq!(d.cov, &g.cov * 4.0);
        assert_eq!(d.mean, g.mean);
        assert!(dither(&g, 1.5).unwrap().cov.trace() > g.cov.trace());
        assert!(dither(&g, 0.5).is_err());
    }

    #[test]
    fn degenerate_proposal_collapses() {
        let s = vec![DVector::from_vec(vec![1.0, 2.0])];
        let z = DVector::from_vec(vec![3.0, -1.0]);
        let r = DMatrix::zeros(2, 2);
        let g = birth_proposal(&s, &z, &r, |s, z| Ok(s + z)).unwrap().unwrap();
        assert!((g.mean - DVector::from_vec(vec![4.0, 1.0])).norm() < 1e-12);
        assert!(g.cov.amax() <= 1e-9);
    }

    #[test]
    fn proposal_matches_linear_moments() {
        // birth x = s + z with independent Gaussians: mean and covariance add.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vs = GaussianDensity::from_parts(random_vec(&mut rng, 2), random_spd(&mut rng, 2));
        let r = random_spd(&mut rng, 2);
        let z = random_vec(&mut rng, 2);
        let pts = cubature_points(&vs).unwrap().points;
        let g = birth_proposal(&pts, &z, &r, |s, z| Ok(s + z)).unwrap().unwrap();
        assert!((g.mean - (&vs.mean + &z)).norm() < 1e-12);
        assert!((g.cov - (&vs.cov + &r)).norm() < 1e-12);
    }

    #[test]
    fn stillborn_when_all_points_degenerate() {
        let s = vec![DVector::zeros(1)];
        let z = DVector::zeros(1);
        let r = DMatrix::identity(1, 1);
        let out = birth_proposal(&s, &z, &r, |_, _| Err(SlamError::DegenerateGeometry("x".into()))).unwrap();
        assert!(out.is_none());
        let region = UniformBox::new(vec![100.0], vec![101.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let far = birth_density(&s, &z, &r, |s, z| Ok(s + z), &region, 50, &mut rng).unwrap();
        assert!(far.is_none());
    }

    #[test]
    fn birth_weights_are_a_pmf() {
        let region = UniformBox::new(vec![-50.0], vec![50.0]).unwrap();
        let s = vec![DVector::zeros(1)];
        let z = DVector::from_element(1, 3.0);
        let r = DMatrix::identity(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = birth_density(&s, &z, &r, |s, z| Ok(s + z), &region, 100, &mut rng).unwrap().unwrap();
        assert!((b.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(b.weights.iter().all(|w| *w >= 0.0));
        assert!(b.log_mean_raw_weight.is_finite());
    }

    proptest! {
        #[test]
        fn cubature_reconstruction(seed in 0u64..1000, d in 1usize..=20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = GaussianDensity::from_parts(random_vec(&mut rng, d), random_spd(&mut rng, d));
            let cps = cubature_points(&g).unwrap();
            let (mean, cov) = point_moments(&cps.points, Space::EUCLIDEAN);
            prop_assert!((mean - &g.mean).amax() < 1e-9);
            prop_assert!((cov - &g.cov).norm() <= 1e-6 * g.cov.norm());
        }
    }
}
