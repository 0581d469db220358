//! Random-finite-set densities used by the map representations.
//!
//! Every weight is carried in the log domain. A landmark set is passed around
//! as a slice of `(position, type)` pairs; set densities are returned as
//! natural logarithms so products over many landmarks do not underflow.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlamError};
use crate::linalg::{is_psd, log_sum_exp, symmetrize, GaussianEvaluator};

/// Landmark category. The ordering `Bs < Va < Sp` is the tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkType {
    Bs,
    Va,
    Sp,
}

impl LandmarkType {
    pub const ALL: [LandmarkType; 3] = [LandmarkType::Bs, LandmarkType::Va, LandmarkType::Sp];

    pub fn index(self) -> usize {
        match self {
            LandmarkType::Bs => 0,
            LandmarkType::Va => 1,
            LandmarkType::Sp => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LandmarkType::Bs => "BS",
            LandmarkType::Va => "VA",
            LandmarkType::Sp => "SP",
        }
    }
}

/// Multivariate normal density.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDensity {
    /// Validating constructor: symmetric within 1e-9 relative, eigenvalues ≥ −1e-12·trace.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(SlamError::Dimension(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !is_psd(&cov, 1e-12) {
            return Err(SlamError::InvalidDensity(
                "covariance is not symmetric positive semidefinite".into(),
            ));
        }
        Ok(Self { mean, cov })
    }

    /// Builds a density without validation; the covariance is symmetrised.
    pub fn from_parts(mean: DVector<f64>, mut cov: DMatrix<f64>) -> Self {
        symmetrize(&mut cov);
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let ev = GaussianEvaluator::new(&self.cov)?;
        Ok(ev.log_pdf(&(x - &self.mean)))
    }

    pub fn pdf(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_pdf(x)?.exp())
    }
}

/// Axis-aligned box carrying a normalised uniform density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl UniformBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(SlamError::config("region", "bounds must have equal, nonzero length"));
        }
        let b = Self { lower, upper };
        if !(b.volume() > 0.0) || !b.volume().is_finite() {
            return Err(SlamError::config("region", "region must have positive finite volume"));
        }
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// `ln(1/V)` inside the box, `-inf` outside.
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        if self.contains(x) {
            -self.volume().ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpatialDensity {
    Uniform(UniformBox),
    Gaussian(GaussianDensity),
}

impl SpatialDensity {
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            SpatialDensity::Uniform(b) => Ok(b.log_pdf(x)),
            SpatialDensity::Gaussian(g) => g.log_pdf(x),
        }
    }
}

/// One term `κ · f(x)` of a Poisson intensity, restricted to a single landmark type.
#[derive(Clone, Debug, PartialEq)]
pub struct PppComponent {
    pub landmark_type: LandmarkType,
    /// Expected number of landmarks contributed by this term (`∫κ f = κ`).
    pub weight: f64,
    pub density: SpatialDensity,
}

/// Intensity of the Poisson process of undetected landmarks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PppIntensity {
    pub components: Vec<PppComponent>,
}

impl PppIntensity {
    pub fn new(components: Vec<PppComponent>) -> Result<Self> {
        for c in &components {
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(SlamError::config(
                    "undetected_weight",
                    "Poisson weights must be finite and nonnegative",
                ));
            }
        }
        Ok(Self { components })
    }

    /// Uniform intensity over `region` with total mass `weight` per listed type.
    pub fn uniform(region: UniformBox, weights: &[(LandmarkType, f64)]) -> Result<Self> {
        Self::new(
            weights
                .iter()
                .map(|(t, w)| PppComponent {
                    landmark_type: *t,
                    weight: *w,
                    density: SpatialDensity::Uniform(region.clone()),
                })
                .collect(),
        )
    }

    /// `∫ λ(x, m) dx` summed over types.
    pub fn integral(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Total mass attached to one landmark type.
    pub fn weight_of(&self, t: LandmarkType) -> f64 {
        self.components
            .iter()
            .filter(|c| c.landmark_type == t)
            .map(|c| c.weight)
            .sum()
    }

    /// `ln λ(x, m)`.
    pub fn log_intensity(&self, x: &DVector<f64>, t: LandmarkType) -> Result<f64> {
        let mut terms = Vec::new();
        for c in self.components.iter().filter(|c| c.landmark_type == t) {
            if c.weight > 0.0 {
                terms.push(c.weight.ln() + c.density.log_pdf(x)?);
            }
        }
        Ok(log_sum_exp(terms))
    }

    /// Scales every weight by `factor` (missed-detection thinning with a constant `1 − p_D`).
    pub fn thinned(&self, factor: f64) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| PppComponent {
                    weight: c.weight * factor,
                    ..c.clone()
                })
                .collect(),
        }
    }

    /// The uniform region of the first component of type `t`, if there is one.
    pub fn region_of(&self, t: LandmarkType) -> Option<&UniformBox> {
        self.components
            .iter()
            .filter(|c| c.landmark_type == t)
            .find_map(|c| match &c.density {
                SpatialDensity::Uniform(b) => Some(b),
                _ => None,
            })
    }
}

/// `ln f(X)` for a Poisson set density: `−∫λ + Σ ln λ(x)`.
pub fn ppp_set_density(lambda: &PppIntensity, set: &[(DVector<f64>, LandmarkType)]) -> Result<f64> {
    let integral = lambda.integral();
    if !integral.is_finite() {
        return Err(SlamError::config("undetected_weight", "intensity is not integrable"));
    }
    let mut log_density = -integral;
    for (x, t) in set {
        log_density += lambda.log_intensity(x, *t)?;
    }
    Ok(log_density)
}

/// Type weight and spatial density for one landmark type inside a Bernoulli.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeComponent {
    pub weight: f64,
    pub density: Option<GaussianDensity>,
}

impl TypeComponent {
    pub fn zero() -> Self {
        Self {
            weight: 0.0,
            density: None,
        }
    }
}

/// A potentially detected landmark: existence probability plus per-type densities.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliComponent {
    pub existence: f64,
    /// Indexed by [`LandmarkType::index`]; all three types are always present.
    pub per_type: [TypeComponent; 3],
    /// Local hypothesis weight `ln β`.
    pub log_weight: f64,
}

impl BernoulliComponent {
    /// Bernoulli of a single known type.
    pub fn single_type(existence: f64, t: LandmarkType, density: GaussianDensity) -> Self {
        let mut per_type = [TypeComponent::zero(), TypeComponent::zero(), TypeComponent::zero()];
        per_type[t.index()] = TypeComponent {
            weight: 1.0,
            density: Some(density),
        };
        Self {
            existence,
            per_type,
            log_weight: 0.0,
        }
    }

    /// A Bernoulli that certainly does not exist.
    pub fn empty(dim: usize) -> Self {
        let g = GaussianDensity::from_parts(DVector::zeros(dim), DMatrix::identity(dim, dim));
        let mut b = Self::single_type(0.0, LandmarkType::Va, g);
        b.per_type[LandmarkType::Va.index()].weight = 1.0;
        b
    }

    pub fn type_weight(&self, t: LandmarkType) -> f64 {
        self.per_type[t.index()].weight
    }

    pub fn density(&self, t: LandmarkType) -> Option<&GaussianDensity> {
        self.per_type[t.index()].density.as_ref()
    }

    /// Types with positive weight and a density.
    pub fn active_types(&self) -> impl Iterator<Item = (LandmarkType, &TypeComponent)> {
        LandmarkType::ALL
            .into_iter()
            .map(move |t| (t, &self.per_type[t.index()]))
            .filter(|(_, c)| c.weight > 0.0 && c.density.is_some())
    }

    /// Most likely type; ties go to the earlier type in `BS < VA < SP`.
    pub fn dominant_type(&self) -> LandmarkType {
        let mut best = LandmarkType::Bs;
        let mut best_w = f64::NEG_INFINITY;
        for t in LandmarkType::ALL {
            let w = self.type_weight(t);
            if w > best_w {
                best = t;
                best_w = w;
            }
        }
        best
    }

    /// Rescales type weights to sum to one; fails when all are zero.
    pub fn normalize_types(&mut self) -> Result<()> {
        let total: f64 = self.per_type.iter().map(|c| c.weight).sum();
        if !(total > 0.0) {
            return Err(SlamError::InvalidDensity("all type weights are zero".into()));
        }
        for c in &mut self.per_type {
            c.weight /= total;
        }
        Ok(())
    }

    /// `ln f(x, m)` = type weight × Gaussian.
    pub fn log_spatial(&self, x: &DVector<f64>, t: LandmarkType) -> Result<f64> {
        let c = &self.per_type[t.index()];
        match (&c.density, c.weight > 0.0) {
            (Some(g), true) => Ok(c.weight.ln() + g.log_pdf(x)?),
            _ => Ok(f64::NEG_INFINITY),
        }
    }
}

/// Bernoulli set density: `1 − r` for ∅, `r f(x, m)` for a singleton, 0 otherwise.
pub fn bernoulli_set_density(b: &BernoulliComponent, set: &[(DVector<f64>, LandmarkType)]) -> Result<f64> {
    match set {
        [] => Ok(1.0 - b.existence),
        [(x, t)] => Ok(b.existence * b.log_spatial(x, *t)?.exp()),
        _ => Ok(0.0),
    }
}

/// A joint association: one local hypothesis index per track (`None` = track absent).
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalHypothesis {
    pub assignments: Vec<Option<usize>>,
    pub log_weight: f64,
}

/// Result of [`normalize_global_hypotheses`].
#[derive(Clone, Debug)]
pub struct NormalizedHypotheses {
    pub hypotheses: Vec<GlobalHypothesis>,
    /// `ln Σ β` before normalisation.
    pub log_constant: f64,
}

/// Normalises hypothesis weights to a pmf, keeping order.
pub fn normalize_global_hypotheses(h: Vec<GlobalHypothesis>) -> Result<NormalizedHypotheses> {
    let log_constant = log_sum_exp(h.iter().map(|g| g.log_weight));
    if !log_constant.is_finite() {
        return Err(SlamError::DegeneratePosterior(
            "all global hypothesis weights are zero".into(),
        ));
    }
    let hypotheses = h
        .into_iter()
        .map(|mut g| {
            g.log_weight -= log_constant;
            g
        })
        .collect();
    Ok(NormalizedHypotheses {
        hypotheses,
        log_constant,
    })
}

/// Poisson intensity plus a multi-Bernoulli mixture over a hypothesis forest.
#[derive(Clone, Debug)]
pub struct PmbmDensity {
    pub undetected: PppIntensity,
    /// `tracks[i]` lists the local hypotheses of landmark `i`.
    pub tracks: Vec<Vec<BernoulliComponent>>,
    pub hypotheses: Vec<GlobalHypothesis>,
}

impl PmbmDensity {
    /// Index of the highest-weight global hypothesis.
    pub fn map_hypothesis(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, h) in self.hypotheses.iter().enumerate() {
            if best.is_none_or(|(_, w)| h.log_weight > w) {
                best = Some((k, h.log_weight));
            }
        }
        best.map(|(k, _)| k)
    }

    /// Bernoullis of one global hypothesis.
    pub fn bernoullis_of(&self, hyp: usize) -> Vec<&BernoulliComponent> {
        self.hypotheses[hyp]
            .assignments
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|h| &self.tracks[i][h]))
            .collect()
    }

    /// Checks that every hypothesis points at existing local hypotheses.
    pub fn is_consistent(&self) -> bool {
        self.hypotheses.iter().all(|h| {
            h.assignments.len() == self.tracks.len()
                && h
                    .assignments
                    .iter()
                    .enumerate()
                    .all(|(i, a)| a.is_none_or(|l| l < self.tracks[i].len()))
        })
    }
}

/// Poisson intensity plus one Bernoulli per landmark.
#[derive(Clone, Debug)]
pub struct PmbDensity {
    pub undetected: PppIntensity,
    pub bernoullis: Vec<BernoulliComponent>,
}

/// Outcome of [`moment_match_bernoulli`].
#[derive(Clone, Debug)]
pub struct MergedBernoulli {
    pub component: BernoulliComponent,
    /// Set when the merged existence is zero.
    pub prunable: bool,
}

/// Collapses a probability-weighted mixture of Bernoullis into one Bernoulli.
///
/// Existence is `Σ p_j r_j`; for each type the existence-weighted Gaussian
/// mixture `Σ p_j r_j e_j(m) N_j` is replaced by one Gaussian with the same
/// mean and covariance, and type weights are mixed in the same proportions.
pub fn moment_match_bernoulli(mix: &[(f64, BernoulliComponent)]) -> Result<MergedBernoulli> {
    if mix.is_empty() {
        return Err(SlamError::InvalidDensity("empty Bernoulli mixture".into()));
    }
    let total_p: f64 = mix.iter().map(|(p, _)| *p).sum();
    if (total_p - 1.0).abs() > 1e-9 {
        return Err(SlamError::InvalidDensity(format!(
            "mixture probabilities sum to {total_p}, expected 1"
        )));
    }
    if mix.len() == 1 {
        return Ok(MergedBernoulli {
            prunable: mix[0].1.existence == 0.0,
            component: mix[0].1.clone(),
        });
    }
    let existence: f64 = mix.iter().map(|(p, b)| p * b.existence).sum();
    let prunable = existence <= 0.0;
    // With zero existence every term vanishes; fall back to the p-weighted mixture so the
    // component keeps a usable shape.
    let term_weight = |p: f64, b: &BernoulliComponent| if prunable { p } else { p * b.existence };

    let mut per_type = [TypeComponent::zero(), TypeComponent::zero(), TypeComponent::zero()];
    let mut type_mass = [0.0f64; 3];
    for t in LandmarkType::ALL {
        let parts: Vec<(f64, &GaussianDensity)> = mix
            .iter()
            .filter_map(|(p, b)| {
                let c = &b.per_type[t.index()];
                let w = term_weight(*p, b) * c.weight;
                match (&c.density, w > 0.0) {
                    (Some(g), true) => Some((w, g)),
                    _ => None,
                }
            })
            .collect();
        let mass: f64 = parts.iter().map(|(w, _)| w).sum();
        if mass <= 0.0 {
            continue;
        }
        type_mass[t.index()] = mass;
        let dim = parts[0].1.dim();
        let mut mean = DVector::zeros(dim);
        for (w, g) in &parts {
            mean += &g.mean * (w / mass);
        }
        let mut cov = DMatrix::zeros(dim, dim);
        for (w, g) in &parts {
            let d = &g.mean - &mean;
            cov += (&g.cov + &d * d.transpose()) * (w / mass);
        }
        per_type[t.index()].density = Some(GaussianDensity::from_parts(mean, cov));
    }
    let total_mass: f64 = type_mass.iter().sum();
    if total_mass <= 0.0 {
        return Err(SlamError::InvalidDensity(
            "Bernoulli mixture carries no spatial mass".into(),
        ));
    }
    for t in LandmarkType::ALL {
        per_type[t.index()].weight = type_mass[t.index()] / total_mass;
    }
    let log_weight = log_sum_exp(mix.iter().map(|(p, b)| p.ln() + b.log_weight));
    Ok(MergedBernoulli {
        component: BernoulliComponent {
            existence: existence.clamp(0.0, 1.0),
            per_type,
            log_weight,
        },
        prunable,
    })
}
