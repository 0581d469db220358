//! Scenario simulation: a vehicle circling a base station among reflecting
//! walls and scatterers, with noisy, cluttered channel measurements.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlamError};
use crate::filters::{stream_rng, MmwaveModel};
use crate::geometry::{measurement_fn, mirror_bs, vehicle_transition, Landmark, Measurement, Plane, VehicleState, MEAS_DIM};
use crate::linalg::{psd_sqrt, wrap_angle};
use crate::rfs::{GaussianDensity, LandmarkType, PppComponent, PppIntensity, SpatialDensity, UniformBox};

/// A reflecting plane `normal · x = offset_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub normal: [f64; 3],
    pub offset_m: f64,
}

/// Standard deviations of the seven vehicle-state components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateStd {
    /// Per-axis position std `[x, y, z]`.
    pub position_m: [f64; 3],
    pub heading_rad: f64,
    pub speed_mps: f64,
    pub turn_rate_radps: f64,
    pub bias_m: f64,
}

impl StateStd {
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = [
            self.position_m[0],
            self.position_m[1],
            self.position_m[2],
            self.heading_rad,
            self.speed_mps,
            self.turn_rate_radps,
            self.bias_m,
        ];
        DMatrix::from_diagonal(&DVector::from_iterator(7, d.iter().map(|s| s * s)))
    }

    /// Root-sum-square of the position stds.
    pub fn position_norm_m(&self) -> f64 {
        self.position_m.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Measurement noise stds for one landmark type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasStd {
    pub toa_m: f64,
    /// Std of both DOA angles.
    pub doa_rad: f64,
    /// Std of both DOD angles.
    pub dod_rad: f64,
}

impl MeasStd {
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = [self.toa_m, self.doa_rad, self.doa_rad, self.dod_rad, self.dod_rad];
        DMatrix::from_diagonal(&DVector::from_iterator(5, d.iter().map(|s| s * s)))
    }
}

/// Per-type values `(BS, VA, SP)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerType<T> {
    pub bs: T,
    pub va: T,
    pub sp: T,
}

impl<T: Clone> PerType<T> {
    pub fn to_array(&self) -> [T; 3] {
        [self.bs.clone(), self.va.clone(), self.sp.clone()]
    }
}

/// Axis-aligned box in metres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower_m: [f64; 3],
    pub upper_m: [f64; 3],
}

impl BoxConfig {
    pub fn to_box(&self) -> Result<UniformBox> {
        UniformBox::new(self.lower_m.to_vec(), self.upper_m.to_vec())
    }
}

/// Prior knowledge handed to the filters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Std of the initial vehicle density around the true initial state.
    pub vehicle_std: StateStd,
    pub bs_std_m: f64,
    /// Undetected-landmark intensity per cubic metre, for VAs and SPs.
    pub undetected_intensity_per_m3: f64,
    /// Support of undetected VAs.
    pub va_region: BoxConfig,
    /// Support of undetected SPs.
    pub sp_region: BoxConfig,
}

/// Scenario layout, motion, noise, detection and clutter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub bs_position_m: [f64; 3],
    pub walls: Vec<WallConfig>,
    pub scatterers_m: Vec<[f64; 3]>,
    /// Radius of the circular road centred below the BS.
    pub road_radius_m: f64,
    pub vehicle_height_m: f64,
    /// Number of measurement steps; the vehicle completes one lap.
    pub steps: usize,
    pub dt_s: f64,
    pub initial_bias_m: f64,
    pub process_std: StateStd,
    pub meas_std: PerType<MeasStd>,
    pub p_d: f64,
    /// Maximum detection range per type; `None` is unlimited.
    pub fov_range_m: PerType<Option<f64>>,
    /// Expected clutter measurements per frame.
    pub clutter_mean: f64,
    /// Upper TOA bound of the clutter region.
    pub toa_max_m: f64,
    pub prior: PriorConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let scatterers_m = (0..4)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_4 + k as f64 * std::f64::consts::FRAC_PI_2;
                [80.0 * a.cos(), 80.0 * a.sin(), 0.0]
            })
            .collect();
        let walls = [([1.0, 0.0, 0.0], 100.0), ([-1.0, 0.0, 0.0], 100.0), ([0.0, 1.0, 0.0], 100.0), ([0.0, -1.0, 0.0], 100.0)]
            .into_iter()
            .map(|(normal, offset_m)| WallConfig { normal, offset_m })
            .collect();
        let fine = MeasStd {
            toa_m: 0.2,
            doa_rad: 0.02,
            dod_rad: 0.02,
        };
        Self {
            bs_position_m: [0.0, 0.0, 40.0],
            walls,
            scatterers_m,
            road_radius_m: 60.0,
            vehicle_height_m: 0.0,
            steps: 40,
            dt_s: 1.0,
            initial_bias_m: 10.0,
            process_std: StateStd {
                position_m: [0.3, 0.3, 0.05],
                heading_rad: 0.002,
                speed_mps: 0.02,
                turn_rate_radps: 0.0002,
                bias_m: 0.05,
            },
            meas_std: PerType {
                bs: fine.clone(),
                va: fine,
                sp: MeasStd {
                    toa_m: 0.4,
                    doa_rad: 0.04,
                    dod_rad: 0.04,
                },
            },
            p_d: 0.95,
            fov_range_m: PerType {
                bs: None,
                va: None,
                sp: Some(50.0),
            },
            clutter_mean: 1.0,
            toa_max_m: 400.0,
            prior: PriorConfig {
                vehicle_std: StateStd {
                    position_m: [0.3, 0.3, 0.05],
                    heading_rad: 0.01,
                    speed_mps: 0.1,
                    turn_rate_radps: 0.001,
                    bias_m: 0.3,
                },
                bs_std_m: 0.1,
                undetected_intensity_per_m3: 2.37e-6,
                va_region: BoxConfig {
                    lower_m: [-250.0, -250.0, 20.0],
                    upper_m: [250.0, 250.0, 60.0],
                },
                sp_region: BoxConfig {
                    lower_m: [-100.0, -100.0, -10.0],
                    upper_m: [100.0, 100.0, 10.0],
                },
            },
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(SlamError::config("steps", "must be at least 1"));
        }
        if !(self.dt_s > 0.0) {
            return Err(SlamError::config("dt_s", "must be positive"));
        }
        if !(self.road_radius_m > 0.0) {
            return Err(SlamError::config("road_radius_m", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_d) {
            return Err(SlamError::config("p_d", "must lie in [0, 1]"));
        }
        if !(self.clutter_mean >= 0.0) {
            return Err(SlamError::config("clutter_mean", "must be non-negative"));
        }
        if !(self.toa_max_m > 0.0) {
            return Err(SlamError::config("toa_max_m", "must be positive"));
        }
        let stds = |s: &StateStd| {
            s.position_m
                .iter()
                .chain([s.heading_rad, s.speed_mps, s.turn_rate_radps, s.bias_m].iter())
                .all(|v| *v >= 0.0 && v.is_finite())
        };
        if !stds(&self.process_std) {
            return Err(SlamError::config("process_std", "stds must be finite and non-negative"));
        }
        if !stds(&self.prior.vehicle_std) {
            return Err(SlamError::config("prior.vehicle_std", "stds must be finite and non-negative"));
        }
        for (m, name) in [(&self.meas_std.bs, "bs"), (&self.meas_std.va, "va"), (&self.meas_std.sp, "sp")] {
            if !(m.toa_m > 0.0 && m.doa_rad > 0.0 && m.dod_rad > 0.0) {
                return Err(SlamError::config(format!("meas_std.{name}"), "stds must be positive"));
            }
        }
        if !(self.prior.bs_std_m > 0.0) {
            return Err(SlamError::config("prior.bs_std_m", "must be positive"));
        }
        if !(self.prior.undetected_intensity_per_m3 >= 0.0) {
            return Err(SlamError::config("prior.undetected_intensity_per_m3", "must be non-negative"));
        }
        for (b, name) in [(&self.prior.va_region, "prior.va_region"), (&self.prior.sp_region, "prior.sp_region")] {
            b.to_box()
                .map_err(|_| SlamError::config(name, "region must have positive volume"))?;
        }
        for w in &self.walls {
            mirror_bs(&self.bs(), &plane(w)).map_err(|e| match e {
                SlamError::Config { message, .. } => SlamError::config("walls.normal", message),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn bs(&self) -> Vector3<f64> {
        Vector3::from(self.bs_position_m)
    }

    /// Measurement box over which clutter is drawn.
    pub fn clutter_region(&self) -> UniformBox {
        use std::f64::consts::{FRAC_PI_2, PI};
        UniformBox::new(
            vec![0.0, -PI, -FRAC_PI_2, -PI, -FRAC_PI_2],
            vec![self.toa_max_m, PI, FRAC_PI_2, PI, FRAC_PI_2],
        )
        .expect("clutter box has positive volume")
    }

    /// Filter-side model matching this scenario.
    pub fn model(&self) -> MmwaveModel {
        MmwaveModel {
            bs: self.bs(),
            dt: self.dt_s,
            process_noise: self.process_std.covariance(),
            meas_noise: [
                self.meas_std.bs.covariance(),
                self.meas_std.va.covariance(),
                self.meas_std.sp.covariance(),
            ],
            fov_range_m: self.fov_range_m.to_array(),
            clutter_rate: self.clutter_mean,
            clutter_region: self.clutter_region(),
        }
    }

    /// Initial noise-free vehicle state: on the road at angle 0, heading along it.
    pub fn initial_state(&self) -> VehicleState {
        let turn_rate = 2.0 * std::f64::consts::PI / (self.steps as f64 * self.dt_s);
        VehicleState {
            position: [self.road_radius_m, 0.0, self.vehicle_height_m],
            heading: std::f64::consts::FRAC_PI_2,
            speed: turn_rate * self.road_radius_m,
            turn_rate,
            bias: self.initial_bias_m,
        }
    }

    /// Initial vehicle density of the filters.
    pub fn vehicle_prior(&self) -> Result<GaussianDensity> {
        GaussianDensity::new(self.initial_state().to_vector(), self.prior.vehicle_std.covariance())
    }

    /// Uniform undetected intensity over the per-type prior regions.
    pub fn undetected_intensity(&self) -> Result<PppIntensity> {
        let kappa = self.prior.undetected_intensity_per_m3;
        let component = |t: LandmarkType, region: UniformBox| PppComponent {
            landmark_type: t,
            weight: kappa * region.volume(),
            density: SpatialDensity::Uniform(region),
        };
        PppIntensity::new(vec![
            component(LandmarkType::Va, self.prior.va_region.to_box()?),
            component(LandmarkType::Sp, self.prior.sp_region.to_box()?),
        ])
    }
}

fn plane(w: &WallConfig) -> Plane {
    Plane {
        normal: w.normal,
        offset: w.offset_m,
    }
}

/// Ground truth of one scenario realisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub initial: VehicleState,
    /// Vehicle state at steps `1..=K`.
    pub states: Vec<VehicleState>,
    /// BS first, then one VA per wall, then the SPs.
    pub landmarks: Vec<Landmark>,
}

/// Vehicle trajectory and landmark layout.
pub fn generate_truth(cfg: &ScenarioConfig) -> Result<Truth> {
    cfg.validate()?;
    let bs = cfg.bs();
    let mut landmarks = vec![Landmark {
        position: cfg.bs_position_m,
        landmark_type: LandmarkType::Bs,
    }];
    for w in &cfg.walls {
        let va = mirror_bs(&bs, &plane(w))?;
        landmarks.push(Landmark {
            position: [va[0], va[1], va[2]],
            landmark_type: LandmarkType::Va,
        });
    }
    for sp in &cfg.scatterers_m {
        landmarks.push(Landmark {
            position: *sp,
            landmark_type: LandmarkType::Sp,
        });
    }
    let root = psd_sqrt(&cfg.process_std.covariance());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial = cfg.initial_state();
    let mut states = Vec::with_capacity(cfg.steps);
    let mut s = initial;
    for _ in 0..cfg.steps {
        let noise = &root * crate::filters::standard_normal(&mut rng, 7);
        let mut v = vehicle_transition(&s, cfg.dt_s).to_vector() + noise;
        v[3] = wrap_angle(v[3]);
        s = VehicleState::from_slice(v.as_slice());
        states.push(s);
    }
    Ok(Truth {
        initial,
        states,
        landmarks,
    })
}

/// The measurements of one step. Origins are kept apart for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFrame {
    /// Step index, starting at 1.
    pub k: usize,
    pub measurements: Vec<Measurement>,
    /// Landmark index of each measurement; `None` for clutter.
    pub origins: Vec<Option<usize>>,
}

impl MeasurementFrame {
    pub fn vectors(&self) -> Vec<DVector<f64>> {
        self.measurements.iter().map(Measurement::to_vector).collect()
    }
}

fn noisy(z: &Measurement, root: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Measurement {
    let v = z.to_vector() + root * crate::filters::standard_normal(rng, MEAS_DIM);
    Measurement::from_slice(v.as_slice()).normalized()
}

/// Detections, noise and clutter at step `k` (1-based).
pub fn generate_measurements(truth: &Truth, k: usize, cfg: &ScenarioConfig) -> Result<MeasurementFrame> {
    if k == 0 || k > truth.states.len() {
        return Err(SlamError::config("k", format!("step {k} outside 1..={}", truth.states.len())));
    }
    let s = &truth.states[k - 1];
    let bs = cfg.bs();
    let fov = cfg.fov_range_m.to_array();
    let roots = [
        psd_sqrt(&cfg.meas_std.bs.covariance()),
        psd_sqrt(&cfg.meas_std.va.covariance()),
        psd_sqrt(&cfg.meas_std.sp.covariance()),
    ];
    let mut rng = stream_rng(cfg.seed, k as u64, 0);
    let mut items: Vec<(Measurement, Option<usize>)> = Vec::new();
    for (idx, l) in truth.landmarks.iter().enumerate() {
        let m = l.landmark_type;
        let in_range = fov[m.index()].is_none_or(|r| (l.pos() - s.pos()).norm() <= r);
        let detected = rng.random::<f64>() < cfg.p_d;
        if !(in_range && detected) {
            continue;
        }
        let z = measurement_fn(s, &l.pos(), m, &bs)?;
        items.push((noisy(&z, &roots[m.index()], &mut rng), Some(idx)));
    }
    if cfg.clutter_mean > 0.0 {
        let count = Poisson::new(cfg.clutter_mean)
            .map_err(|e| SlamError::config("clutter_mean", e.to_string()))?
            .sample(&mut rng) as usize;
        let region = cfg.clutter_region();
        for _ in 0..count {
            let v: Vec<f64> = (0..MEAS_DIM).map(|i| rng.random_range(region.lower[i]..region.upper[i])).collect();
            items.push((Measurement::from_slice(&v), None));
        }
    }
    items.shuffle(&mut rng);
    let (measurements, origins) = items.into_iter().unzip();
    Ok(MeasurementFrame {
        k,
        measurements,
        origins,
    })
}

/// Truth plus every measurement frame of one realisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub scenario: ScenarioConfig,
    pub truth: Truth,
    pub frames: Vec<MeasurementFrame>,
}

/// Generates a full bundle.
pub fn simulate(cfg: &ScenarioConfig) -> Result<Bundle> {
    let truth = generate_truth(cfg)?;
    let frames = (1..=cfg.steps)
        .map(|k| generate_measurements(&truth, k, cfg))
        .collect::<Result<_>>()?;
    Ok(Bundle {
        scenario: cfg.clone(),
        truth,
        frames,
    })
}

pub const BUNDLE_FORMAT: &str = "rfs-slam-bundle";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    scenario: ScenarioConfig,
    initial_state: VehicleState,
    landmarks: Vec<Landmark>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRecord {
    k: usize,
    vehicle: VehicleState,
    measurements: Vec<[f64; 5]>,
    origins: Vec<Option<usize>>,
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> SlamError {
    SlamError::Parse(format!("bundle line {line}: {e}"))
}

/// Writes a bundle as JSON lines: one header, then one record per step.
pub fn write_bundle<W: Write>(bundle: &Bundle, mut out: W) -> Result<()> {
    let header = Header {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        scenario: bundle.scenario.clone(),
        initial_state: bundle.truth.initial,
        landmarks: bundle.truth.landmarks.clone(),
    };
    let line = serde_json::to_string(&header).map_err(|e| SlamError::Parse(e.to_string()))?;
    writeln!(out, "{line}")?;
    for (frame, vehicle) in bundle.frames.iter().zip(&bundle.truth.states) {
        let record = StepRecord {
            k: frame.k,
            vehicle: *vehicle,
            measurements: frame
                .measurements
                .iter()
                .map(|m| [m.toa, m.doa_az, m.doa_el, m.dod_az, m.dod_el])
                .collect(),
            origins: frame.origins.clone(),
        };
        let line = serde_json::to_string(&record).map_err(|e| SlamError::Parse(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads a bundle written by [`write_bundle`].
pub fn read_bundle<R: BufRead>(input: R) -> Result<Bundle> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| SlamError::Parse("empty bundle".into()))?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| parse_err(1, e))?;
    if header.format != BUNDLE_FORMAT || header.version != BUNDLE_VERSION {
        return Err(parse_err(1, format!("unsupported format {} v{}", header.format, header.version)));
    }
    let mut states = Vec::new();
    let mut frames = Vec::new();
    for (n, line) in lines {
        let record: StepRecord = serde_json::from_str(&line?).map_err(|e| parse_err(n + 1, e))?;
        if record.k != frames.len() + 1 {
            return Err(parse_err(n + 1, format!("expected step {}, found {}", frames.len() + 1, record.k)));
        }
        if record.origins.len() != record.measurements.len() {
            return Err(parse_err(n + 1, "origins and measurements differ in length"));
        }
        states.push(record.vehicle);
        frames.push(MeasurementFrame {
            k: record.k,
            measurements: record.measurements.iter().map(|m| Measurement::from_slice(m)).collect(),
            origins: record.origins,
        });
    }
    Ok(Bundle {
        scenario: header.scenario,
        truth: Truth {
            initial: header.initial_state,
            states,
            landmarks: header.landmarks,
        },
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.process_std = StateStd {
            position_m: [0.0; 3],
            heading_rad: 0.0,
            speed_mps: 0.0,
            turn_rate_radps: 0.0,
            bias_m: 0.0,
        };
        cfg
    }

    #[test]
    fn noiseless_lap_closes() {
        let truth = generate_truth(&quiet()).unwrap();
        let last = truth.states.last().unwrap();
        assert!((last.pos() - truth.initial.pos()).norm() < 1e-6);
    }

    #[test]
    fn four_walls_give_four_virtual_anchors() {
        let truth = generate_truth(&ScenarioConfig::default()).unwrap();
        let n_va = truth.landmarks.iter().filter(|l| l.landmark_type == LandmarkType::Va).count();
        assert_eq!(n_va, 4);
        assert_eq!(truth.landmarks.len(), 9);
    }

    #[test]
    fn same_seed_same_bundle() {
        let cfg = ScenarioConfig::default();
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = ScenarioConfig { seed: 2, ..cfg.clone() };
        assert_ne!(simulate(&cfg).unwrap().truth, simulate(&other).unwrap().truth);
    }

    #[test]
    fn no_detection_no_clutter_is_empty() {
        let cfg = ScenarioConfig {
            p_d: 0.0,
            clutter_mean: 0.0,
            ..ScenarioConfig::default()
        };
        let truth = generate_truth(&cfg).unwrap();
        assert!(generate_measurements(&truth, 3, &cfg).unwrap().measurements.is_empty());
    }

    #[test]
    fn perfect_sensor_returns_exact_measurements() {
        let mut cfg = ScenarioConfig {
            p_d: 1.0,
            clutter_mean: 0.0,
            ..ScenarioConfig::default()
        };
        let tiny = MeasStd {
            toa_m: 1e-300,
            doa_rad: 1e-300,
            dod_rad: 1e-300,
        };
        cfg.meas_std = PerType {
            bs: tiny.clone(),
            va: tiny.clone(),
            sp: tiny,
        };
        let truth = generate_truth(&cfg).unwrap();
        let k = 5;
        let frame = generate_measurements(&truth, k, &cfg).unwrap();
        let s = &truth.states[k - 1];
        let visible = truth
            .landmarks
            .iter()
            .filter(|l| cfg.fov_range_m.to_array()[l.landmark_type.index()].is_none_or(|r| (l.pos() - s.pos()).norm() <= r))
            .count();
        assert_eq!(frame.measurements.len(), visible);
        for (z, origin) in frame.measurements.iter().zip(&frame.origins) {
            let l = &truth.landmarks[origin.unwrap()];
            let exact = measurement_fn(s, &l.pos(), l.landmark_type, &cfg.bs()).unwrap();
            assert!((z.to_vector() - exact.to_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn clutter_count_has_the_configured_mean() {
        let cfg = ScenarioConfig {
            p_d: 0.0,
            clutter_mean: 5.0,
            steps: 10_000,
            ..quiet()
        };
        let truth = generate_truth(&cfg).unwrap();
        let total: usize = (1..=cfg.steps)
            .map(|k| generate_measurements(&truth, k, &cfg).unwrap().measurements.len())
            .sum();
        let mean = total as f64 / cfg.steps as f64;
        assert!((4.85..=5.15).contains(&mean), "{mean}");
    }

    #[test]
    fn bundle_round_trips_through_text() {
        let cfg = ScenarioConfig {
            steps: 4,
            ..ScenarioConfig::default()
        };
        let bundle = simulate(&cfg).unwrap();
        let mut buf = Vec::new();
        write_bundle(&bundle, &mut buf).unwrap();
        let back = read_bundle(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, bundle);
    }

    #[test]
    fn zero_wall_normal_is_a_config_error() {
        let mut cfg = ScenarioConfig::default();
        cfg.walls[0].normal = [0.0; 3];
        assert!(matches!(cfg.validate(), Err(SlamError::Config { .. })));
    }
}
