//! Vehicle motion, mmWave path geometry, detection model and birth points.
//!
//! Angles follow one convention everywhere: azimuth `atan2(dy, dx)` and
//! elevation `atan2(dz, ‖(dx, dy)‖)`. Vehicle-frame azimuths are rotated by
//! the heading; elevations are not. The clock bias is carried in meters.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlamError};
use crate::linalg::wrap_angle;
use crate::rfs::LandmarkType;

pub const VEHICLE_DIM: usize = 7;
pub const LANDMARK_DIM: usize = 3;
pub const MEAS_DIM: usize = 5;

/// Angular entries of the vehicle state vector.
pub const VEHICLE_ANGLES: &[usize] = &[3];
/// Angular entries of the measurement vector.
pub const MEAS_ANGLES: &[usize] = &[1, 2, 3, 4];

/// Kinematic and clock state of the sensing vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: [f64; 3],
    /// Heading in (−π, π].
    pub heading: f64,
    /// Translation speed, m/s.
    pub speed: f64,
    /// Turn rate, rad/s.
    pub turn_rate: f64,
    /// Clock bias, meters.
    pub bias: f64,
}

impl VehicleState {
    pub fn pos(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    /// `[x, y, z, α, ζ, ρ, b]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let p = self.position;
        DVector::from_vec(vec![p[0], p[1], p[2], self.heading, self.speed, self.turn_rate, self.bias])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            position: [v[0], v[1], v[2]],
            heading: v[3],
            speed: v[4],
            turn_rate: v[5],
            bias: v[6],
        }
    }
}

/// One channel-parameter measurement: TOA plus DOA and DOD angle pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Bias-inclusive path length, meters.
    pub toa: f64,
    pub doa_az: f64,
    pub doa_el: f64,
    pub dod_az: f64,
    pub dod_el: f64,
}

impl Measurement {
    /// `[τ, θ_az, θ_el, φ_az, φ_el]`.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.toa, self.doa_az, self.doa_el, self.dod_az, self.dod_el])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            toa: v[0],
            doa_az: v[1],
            doa_el: v[2],
            dod_az: v[3],
            dod_el: v[4],
        }
    }

    /// Wraps azimuths to (−π, π] and clamps elevations to [−π/2, π/2].
    pub fn normalized(mut self) -> Self {
        let half = std::f64::consts::FRAC_PI_2;
        self.doa_az = wrap_angle(self.doa_az);
        self.dod_az = wrap_angle(self.dod_az);
        self.doa_el = self.doa_el.clamp(-half, half);
        self.dod_el = self.dod_el.clamp(-half, half);
        self
    }
}

/// A landmark with known type.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub position: [f64; 3],
    pub landmark_type: LandmarkType,
}

impl Landmark {
    pub fn pos(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

/// Reflecting plane `{x : n·x = offset}` with unit normal `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

/// Azimuth and elevation of a direction vector.
pub fn angles(d: &Vector3<f64>) -> Result<(f64, f64)> {
    let horizontal = d.x.hypot(d.y);
    if horizontal == 0.0 && d.z == 0.0 {
        return Err(SlamError::UndefinedAngle("zero-length direction".into()));
    }
    Ok((d.y.atan2(d.x), d.z.atan2(horizontal)))
}

/// Coordinated-turn motion without process noise.
pub fn vehicle_transition(s: &VehicleState, dt: f64) -> VehicleState {
    let mut out = *s;
    let (zeta, rho, alpha) = (s.speed, s.turn_rate, s.heading);
    if rho.abs() < 1e-9 {
        out.position[0] += zeta * dt * alpha.cos();
        out.position[1] += zeta * dt * alpha.sin();
    } else {
        let a1 = alpha + rho * dt;
        out.position[0] += zeta / rho * (a1.sin() - alpha.sin());
        out.position[1] += zeta / rho * (alpha.cos() - a1.cos());
    }
    out.heading = wrap_angle(alpha + rho * dt);
    out
}

/// Reflection of the BS across a plane.
pub fn mirror_bs(bs: &Vector3<f64>, surface: &Plane) -> Result<Vector3<f64>> {
    let n = Vector3::from(surface.normal);
    let norm = n.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(SlamError::config("walls.normal", "wall normal must be nonzero"));
    }
    if (norm - 1.0).abs() > 1e-9 {
        return Err(SlamError::config("walls.normal", "wall normal must have unit length"));
    }
    Ok(bs - 2.0 * (n.dot(bs) - surface.offset) * n)
}

/// Noise-free channel parameters of the path through landmark `x` of type `m`.
pub fn measurement_fn(
    s: &VehicleState,
    x: &Vector3<f64>,
    m: LandmarkType,
    bs: &Vector3<f64>,
) -> Result<Measurement> {
    let v = s.pos();
    let to_landmark = x - v;
    let (doa_az, doa_el) = angles(&to_landmark)?;
    let (toa, dod) = match m {
        LandmarkType::Bs => (to_landmark.norm(), angles(&(v - x))?),
        LandmarkType::Va => {
            let towards_bs = bs - x;
            let len = towards_bs.norm();
            if len == 0.0 {
                return Err(SlamError::UndefinedAngle("virtual anchor coincides with the BS".into()));
            }
            let u = towards_bs / len;
            let d = v - x;
            let departure = d - 2.0 * d.dot(&u) * u;
            (to_landmark.norm(), angles(&departure)?)
        }
        LandmarkType::Sp => ((x - bs).norm() + to_landmark.norm(), angles(&(x - bs))?),
    };
    Ok(Measurement {
        toa: toa + s.bias,
        doa_az: wrap_angle(doa_az - s.heading),
        doa_el,
        dod_az: dod.0,
        dod_el: dod.1,
    })
}

/// Which map-update step a detection probability is evaluated for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateStep {
    /// Step i: undetected intensity.
    Undetected,
    /// Step ii: first detection of a landmark.
    Birth,
    /// Step iii: missed detection of a known landmark.
    Missed,
    /// Step iv: detection of a known landmark.
    Detected,
}

/// Two-level field-of-view and gating detection model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub p_d: f64,
    /// Maximum vehicle–landmark distance per type (`BS`, `VA`, `SP`); `None` is unlimited.
    pub fov_range_m: [Option<f64>; 3],
    /// Squared-Mahalanobis gate threshold `T_G`.
    pub gate_threshold: f64,
    /// Detection probability applied to the undetected intensity in step i.
    pub p_d_undetected: f64,
}

impl DetectionModel {
    pub fn new(p_d: f64, fov_range_m: [Option<f64>; 3], gate_probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_d) {
            return Err(SlamError::config("p_d", "must lie in [0, 1]"));
        }
        Ok(Self {
            p_d,
            fov_range_m,
            gate_threshold: gate_threshold(gate_probability)?,
            p_d_undetected: 0.0,
        })
    }

    /// Whether `x` lies inside the vehicle's field of view for type `m`.
    pub fn in_fov(&self, s: &VehicleState, x: &Vector3<f64>, m: LandmarkType) -> bool {
        match self.fov_range_m[m.index()] {
            Some(range) => (x - s.pos()).norm() <= range,
            None => true,
        }
    }

    /// Two-level detection probability; `gate` is a squared Mahalanobis distance.
    pub fn probability(
        &self,
        s: &VehicleState,
        x: &Vector3<f64>,
        m: LandmarkType,
        step: UpdateStep,
        gate: Option<f64>,
    ) -> f64 {
        match step {
            UpdateStep::Undetected => self.p_d_undetected,
            UpdateStep::Birth => {
                if self.in_fov(s, x, m) {
                    self.p_d
                } else {
                    0.0
                }
            }
            UpdateStep::Missed | UpdateStep::Detected => match gate {
                Some(g) if g < self.gate_threshold => self.p_d,
                _ => 0.0,
            },
        }
    }
}

/// Chi-square quantile for a five-dimensional measurement.
pub fn gate_threshold(gate_probability: f64) -> Result<f64> {
    gate_threshold_dof(gate_probability, MEAS_DIM)
}

/// Chi-square quantile at `gate_probability` with `dof` degrees of freedom.
pub fn gate_threshold_dof(gate_probability: f64, dof: usize) -> Result<f64> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if !(gate_probability > 0.0 && gate_probability < 1.0) {
        return Err(SlamError::config("p_g", "must lie in (0, 1)"));
    }
    let chi2 = ChiSquared::new(dof as f64).map_err(|e| SlamError::config("p_g", e.to_string()))?;
    Ok(chi2.inverse_cdf(gate_probability))
}

/// Birth point of a reflected path: the VA lies along the DOA at the bias-free path length.
pub fn birth_point_va(s: &VehicleState, z: &Measurement) -> Vector3<f64> {
    let length = z.toa - s.bias;
    let planar = length * z.doa_el.cos();
    let az = z.doa_az + s.heading;
    Vector3::new(
        s.position[0] + planar * az.cos(),
        s.position[1] + planar * az.sin(),
        s.position[2] + length * z.doa_el.sin(),
    )
}

/// Birth point of a scattered path: where the DOA ray meets the bisector plane of the BS and the VA-style point.
pub fn birth_point_sp(s: &VehicleState, z: &Measurement, bs: &Vector3<f64>) -> Result<Vector3<f64>> {
    let q = birth_point_va(s, z);
    let towards_bs = bs - q;
    let len = towards_bs.norm();
    if len < 1e-9 {
        return Err(SlamError::DegenerateGeometry("birth point coincides with the BS".into()));
    }
    let u = towards_bs / len;
    let f = 0.5 * (bs + q);
    let to_vehicle = s.pos() - q;
    let denom = to_vehicle.dot(&u);
    if denom.abs() < 1e-9 {
        return Err(SlamError::DegenerateGeometry("scatter birth denominator vanishes".into()));
    }
    Ok(q + ((f - q).dot(&u) / denom) * to_vehicle)
}

/// Birth point for a VA or SP; the BS is never born.
pub fn birth_point(
    s: &VehicleState,
    z: &Measurement,
    m: LandmarkType,
    bs: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    match m {
        LandmarkType::Va => Ok(birth_point_va(s, z)),
        LandmarkType::Sp => birth_point_sp(s, z, bs),
        LandmarkType::Bs => Err(SlamError::DegenerateGeometry("the BS has no birth model".into())),
    }
}
