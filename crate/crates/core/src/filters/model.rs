//! Concrete [`SlamModel`]s: the mmWave channel model and a linear-Gaussian model.

use nalgebra::{DMatrix, DVector, Vector3};

use super::SlamModel;
use crate::ckf::Space;
use crate::error::{Result, SlamError};
use crate::geometry::{
    birth_point, measurement_fn, vehicle_transition, Measurement, VehicleState, LANDMARK_DIM, MEAS_DIM,
    VEHICLE_DIM,
};
use crate::linalg::is_psd;
use crate::rfs::{LandmarkType, UniformBox};

/// Single-BS mmWave model with coordinated-turn dynamics and range-limited fields of view.
#[derive(Clone, Debug)]
pub struct MmwaveModel {
    pub bs: Vector3<f64>,
    pub dt: f64,
    pub process_noise: DMatrix<f64>,
    /// Measurement covariance per type (`BS`, `VA`, `SP`).
    pub meas_noise: [DMatrix<f64>; 3],
    pub fov_range_m: [Option<f64>; 3],
    /// Expected clutter measurements per frame.
    pub clutter_rate: f64,
    /// Measurement box over which clutter is uniform.
    pub clutter_region: UniformBox,
}

const BIRTH_TYPES: [LandmarkType; 2] = [LandmarkType::Va, LandmarkType::Sp];

impl MmwaveModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(SlamError::config("dt_s", "must be positive"));
        }
        if self.process_noise.shape() != (VEHICLE_DIM, VEHICLE_DIM) || !is_psd(&self.process_noise, 1e-9) {
            return Err(SlamError::config("process_noise", "must be a 7×7 PSD matrix"));
        }
        for (r, name) in self.meas_noise.iter().zip(["bs", "va", "sp"]) {
            if r.shape() != (MEAS_DIM, MEAS_DIM) || crate::linalg::min_eigenvalue(r) <= 0.0 {
                return Err(SlamError::config(
                    format!("meas_noise.{name}"),
                    "must be a 5×5 SPD matrix",
                ));
            }
        }
        if self.clutter_rate < 0.0 || !self.clutter_rate.is_finite() {
            return Err(SlamError::config("clutter_mean", "must be finite and non-negative"));
        }
        if self.clutter_region.dim() != MEAS_DIM {
            return Err(SlamError::config("clutter_region", "must be five-dimensional"));
        }
        Ok(())
    }
}

fn position(x: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

impl SlamModel for MmwaveModel {
    fn vehicle_dim(&self) -> usize {
        VEHICLE_DIM
    }

    fn landmark_dim(&self) -> usize {
        LANDMARK_DIM
    }

    fn meas_dim(&self) -> usize {
        MEAS_DIM
    }

    fn vehicle_space(&self) -> Space {
        Space::VEHICLE
    }

    fn meas_space(&self) -> Space {
        Space::MEASUREMENT
    }

    fn transition(&self, s: &DVector<f64>) -> DVector<f64> {
        vehicle_transition(&VehicleState::from_slice(s.as_slice()), self.dt).to_vector()
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.process_noise
    }

    fn measure(&self, s: &DVector<f64>, x: &DVector<f64>, m: LandmarkType) -> Result<DVector<f64>> {
        Ok(measurement_fn(&VehicleState::from_slice(s.as_slice()), &position(x), m, &self.bs)?.to_vector())
    }

    fn meas_noise(&self, m: LandmarkType) -> &DMatrix<f64> {
        &self.meas_noise[m.index()]
    }

    fn birth_point(&self, s: &DVector<f64>, z: &DVector<f64>, m: LandmarkType) -> Result<DVector<f64>> {
        let x = birth_point(
            &VehicleState::from_slice(s.as_slice()),
            &Measurement::from_slice(z.as_slice()),
            m,
            &self.bs,
        )?;
        Ok(DVector::from_column_slice(x.as_slice()))
    }

    fn birth_types(&self) -> &[LandmarkType] {
        &BIRTH_TYPES
    }

    fn in_fov(&self, s: &DVector<f64>, x: &DVector<f64>, m: LandmarkType) -> bool {
        match self.fov_range_m[m.index()] {
            Some(range) => (position(x) - position(s)).norm() <= range,
            None => true,
        }
    }

    fn clutter_intensity(&self, z: &DVector<f64>) -> f64 {
        if self.clutter_rate > 0.0 && self.clutter_region.contains(z) {
            self.clutter_rate / self.clutter_region.volume()
        } else {
            0.0
        }
    }
}

/// Linear-Gaussian model `s' = F s + q`, `z = A x + C s + r` with invertible `A`.
///
/// Every landmark type shares the same measurement model; there is no angular
/// component and the field of view is unlimited.
#[derive(Clone, Debug)]
pub struct LinearModel {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub landmark_gain: DMatrix<f64>,
    pub vehicle_gain: DMatrix<f64>,
    pub meas_noise: DMatrix<f64>,
    pub birth_types: Vec<LandmarkType>,
    /// Constant clutter intensity.
    pub clutter: f64,
    inverse_gain: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(
        transition: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        landmark_gain: DMatrix<f64>,
        vehicle_gain: DMatrix<f64>,
        meas_noise: DMatrix<f64>,
        birth_types: Vec<LandmarkType>,
        clutter: f64,
    ) -> Result<Self> {
        let inverse_gain = landmark_gain
            .clone()
            .try_inverse()
            .ok_or_else(|| SlamError::config("landmark_gain", "must be invertible"))?;
        if vehicle_gain.nrows() != landmark_gain.nrows() || vehicle_gain.ncols() != transition.nrows() {
            return Err(SlamError::Dimension("vehicle gain does not match the model".into()));
        }
        Ok(Self {
            transition,
            process_noise,
            landmark_gain,
            vehicle_gain,
            meas_noise,
            birth_types,
            clutter,
            inverse_gain,
        })
    }
}

impl SlamModel for LinearModel {
    fn vehicle_dim(&self) -> usize {
        self.transition.nrows()
    }

    fn landmark_dim(&self) -> usize {
        self.landmark_gain.ncols()
    }

    fn meas_dim(&self) -> usize {
        self.landmark_gain.nrows()
    }

    fn vehicle_space(&self) -> Space {
        Space::EUCLIDEAN
    }

    fn meas_space(&self) -> Space {
        Space::EUCLIDEAN
    }

    fn transition(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.transition * s
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.process_noise
    }

    fn measure(&self, s: &DVector<f64>, x: &DVector<f64>, _m: LandmarkType) -> Result<DVector<f64>> {
        Ok(&self.landmark_gain * x + &self.vehicle_gain * s)
    }

    fn meas_noise(&self, _m: LandmarkType) -> &DMatrix<f64> {
        &self.meas_noise
    }

    fn birth_point(&self, s: &DVector<f64>, z: &DVector<f64>, _m: LandmarkType) -> Result<DVector<f64>> {
        Ok(&self.inverse_gain * (z - &self.vehicle_gain * s))
    }

    fn birth_types(&self) -> &[LandmarkType] {
        &self.birth_types
    }

    fn in_fov(&self, _s: &DVector<f64>, _x: &DVector<f64>, _m: LandmarkType) -> bool {
        true
    }

    fn clutter_intensity(&self, _z: &DVector<f64>) -> f64 {
        self.clutter
    }
}
