//! Random-finite-set SLAM for mmWave vehicular networks.
//!
//! The crate provides Poisson multi-Bernoulli mixture (PMBM), Poisson
//! multi-Bernoulli (PMB) and marginalized PMB SLAM filters, a scenario
//! simulator for a single base station with reflecting walls and scatterers,
//! and GOSPA/RMSE evaluation.

pub mod assoc;
pub mod ckf;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod filters;
pub mod geometry;
pub mod linalg;
pub mod rfs;
pub mod sim;

pub use error::{Result, SlamError};
