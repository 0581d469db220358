//! Association weights for one map update.

use crate::error::{Result, SlamError};

/// Log-domain association weights between `I` prior landmarks and `J` measurements.
///
/// An assignment vector gives, per landmark, `0` for a miss or `j + 1` for
/// measurement `j`. Its weight is the product of the landmark terms times
/// `ν({z_j})` for every measurement left to the Poisson part.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociationProblem {
    /// `ln ν^i(∅)`.
    pub log_missed: Vec<f64>,
    /// `ln ν^i({z_j})`, `-inf` where the pairing is impossible.
    pub log_detect: Vec<Vec<f64>>,
    /// `ln ν({z_j})`.
    pub log_new: Vec<f64>,
}

impl AssociationProblem {
    /// Builds a problem from linear-domain weights.
    pub fn from_weights(nu_missed: &[f64], nu_detect: &[Vec<f64>], nu_new: &[f64]) -> Result<Self> {
        let check = |v: f64| {
            if v < 0.0 || v.is_nan() {
                Err(SlamError::InvalidDensity(format!("negative association weight {v}")))
            } else {
                Ok(v.ln())
            }
        };
        Self::from_log(
            nu_missed.iter().map(|&v| check(v)).collect::<Result<_>>()?,
            nu_detect
                .iter()
                .map(|row| row.iter().map(|&v| check(v)).collect::<Result<_>>())
                .collect::<Result<_>>()?,
            nu_new.iter().map(|&v| check(v)).collect::<Result<_>>()?,
        )
    }

    pub fn from_log(log_missed: Vec<f64>, log_detect: Vec<Vec<f64>>, log_new: Vec<f64>) -> Result<Self> {
        if log_detect.len() != log_missed.len() || log_detect.iter().any(|row| row.len() != log_new.len()) {
            return Err(SlamError::Dimension(format!(
                "association tables for {} landmarks and {} measurements are inconsistent",
                log_missed.len(),
                log_new.len()
            )));
        }
        if log_missed.iter().chain(log_new.iter()).chain(log_detect.iter().flatten()).any(|v| v.is_nan()) {
            return Err(SlamError::InvalidDensity("association weight is NaN".into()));
        }
        Ok(Self {
            log_missed,
            log_detect,
            log_new,
        })
    }

    pub fn num_landmarks(&self) -> usize {
        self.log_missed.len()
    }

    pub fn num_measurements(&self) -> usize {
        self.log_new.len()
    }

    /// Log weight of an assignment vector; `-inf` when it is invalid.
    pub fn log_weight(&self, assignment: &[usize]) -> f64 {
        let j_count = self.num_measurements();
        if assignment.len() != self.num_landmarks() {
            return f64::NEG_INFINITY;
        }
        let mut used = vec![false; j_count];
        let mut total = 0.0;
        for (i, &a) in assignment.iter().enumerate() {
            if a == 0 {
                total += self.log_missed[i];
            } else {
                let j = a - 1;
                if j >= j_count || used[j] {
                    return f64::NEG_INFINITY;
                }
                used[j] = true;
                total += self.log_detect[i][j];
            }
        }
        for (j, u) in used.iter().enumerate() {
            if !u {
                total += self.log_new[j];
            }
        }
        total
    }
}
