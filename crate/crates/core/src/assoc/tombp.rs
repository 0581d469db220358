//! Reduction of the updated multi-Bernoulli mixture to a single multi-Bernoulli
//! using marginal association probabilities.

use super::lbp::Beliefs;
use crate::error::{Result, SlamError};
use crate::rfs::{moment_match_bernoulli, BernoulliComponent};

/// Bernoullis after reduction: the `I` prior landmarks first, then one per measurement.
#[derive(Clone, Debug)]
pub struct TombpOutput {
    pub bernoullis: Vec<BernoulliComponent>,
    /// Set for components whose existence is zero.
    pub prunable: Vec<bool>,
}

/// Collapses the per-association components of every landmark into one Bernoulli.
///
/// `missed[i]` is landmark `i` under a miss, `detected[i][j]` under detection by
/// measurement `j` (`None` when impossible) and `births[j]` the new landmark of
/// measurement `j` (`None` when stillborn).
pub fn tombp_reduce(
    missed: &[BernoulliComponent],
    detected: &[Vec<Option<BernoulliComponent>>],
    births: &[Option<BernoulliComponent>],
    beliefs: &Beliefs,
) -> Result<TombpOutput> {
    let n_i = missed.len();
    let n_j = births.len();
    if detected.len() != n_i
        || detected.iter().any(|row| row.len() != n_j)
        || beliefs.landmark.len() != n_i
        || beliefs.measurement.len() != n_j
    {
        return Err(SlamError::Dimension("beliefs do not match the update components".into()));
    }
    let mut bernoullis = Vec::with_capacity(n_i + n_j);
    let mut prunable = Vec::with_capacity(n_i + n_j);
    for i in 0..n_i {
        let bel = &beliefs.landmark[i];
        let mut mix = Vec::with_capacity(n_j + 1);
        if bel[0] > 0.0 {
            mix.push((bel[0], missed[i].clone()));
        }
        for j in 0..n_j {
            if let (Some(b), true) = (&detected[i][j], bel[j + 1] > 0.0) {
                mix.push((bel[j + 1], b.clone()));
            }
        }
        if mix.is_empty() {
            mix.push((1.0, missed[i].clone()));
        }
        let total: f64 = mix.iter().map(|(p, _)| p).sum();
        for (p, _) in &mut mix {
            *p /= total;
        }
        let merged = moment_match_bernoulli(&mix)?;
        let mut component = merged.component;
        component.log_weight = 0.0;
        bernoullis.push(component);
        prunable.push(merged.prunable);
    }
    for j in 0..n_j {
        match &births[j] {
            Some(b) => {
                let mut component = b.clone();
                component.existence = (beliefs.measurement[j][0] * b.existence).clamp(0.0, 1.0);
                component.log_weight = 0.0;
                prunable.push(component.existence <= 0.0);
                bernoullis.push(component);
            }
            None => {
                let dim = missed
                    .first()
                    .and_then(|b| b.active_types().next())
                    .and_then(|(_, c)| c.density.as_ref().map(|g| g.dim()))
                    .unwrap_or(3);
                bernoullis.push(BernoulliComponent::empty(dim));
                prunable.push(true);
            }
        }
    }
    Ok(TombpOutput { bernoullis, prunable })
}
