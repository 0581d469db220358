//! Marginal association probabilities by loopy belief propagation.
//!
//! Messages follow the simplified two-family form for the bipartite
//! landmark/measurement graph: with `w_ij = ν^i({z_j}) / ν^i(∅)`,
//!
//! ```text
//! μ_{i→j} = w_ij / (1 + Σ_{j'≠j} w_ij' ν_{j'→i})
//! ν_{j→i} = 1 / (ν({z_j}) + Σ_{i'≠i} μ_{i'→j})
//! ```
//!
//! Each measurement's weights are rescaled by a common factor, which leaves
//! every marginal unchanged and keeps the messages in range.

use super::problem::AssociationProblem;

const FLOOR: f64 = 1e-300;
const MIN_LOG_MISSED: f64 = -690.775_527_898_213_7; // ln 1e-300

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbpConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Weight kept from the previous message, in `[0, 1)`.
    pub damping: f64,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
            damping: 0.5,
        }
    }
}

/// Approximate marginals of the landmark-side and measurement-side association variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Beliefs {
    /// `landmark[i][0]` is the miss probability, `landmark[i][j + 1]` measurement `j`.
    pub landmark: Vec<Vec<f64>>,
    /// `measurement[j][0]` is the new-landmark/clutter probability, `measurement[j][i + 1]` landmark `i`.
    pub measurement: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs belief propagation until the largest message change drops below the tolerance.
pub fn lbp_marginals(problem: &AssociationProblem, cfg: &LbpConfig) -> Beliefs {
    let n_i = problem.num_landmarks();
    let n_j = problem.num_measurements();

    // scaled weights: w[i][j] and new[j] share a per-measurement factor
    let log_missed: Vec<f64> = problem.log_missed.iter().map(|v| v.max(MIN_LOG_MISSED)).collect();
    let mut w = vec![vec![0.0f64; n_j]; n_i];
    let mut new = vec![0.0f64; n_j];
    for j in 0..n_j {
        let mut scale = problem.log_new[j];
        for i in 0..n_i {
            scale = scale.max(problem.log_detect[i][j] - log_missed[i]);
        }
        if !scale.is_finite() {
            scale = 0.0;
        }
        new[j] = (problem.log_new[j] - scale).exp();
        for i in 0..n_i {
            let lw = problem.log_detect[i][j] - log_missed[i];
            w[i][j] = if lw.is_nan() { 0.0 } else { (lw - scale).exp() };
        }
    }

    let mut nu = vec![vec![1.0f64; n_j]; n_i]; // ν_{j→i}, indexed [i][j]
    let mut mu = vec![vec![0.0f64; n_j]; n_i]; // μ_{i→j}, indexed [i][j]
    let mut iterations = 0;
    let mut converged = n_i == 0 || n_j == 0;
    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        for i in 0..n_i {
            let total: f64 = (0..n_j).map(|j| w[i][j] * nu[i][j]).sum();
            for j in 0..n_j {
                let rest = (total - w[i][j] * nu[i][j]).max(0.0);
                mu[i][j] = w[i][j] / (1.0 + rest).max(FLOOR);
            }
        }
        let mut change = 0.0f64;
        for j in 0..n_j {
            let total: f64 = (0..n_i).map(|i| mu[i][j]).sum();
            for i in 0..n_i {
                let rest = (total - mu[i][j]).max(0.0);
                let fresh = 1.0 / (new[j] + rest).max(FLOOR);
                let damped = cfg.damping * nu[i][j] + (1.0 - cfg.damping) * fresh;
                let scale = damped.abs().max(nu[i][j].abs()).max(1e-12);
                change = change.max((damped - nu[i][j]).abs() / scale);
                nu[i][j] = damped;
            }
        }
        converged = change < cfg.tolerance;
    }
    // final landmark-to-measurement messages consistent with the last ν
    for i in 0..n_i {
        let total: f64 = (0..n_j).map(|j| w[i][j] * nu[i][j]).sum();
        for j in 0..n_j {
            let rest = (total - w[i][j] * nu[i][j]).max(0.0);
            mu[i][j] = w[i][j] / (1.0 + rest).max(FLOOR);
        }
    }

    let landmark = (0..n_i)
        .map(|i| {
            let mut b = Vec::with_capacity(n_j + 1);
            b.push(1.0);
            b.extend((0..n_j).map(|j| w[i][j] * nu[i][j]));
            normalize(b)
        })
        .collect();
    let measurement = (0..n_j)
        .map(|j| {
            let mut b = Vec::with_capacity(n_i + 1);
            b.push(new[j]);
            b.extend((0..n_i).map(|i| mu[i][j]));
            normalize(b)
        })
        .collect();
    Beliefs {
        landmark,
        measurement,
        iterations,
        converged,
    }
}

fn normalize(mut b: Vec<f64>) -> Vec<f64> {
    let total: f64 = b.iter().sum();
    if total > 0.0 && total.is_finite() {
        for v in &mut b {
            *v /= total;
        }
    } else {
        b.iter_mut().for_each(|v| *v = 0.0);
        b[0] = 1.0;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tight() -> LbpConfig {
        LbpConfig {
            max_iterations: 200,
            tolerance: 1e-14,
            damping: 0.5,
        }
    }

    #[test]
    fn single_pair_is_exact() {
        let p = AssociationProblem::from_weights(&[0.3], &[vec![2.0]], &[0.5]).unwrap();
        let b = lbp_marginals(&p, &tight());
        let p_assoc = 2.0 / (2.0 + 0.15);
        assert!((b.landmark[0][1] - p_assoc).abs() < 1e-12);
        assert!((b.measurement[0][1] - p_assoc).abs() < 1e-12);
        assert!(b.converged);
    }

    #[test]
    fn equal_weights_are_uniform() {
        let p = AssociationProblem::from_weights(&[1.0], &[vec![1.0]], &[1.0]).unwrap();
        let b = lbp_marginals(&p, &LbpConfig::default());
        assert!((b.landmark[0][0] - 0.5).abs() < 1e-9);
        assert!((b.landmark[0][1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn empty_sides() {
        let p = AssociationProblem::from_weights(&[0.4], &[vec![]], &[]).unwrap();
        let b = lbp_marginals(&p, &LbpConfig::default());
        assert_eq!(b.landmark, vec![vec![1.0]]);
        let p = AssociationProblem::from_weights(&[], &[], &[0.4]).unwrap();
        let b = lbp_marginals(&p, &LbpConfig::default());
        assert_eq!(b.measurement, vec![vec![1.0]]);
    }

    #[test]
    fn extreme_ratios_stay_finite() {
        let p = AssociationProblem::from_log(vec![-500.0, 0.0], vec![vec![200.0, -800.0], vec![-10.0, 300.0]], vec![
            -700.0, 50.0,
        ])
        .unwrap();
        let b = lbp_marginals(&p, &LbpConfig::default());
        for row in b.landmark.iter().chain(&b.measurement) {
            assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(b.landmark[0][1] > 0.999);
    }

    proptest! {
        #[test]
        fn beliefs_are_pmfs(n_i in 0usize..4, n_j in 0usize..4, vals in prop::collection::vec(0.0..5.0f64, 32)) {
            let mut it = vals.into_iter();
            let m: Vec<f64> = (0..n_i).map(|_| it.next().unwrap() + 0.01).collect();
            let d: Vec<Vec<f64>> = (0..n_i).map(|_| (0..n_j).map(|_| it.next().unwrap()).collect()).collect();
            let n: Vec<f64> = (0..n_j).map(|_| it.next().unwrap() + 0.01).collect();
            let p = AssociationProblem::from_weights(&m, &d, &n).unwrap();
            let b = lbp_marginals(&p, &LbpConfig::default());
            for row in b.landmark.iter().chain(&b.measurement) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|v| *v >= 0.0));
            }
        }
    }
}
