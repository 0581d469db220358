//! Bethe free energy of association beliefs.
//!
//! The factor graph has landmark variables `c_i ∈ {0..J}` with unary factor
//! `ν^i(·)`, measurement variables `d_j ∈ {0..I}` with unary factor `ν({z_j})`
//! at `d_j = 0` and `1` elsewhere, and a consistency factor on every pair
//! `(c_i, d_j)`. Pairwise beliefs are rebuilt from the unary beliefs: the
//! consistent "matched" state `(c_i = j, d_j = i)` carries `β_ij`, and the
//! remaining mass `1 − β_ij` is spread as a product of the renormalised
//! unary beliefs over the unmatched states.

use super::lbp::Beliefs;
use super::problem::AssociationProblem;

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

fn weighted_log(b: f64, log_phi: f64) -> f64 {
    if b > 0.0 {
        b * log_phi
    } else {
        0.0
    }
}

/// `F = U − H` for the beliefs; `exp(−F)` approximates the sum of all association weights.
pub fn bethe_free_energy(problem: &AssociationProblem, beliefs: &Beliefs) -> f64 {
    let n_i = problem.num_landmarks();
    let n_j = problem.num_measurements();

    let mut energy = 0.0;
    for i in 0..n_i {
        let b = &beliefs.landmark[i];
        energy -= weighted_log(b[0], problem.log_missed[i]);
        for j in 0..n_j {
            energy -= weighted_log(b[j + 1], problem.log_detect[i][j]);
        }
    }
    for j in 0..n_j {
        energy -= weighted_log(beliefs.measurement[j][0], problem.log_new[j]);
    }

    let neg_entropy_c: Vec<f64> = beliefs.landmark.iter().map(|b| b.iter().map(|&v| xlogx(v)).sum()).collect();
    let neg_entropy_d: Vec<f64> = beliefs.measurement.iter().map(|b| b.iter().map(|&v| xlogx(v)).sum()).collect();

    // Σ b ln b over the unmatched states of one variable, renormalised: Σ p ln p
    let restricted = |total: f64, excluded: f64| -> f64 {
        let rest = 1.0 - excluded;
        if rest <= 0.0 {
            0.0
        } else {
            (total - xlogx(excluded)) / rest - rest.ln()
        }
    };

    let mut pair = 0.0;
    for i in 0..n_i {
        for j in 0..n_j {
            let bc = beliefs.landmark[i][j + 1];
            let bd = beliefs.measurement[j][i + 1];
            let beta = 0.5 * (bc + bd);
            let rest = 1.0 - beta;
            pair += xlogx(beta) + xlogx(rest);
            if rest > 0.0 {
                pair += rest * (restricted(neg_entropy_c[i], bc) + restricted(neg_entropy_d[j], bd));
            }
        }
    }

    // a variable of degree n enters with weight (n − 1); isolated ones count once with the opposite sign
    let unary = (n_j as f64 - 1.0) * neg_entropy_c.iter().sum::<f64>()
        + (n_i as f64 - 1.0) * neg_entropy_d.iter().sum::<f64>();

    energy + pair - unary
}
