//! Effective sample size and systematic resampling.

use rand::Rng;

/// `1 / Σ w²` for normalised weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    if sq > 0.0 {
        1.0 / sq
    } else {
        0.0
    }
}

/// Indices of `n` systematic draws from normalised `weights`, in non-decreasing order.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let offset: f64 = rng.random::<f64>();
    let mut picks = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut i = 0;
    for k in 0..n {
        let u = (offset + k as f64) / n as f64 * total;
        while i + 1 < weights.len() && cumulative + weights[i] <= u {
            cumulative += weights[i];
            i += 1;
        }
        picks.push(i);
    }
    picks
}
