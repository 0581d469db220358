//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;

/// A random association instance in linear-domain weights.
#[derive(Clone, Debug)]
pub struct Instance {
    pub missed: Vec<f64>,
    pub detect: Vec<Vec<f64>>,
    pub new: Vec<f64>,
}

impl Instance {
    pub fn random<R: Rng>(rng: &mut R, n_i: usize, n_j: usize) -> Self {
        // weights spread over two decades, as in gated detection tables
        let draw = |rng: &mut R| 10f64.powf(rng.random_range(-1.0..1.0));
        let missed = (0..n_i).map(|_| draw(rng)).collect();
        let detect = (0..n_i).map(|_| (0..n_j).map(|_| draw(rng)).collect()).collect();
        let new = (0..n_j).map(|_| draw(rng)).collect();
        Self { missed, detect, new }
    }

    pub fn n_i(&self) -> usize {
        self.missed.len()
    }

    pub fn n_j(&self) -> usize {
        self.new.len()
    }
}

/// Every valid association with its product weight, sorted by weight (desc) then assignment.
pub fn enumerate(inst: &Instance) -> Vec<(Vec<usize>, f64)> {
    let n_i = inst.n_i();
    let n_j = inst.n_j();
    let mut out = Vec::new();
    let total = (n_j + 1).pow(n_i as u32);
    for code in 0..total {
        let mut a = Vec::with_capacity(n_i);
        let mut c = code;
        for _ in 0..n_i {
            a.push(c % (n_j + 1));
            c /= n_j + 1;
        }
        let mut used = vec![false; n_j];
        let mut valid = true;
        let mut w = 1.0;
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0 {
                w *= inst.missed[i];
            } else if used[ai - 1] {
                valid = false;
                break;
            } else {
                used[ai - 1] = true;
                w *= inst.detect[i][ai - 1];
            }
        }
        if !valid {
            continue;
        }
        for j in 0..n_j {
            if !used[j] {
                w *= inst.new[j];
            }
        }
        if w > 0.0 {
            out.push((a, w));
        }
    }
    out.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    out
}

/// Exact normalising constant and marginals `(landmark[i][a], measurement[j][b])`.
pub fn exact_marginals(inst: &Instance) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let all = enumerate(inst);
    let z: f64 = all.iter().map(|(_, w)| w).sum();
    let mut lm = vec![vec![0.0; inst.n_j() + 1]; inst.n_i()];
    let mut ms = vec![vec![0.0; inst.n_i() + 1]; inst.n_j()];
    for (a, w) in &all {
        let p = w / z;
        let mut used = vec![false; inst.n_j()];
        for (i, &ai) in a.iter().enumerate() {
            lm[i][ai] += p;
            if ai > 0 {
                ms[ai - 1][i + 1] += p;
                used[ai - 1] = true;
            }
        }
        for j in 0..inst.n_j() {
            if !used[j] {
                ms[j][0] += p;
            }
        }
    }
    (z, lm, ms)
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Composite trapezoid rule on `[a, b]` with `n` panels.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for k in 1..n {
        s += f(a + k as f64 * h);
    }
    s * h
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Plain sum-product on the pairwise graph over `c_i ∈ {0..J}` and `d_j ∈ {0..I}`.
///
/// Returns the landmark and measurement beliefs at the (damped) fixed point.
pub fn generic_bp(inst: &Instance, iterations: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n_i = inst.n_i();
    let n_j = inst.n_j();
    let phi_c = |i: usize, c: usize| if c == 0 { inst.missed[i] } else { inst.detect[i][c - 1] };
    let phi_d = |j: usize, d: usize| if d == 0 { inst.new[j] } else { 1.0 };
    let psi = |i: usize, j: usize, c: usize, d: usize| {
        let matched_c = c == j + 1;
        let matched_d = d == i + 1;
        if matched_c == matched_d {
            1.0
        } else {
            0.0
        }
    };
    // messages into c_i from pair (i,j), and into d_j from pair (i,j)
    let mut to_c = vec![vec![vec![1.0; n_j + 1]; n_j]; n_i];
    let mut to_d = vec![vec![vec![1.0; n_i + 1]; n_j]; n_i];
    let norm = |v: &mut Vec<f64>| {
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
    };
    for _ in 0..iterations {
        let mut new_to_c = to_c.clone();
        let mut new_to_d = to_d.clone();
        for i in 0..n_i {
            for j in 0..n_j {
                // c_i → pair, then pair → d_j
                let from_c: Vec<f64> = (0..=n_j)
                    .map(|c| phi_c(i, c) * (0..n_j).filter(|&jj| jj != j).map(|jj| to_c[i][jj][c]).product::<f64>())
                    .collect();
                let mut m: Vec<f64> = (0..=n_i).map(|d| (0..=n_j).map(|c| psi(i, j, c, d) * from_c[c]).sum()).collect();
                norm(&mut m);
                new_to_d[i][j] = m.iter().zip(&to_d[i][j]).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
                // d_j → pair, then pair → c_i
                let from_d: Vec<f64> = (0..=n_i)
                    .map(|d| phi_d(j, d) * (0..n_i).filter(|&ii| ii != i).map(|ii| to_d[ii][j][d]).product::<f64>())
                    .collect();
                let mut m: Vec<f64> = (0..=n_j).map(|c| (0..=n_i).map(|d| psi(i, j, c, d) * from_d[d]).sum()).collect();
                norm(&mut m);
                new_to_c[i][j] = m.iter().zip(&to_c[i][j]).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
            }
        }
        to_c = new_to_c;
        to_d = new_to_d;
    }
    let bc = (0..n_i)
        .map(|i| {
            let mut b: Vec<f64> = (0..=n_j).map(|c| phi_c(i, c) * (0..n_j).map(|j| to_c[i][j][c]).product::<f64>()).collect();
            norm(&mut b);
            b
        })
        .collect();
    let bd = (0..n_j)
        .map(|j| {
            let mut b: Vec<f64> = (0..=n_i).map(|d| phi_d(j, d) * (0..n_i).map(|i| to_d[i][j][d]).product::<f64>()).collect();
            norm(&mut b);
            b
        })
        .collect();
    (bc, bd)
}

/// Association weights of a planar tracking scene: `n_i` landmarks with
/// uncertain positions, `n_j` measurements that are either landmark detections
/// or uniform clutter, detection probability 0.95.
pub fn tracking_instance<R: Rng>(rng: &mut R, n_i: usize, n_j: usize) -> Instance {
    const SIDE: f64 = 10.0;
    const P_D: f64 = 0.95;
    const MEAS_VAR: f64 = 0.25;
    const PRIOR_VAR: f64 = 0.25;
    const CLUTTER_DENSITY: f64 = 0.01;
    const BIRTH_DENSITY: f64 = 0.01;
    let landmarks: Vec<[f64; 2]> = (0..n_i).map(|_| [rng.random_range(0.0..SIDE), rng.random_range(0.0..SIDE)]).collect();
    let existence: Vec<f64> = (0..n_i).map(|_| rng.random_range(0.3..1.0)).collect();
    let mut order: Vec<usize> = (0..n_i).collect();
    for k in (1..order.len()).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    let sd = (MEAS_VAR + PRIOR_VAR).sqrt();
    let meas: Vec<[f64; 2]> = (0..n_j)
        .map(|j| match order.get(j) {
            Some(&i) if rng.random_bool(0.8) => {
                let n = |rng: &mut R| -> f64 { rng.sample::<f64, _>(rand_distr::StandardNormal) * sd };
                [landmarks[i][0] + n(rng), landmarks[i][1] + n(rng)]
            }
            _ => [rng.random_range(0.0..SIDE), rng.random_range(0.0..SIDE)],
        })
        .collect();
    let var = MEAS_VAR + PRIOR_VAR;
    let missed = existence.iter().map(|r| 1.0 - r * P_D).collect();
    let detect = (0..n_i)
        .map(|i| {
            (0..n_j)
                .map(|j| {
                    let d2 = (meas[j][0] - landmarks[i][0]).powi(2) + (meas[j][1] - landmarks[i][1]).powi(2);
                    existence[i] * P_D * (-d2 / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var)
                })
                .collect()
        })
        .collect();
    let new = vec![CLUTTER_DENSITY + P_D * BIRTH_DENSITY; n_j];
    Instance { missed, detect, new }
}
