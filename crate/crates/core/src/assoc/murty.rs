//! k-best global associations by Murty's partitioning.
//!
//! Measurements are rows of a `J × (I + J)` cost matrix. Column `i < I`
//! assigns the measurement to landmark `i` at cost `−ln(ν^i({z})/ν^i(∅))`;
//! column `I + j` leaves measurement `j` to the Poisson part at cost
//! `−ln ν({z_j})` and is open to row `j` only. Landmarks whose column stays
//! free are missed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::hungarian;
use super::problem::AssociationProblem;

/// Smallest missed-detection weight used when building costs.
const MIN_LOG_MISSED: f64 = -690.775_527_898_213_7; // ln 1e-300

/// One global association with its log weight.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedAssociation {
    /// Per landmark: `0` for a miss, `j + 1` for measurement `j`.
    pub assignment: Vec<usize>,
    pub log_weight: f64,
}

struct Node {
    cost: f64,
    assignment: Vec<usize>,
    rows: Vec<usize>,
    fixed: Vec<(usize, usize)>,
    forbidden: Vec<(usize, usize)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap order: lower cost first, then lexicographically smaller assignment.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.assignment.cmp(&self.assignment))
    }
}

struct CostTable {
    base: Vec<Vec<f64>>,
    n_landmarks: usize,
    n_cols: usize,
}

impl CostTable {
    fn new(problem: &AssociationProblem) -> Self {
        let n_i = problem.num_landmarks();
        let n_j = problem.num_measurements();
        let n_cols = n_i + n_j;
        let mut base = vec![vec![f64::INFINITY; n_cols]; n_j];
        for (j, row) in base.iter_mut().enumerate() {
            for i in 0..n_i {
                let detect = problem.log_detect[i][j];
                if detect > f64::NEG_INFINITY {
                    row[i] = -(detect - problem.log_missed[i].max(MIN_LOG_MISSED));
                }
            }
            if problem.log_new[j] > f64::NEG_INFINITY {
                row[n_i + j] = -problem.log_new[j];
            }
        }
        Self {
            base,
            n_landmarks: n_i,
            n_cols,
        }
    }

    fn solve(&self, fixed: &[(usize, usize)], forbidden: &[(usize, usize)]) -> Option<(Vec<usize>, f64)> {
        let mut cost = self.base.clone();
        for &(r, c) in forbidden {
            cost[r][c] = f64::INFINITY;
        }
        for &(r, c) in fixed {
            for (cc, v) in cost[r].iter_mut().enumerate() {
                if cc != c {
                    *v = f64::INFINITY;
                }
            }
            for (rr, row) in cost.iter_mut().enumerate() {
                if rr != r {
                    row[c] = f64::INFINITY;
                }
            }
        }
        hungarian::solve(&cost, self.n_cols)
    }

    fn to_landmark_vector(&self, rows: &[usize]) -> Vec<usize> {
        let mut a = vec![0usize; self.n_landmarks];
        for (j, &c) in rows.iter().enumerate() {
            if c < self.n_landmarks {
                a[c] = j + 1;
            }
        }
        a
    }

    fn node(&self, fixed: Vec<(usize, usize)>, forbidden: Vec<(usize, usize)>) -> Option<Node> {
        let (rows, cost) = self.solve(&fixed, &forbidden)?;
        if !cost.is_finite() {
            return None;
        }
        Some(Node {
            cost,
            assignment: self.to_landmark_vector(&rows),
            rows,
            fixed,
            forbidden,
        })
    }
}

/// The `k` highest-weight valid associations, best first.
///
/// Ties are ordered by the lexicographically smaller assignment vector.
/// Fewer than `k` are returned when fewer valid associations exist.
pub fn murty_kbest(problem: &AssociationProblem, k: usize) -> Vec<RankedAssociation> {
    murty_kbest_within(problem, k, f64::NEG_INFINITY)
}

/// As [`murty_kbest`], stopping once a weight falls below `best · exp(log_ratio)`.
pub fn murty_kbest_within(problem: &AssociationProblem, k: usize, log_ratio: f64) -> Vec<RankedAssociation> {
    if k == 0 {
        return Vec::new();
    }
    if problem.num_measurements() == 0 {
        let assignment = vec![0; problem.num_landmarks()];
        let log_weight = problem.log_weight(&assignment);
        return if log_weight > f64::NEG_INFINITY {
            vec![RankedAssociation { assignment, log_weight }]
        } else {
            Vec::new()
        };
    }
    let table = CostTable::new(problem);
    let mut heap = BinaryHeap::new();
    if let Some(root) = table.node(Vec::new(), Vec::new()) {
        heap.push(root);
    }
    let mut out: Vec<RankedAssociation> = Vec::new();
    let mut log_floor = f64::NEG_INFINITY;
    while out.len() < k {
        let Some(node) = heap.pop() else { break };
        let log_weight = problem.log_weight(&node.assignment);
        if log_weight < log_floor {
            break;
        }
        if out.is_empty() && log_weight > f64::NEG_INFINITY {
            log_floor = log_weight + log_ratio;
        }
        let free_rows: Vec<usize> = (0..node.rows.len())
            .filter(|r| !node.fixed.iter().any(|(fr, _)| fr == r))
            .collect();
        let mut fixed = node.fixed.clone();
        for &r in &free_rows {
            let mut forbidden = node.forbidden.clone();
            forbidden.push((r, node.rows[r]));
            if let Some(child) = table.node(fixed.clone(), forbidden) {
                heap.push(child);
            }
            fixed.push((r, node.rows[r]));
        }
        if log_weight > f64::NEG_INFINITY {
            out.push(RankedAssociation {
                assignment: node.assignment,
                log_weight,
            });
        }
    }
    out.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight).then_with(|| a.assignment.cmp(&b.assignment)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Every valid association, weight computed as a plain product.
    fn enumerate(nu_missed: &[f64], nu_detect: &[Vec<f64>], nu_new: &[f64]) -> Vec<(Vec<usize>, f64)> {
        fn rec(i: usize, a: &mut Vec<usize>, used: &mut Vec<bool>, n_i: usize, out: &mut Vec<Vec<usize>>) {
            if i == n_i {
                out.push(a.clone());
                return;
            }
            a.push(0);
            rec(i + 1, a, used, n_i, out);
            a.pop();
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    a.push(j + 1);
                    rec(i + 1, a, used, n_i, out);
                    a.pop();
                    used[j] = false;
                }
            }
        }
        let mut all = Vec::new();
        rec(0, &mut Vec::new(), &mut vec![false; nu_new.len()], nu_missed.len(), &mut all);
        let mut scored: Vec<(Vec<usize>, f64)> = all
            .into_iter()
            .map(|a| {
                let mut w = 1.0;
                let mut used = vec![false; nu_new.len()];
                for (i, &ai) in a.iter().enumerate() {
                    if ai == 0 {
                        w *= nu_missed[i];
                    } else {
                        w *= nu_detect[i][ai - 1];
                        used[ai - 1] = true;
                    }
                }
                for (j, u) in used.iter().enumerate() {
                    if !u {
                        w *= nu_new[j];
                    }
                }
                (a, w)
            })
            .filter(|(_, w)| *w > 0.0)
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored
    }

    #[test]
    fn single_pair() {
        let p = AssociationProblem::from_weights(&[0.3], &[vec![2.0]], &[0.5]).unwrap();
        let out = murty_kbest(&p, 10);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].assignment, vec![1]);
        assert!((out[0].log_weight.exp() - 2.0).abs() < 1e-12);
        assert_eq!(out[1].assignment, vec![0]);
        assert!((out[1].log_weight.exp() - 0.15).abs() < 1e-12);

        let p = AssociationProblem::from_weights(&[0.9], &[vec![0.1]], &[5.0]).unwrap();
        assert_eq!(murty_kbest(&p, 10)[0].assignment, vec![0]);
    }

    #[test]
    fn dominant_diagonal() {
        let p = AssociationProblem::from_weights(&[0.01, 0.01], &[vec![10.0, 1.0], vec![1.0, 10.0]], &[0.01, 0.01])
            .unwrap();
        let out = murty_kbest(&p, 1000);
        assert_eq!(out.len(), 7);
        assert_eq!(out[0].assignment, vec![1, 2]);
    }

    #[test]
    fn no_measurements() {
        let p = AssociationProblem::from_weights(&[0.4, 0.5], &[vec![], vec![]], &[]).unwrap();
        let out = murty_kbest(&p, 5);
        assert_eq!(out.len(), 1);
        assert!((out[0].log_weight.exp() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn impossible_pairs_are_excluded() {
        let p = AssociationProblem::from_weights(&[0.5, 0.5], &[vec![1.0, 0.0], vec![0.0, 0.0]], &[1.0, 1.0]).unwrap();
        let out = murty_kbest(&p, 100);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn floor_stops_early() {
        let p = AssociationProblem::from_weights(&[0.3], &[vec![2.0]], &[0.5]).unwrap();
        // second hypothesis has 0.075 of the best weight
        let out = murty_kbest_within(&p, 10, 0.1f64.ln());
        assert_eq!(out.len(), 1);
        let out = murty_kbest_within(&p, 10, 0.05f64.ln());
        assert_eq!(out.len(), 2);
        let p = AssociationProblem::from_weights(&[0.3], &[vec![2.0]], &[0.5]).unwrap();
        let out = murty_kbest_within(&p, 10, 0.0);
        assert_eq!(out.len(), 1);
    }

    proptest! {
        #[test]
        fn matches_enumeration(n_i in 0usize..4, n_j in 0usize..4,
                               vals in prop::collection::vec(0.05..5.0f64, 32), k in 1usize..40) {
            let mut it = vals.into_iter();
            let nu_missed: Vec<f64> = (0..n_i).map(|_| it.next().unwrap()).collect();
            let nu_detect: Vec<Vec<f64>> = (0..n_i).map(|_| (0..n_j).map(|_| it.next().unwrap()).collect()).collect();
            let nu_new: Vec<f64> = (0..n_j).map(|_| it.next().unwrap()).collect();
            let p = AssociationProblem::from_weights(&nu_missed, &nu_detect, &nu_new).unwrap();
            let exact = enumerate(&nu_missed, &nu_detect, &nu_new);
            let out = murty_kbest(&p, k);
            prop_assert_eq!(out.len(), k.min(exact.len()));
            for (got, (a, w)) in out.iter().zip(&exact) {
                prop_assert_eq!(&got.assignment, a);
                prop_assert!((got.log_weight.exp() - w).abs() <= 1e-12 * w.max(1.0));
            }
        }
    }
}
