//! Permutations, binary mixing matrices and the two permutation solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bijection on `0..S`; entry `i` is the estimate index paired with reference `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &m in &mapping {
            if m >= mapping.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidArgument(format!("{mapping:?} is not a permutation")));
            }
        }
        Ok(Self(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reorders `estimates` so position `i` holds the estimate paired with reference `i`.
    pub fn apply<T: Clone>(&self, estimates: &[T]) -> Vec<T> {
        self.0.iter().map(|&j| estimates[j].clone()).collect()
    }
}

/// Binary N x M matrix assigning each of M estimates to exactly one of N mixtures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixingMatrix {
    rows: usize,
    assignment: Vec<usize>,
}

impl MixingMatrix {
    /// `assignment[m]` is the mixture receiving estimate `m`.
    pub fn from_assignment(rows: usize, assignment: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&a| a >= rows) {
            return Err(Error::InvalidArgument(format!(
                "estimate assigned to mixture {bad} of {rows}"
            )));
        }
        Ok(Self { rows, assignment })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        u8::from(self.assignment[col] == row)
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|r| (0..self.cols()).map(|c| self.get(r, c)).collect())
            .collect()
    }
}

/// Mean of `costs[i][perm[i]]`, summed in reference order.
pub fn assignment_cost(costs: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| costs[i][j]).sum::<f64>() / perm.len() as f64
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Exhaustive search over all S! permutations in lexicographic order; the first minimum wins.
pub fn solve_exhaustive(costs: &[Vec<f64>]) -> (Permutation, f64) {
    let n = costs.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = assignment_cost(costs, &perm);
    while next_permutation(&mut perm) {
        let c = assignment_cost(costs, &perm);
        if c < best_cost {
            best_cost = c;
            best.clone_from(&perm);
        }
    }
    (Permutation(best), best_cost)
}

/// Minimum-cost assignment with the O(S^3) Hungarian method (shortest augmenting paths
/// with row/column potentials).
pub fn solve_hungarian(costs: &[Vec<f64>]) -> (Permutation, f64) {
    let n = costs.len();
    // 1-based arrays; column 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    let cost = assignment_cost(costs, &perm);
    (Permutation(perm), cost)
}
