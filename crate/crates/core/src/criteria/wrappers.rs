use std::borrow::Borrow;

use super::assignment::{assignment_cost, solve_exhaustive, solve_hungarian, MixingMatrix};
use super::{Assignment, Criterion, LossReport};
use crate::error::{Error, Result};

/// Largest source count searched exhaustively by [`PitSolver::Auto`].
pub const PIT_EXHAUSTIVE_MAX: usize = 4;
/// Upper bound on N^M candidate mixing matrices.
pub const MIXIT_BUDGET: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PitSolver {
    /// Exhaustive up to [`PIT_EXHAUSTIVE_MAX`] sources, Hungarian above.
    #[default]
    Auto,
    Exhaustive,
    Hungarian,
}

fn report<T: ?Sized, C: Criterion<T>>(criterion: &C, value: f64, assignment: Assignment) -> LossReport {
    LossReport {
        value,
        score: criterion.to_score(value),
        assignment,
    }
}

/// Pairs reference `i` with estimate `i`.
pub fn fixed_wrap<T, C, R>(criterion: &C, references: &[R], estimates: &[R]) -> Result<LossReport>
where
    T: ?Sized,
    C: Criterion<T>,
    R: Borrow<T>,
{
    check_counts(references.len(), estimates.len())?;
    let mut total = 0.0;
    for (r, e) in references.iter().zip(estimates) {
        total += criterion.loss(r.borrow(), e.borrow())?;
    }
    Ok(report(criterion, total / references.len() as f64, Assignment::None))
}

fn check_counts(refs: usize, ests: usize) -> Result<()> {
    if refs == 0 {
        return Err(Error::EmptyInput("wrapper references"));
    }
    if refs != ests {
        return Err(Error::ShapeMismatch(format!(
            "{refs} references vs {ests} estimates"
        )));
    }
    Ok(())
}

/// `costs[i][j]` = loss of estimate `j` against reference `i`.
pub fn pairwise_losses<T, C, R>(criterion: &C, references: &[R], estimates: &[R]) -> Result<Vec<Vec<f64>>>
where
    T: ?Sized,
    C: Criterion<T>,
    R: Borrow<T>,
{
    references
        .iter()
        .map(|r| {
            estimates
                .iter()
                .map(|e| criterion.loss(r.borrow(), e.borrow()))
                .collect()
        })
        .collect()
}

pub fn pit_wrap<T, C, R>(criterion: &C, references: &[R], estimates: &[R]) -> Result<LossReport>
where
    T: ?Sized,
    C: Criterion<T>,
    R: Borrow<T>,
{
    pit_wrap_with(criterion, references, estimates, PitSolver::Auto)
}

/// Minimum mean loss over all reference/estimate pairings.
pub fn pit_wrap_with<T, C, R>(
    criterion: &C,
    references: &[R],
    estimates: &[R],
    solver: PitSolver,
) -> Result<LossReport>
where
    T: ?Sized,
    C: Criterion<T>,
    R: Borrow<T>,
{
    check_counts(references.len(), estimates.len())?;
    let costs = pairwise_losses(criterion, references, estimates)?;
    let exhaustive = match solver {
        PitSolver::Auto => costs.len() <= PIT_EXHAUSTIVE_MAX,
        PitSolver::Exhaustive => true,
        PitSolver::Hungarian => false,
    };
    let (perm, value) = if exhaustive {
        solve_exhaustive(&costs)
    } else {
        solve_hungarian(&costs)
    };
    debug_assert_eq!(value, assignment_cost(&costs, perm.as_slice()));
    Ok(report(criterion, value, Assignment::Permutation(perm)))
}

/// Minimum mean loss between each mixture and the sum of the estimates assigned to it, over
/// every one-hot column assignment. Enumeration order is lexicographic in the assignment
/// vector, so ties resolve to the smallest one.
pub fn mixit_wrap<C>(criterion: &C, mixtures: &[Vec<f64>], estimates: &[Vec<f64>]) -> Result<LossReport>
where
    C: Criterion<[f64]>,
{
    let n = mixtures.len();
    let m = estimates.len();
    if n == 0 {
        return Err(Error::EmptyInput("mixit mixtures"));
    }
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "mixit needs at least as many estimates ({m}) as mixtures ({n})"
        )));
    }
    let len = mixtures[0].len();
    if mixtures.iter().chain(estimates).any(|s| s.len() != len) {
        return Err(Error::ShapeMismatch("mixit signals differ in length".into()));
    }
    let candidates = (n as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if candidates > MIXIT_BUDGET as u128 {
        return Err(Error::BudgetExceeded(format!(
            "{n}^{m} = {candidates} mixing matrices exceeds {MIXIT_BUDGET}"
        )));
    }

    let mut assignment = vec![0usize; m];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut remix = vec![vec![0.0; len]; n];
    for _ in 0..candidates {
        remix.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x = 0.0));
        for (est, &row) in estimates.iter().zip(&assignment) {
            remix[row].iter_mut().zip(est).for_each(|(acc, x)| *acc += x);
        }
        let mut total = 0.0;
        for (mix, est) in mixtures.iter().zip(&remix) {
            total += criterion.loss(mix, est)?;
        }
        let value = total / n as f64;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, assignment.clone()));
        }
        // Increment with estimate 0 as the most significant digit.
        for digit in assignment.iter_mut().rev() {
            *digit += 1;
            if *digit < n {
                break;
            }
            *digit = 0;
        }
    }
    let (value, assignment) = best.expect("at least one candidate");
    let matrix = MixingMatrix::from_assignment(n, assignment)?;
    Ok(report(criterion, value, Assignment::Mixing(matrix)))
}
