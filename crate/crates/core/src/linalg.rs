//! Small dense complex linear algebra used per frequency bin.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest loading factor tried before a solve gives up.
pub const MAX_LOADING: f64 = 1e-2;
const FIRST_ESCALATION: f64 = 1e-8;

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `(m + m^H) / 2`
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `m + eps * (tr(m) / M) * I`
pub fn load_diagonal(m: &CMatrix, eps: f64) -> CMatrix {
    if eps == 0.0 {
        return m.clone();
    }
    let n = m.nrows();
    let level = eps * trace(m).re / n as f64;
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] += Complex64::new(level, 0.0);
    }
    out
}

/// Solves `a x = b`: Cholesky first, fully pivoted LU when `a` is not numerically positive
/// definite. Returns `None` for (numerically) singular systems.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    let x = match a.clone().cholesky() {
        Some(ch) => ch.solve(b),
        None => {
            let lu = a.clone().full_piv_lu();
            let pivots: Vec<f64> = lu.u().diagonal().iter().map(|p| p.norm()).collect();
            let max = pivots.iter().cloned().fold(0.0, f64::max);
            let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(max > 0.0) || min / max < 1e-13 {
                return None;
            }
            lu.solve(b)?
        }
    };
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(x)
}

/// [`solve`] with diagonal-loading escalation: `eps`, then x10 steps up to [`MAX_LOADING`].
pub fn solve_escalating(a: &CMatrix, b: &CMatrix, bin: usize) -> Result<CMatrix> {
    if let Some(x) = solve(a, b) {
        return Ok(x);
    }
    let mut eps = FIRST_ESCALATION;
    while eps <= MAX_LOADING * (1.0 + 1e-9) {
        if let Some(x) = solve(&load_diagonal(a, eps), b) {
            log::debug!("bin {bin}: solve needed diagonal loading {eps:e}");
            return Ok(x);
        }
        eps *= 10.0;
    }
    Err(Error::Singular {
        bin,
        loading: MAX_LOADING,
    })
}

/// Largest eigenvalue and its unit eigenvector of a Hermitian matrix.
pub fn principal_eigenpair(m: &CMatrix) -> Result<(f64, CVector)> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix passed to eigensolver".into()));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let (idx, &value) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    Ok((value, eig.eigenvectors.column(idx).into_owned()))
}

/// Unit vector along `e_index`.
pub fn unit_vector(len: usize, index: usize) -> CVector {
    let mut u = CVector::zeros(len);
    u[index] = Complex64::new(1.0, 0.0);
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn loading_scales_with_trace() {
        let m = CMatrix::identity(2, 2);
        let loaded = load_diagonal(&m, 0.1);
        assert!((loaded[(0, 0)].re - 1.1).abs() < 1e-15);
        assert_eq!(load_diagonal(&CMatrix::zeros(3, 3), 0.5), CMatrix::zeros(3, 3));
        assert_eq!(load_diagonal(&m, 0.0), m);
    }

    #[test]
    fn singular_system_escalates_then_fails() {
        let zero = CMatrix::zeros(2, 2);
        let b = CMatrix::identity(2, 2);
        assert!(matches!(solve_escalating(&zero, &b, 7), Err(Error::Singular { bin: 7, .. })));
        // Rank one but non-zero trace: loading rescues it.
        let rank1 = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(1., 0.), c(1., 0.)]);
        assert!(solve_escalating(&rank1, &b, 0).is_ok());
    }

    #[test]
    fn lu_fallback_handles_indefinite() {
        let a = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let b = CMatrix::from_row_slice(2, 1, &[c(2., 0.), c(3., 0.)]);
        let x = solve(&a, &b).unwrap();
        assert!((x[(0, 0)] - c(3., 0.)).norm() < 1e-12);
        assert!((x[(1, 0)] - c(2., 0.)).norm() < 1e-12);
    }

    #[test]
    fn complex_hermitian_eigenpair() {
        let d = CVector::from_vec(vec![c(1., 0.), c(0., 1.)]);
        let m = &d * d.adjoint();
        let (value, v) = principal_eigenpair(&m).unwrap();
        assert!((value - 2.0).abs() < 1e-12);
        let residual = &m * &v - v.scale(value);
        assert!(residual.norm() < 1e-12);
    }
}
