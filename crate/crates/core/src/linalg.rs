//! Dense linear algebra through nalgebra, evaluated in f64.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

/// Solves `a x = b` for row-major square `a`. `None` when singular.
pub fn solve<S: Scalar>(a: &[S], b: &[S]) -> Option<Vec<S>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let m = DMatrix::from_row_iterator(n, n, a.iter().map(|x| x.to_f64_lossy()));
    let rhs = DVector::from_iterator(n, b.iter().map(|x| x.to_f64_lossy()));
    let x = m.lu().solve(&rhs)?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().map(|&v| S::lit(v)).collect())
    } else {
        None
    }
}

/// Eigenvalues of a symmetric row-major matrix, ascending.
pub fn symmetric_eigenvalues<S: Scalar>(a: &[S], n: usize) -> Vec<S> {
    let m = DMatrix::from_row_iterator(n, n, a.iter().map(|x| x.to_f64_lossy()));
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.into_iter().map(S::lit).collect()
}
