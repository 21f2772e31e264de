use num_complex::Complex;

use super::{inner, norm_sqr, Matrix};
use crate::error::{Error, Result};
use crate::Real;

/// Orthonormal basis for the column span of `u` (the `Q` of a thin QR with
/// positive real `R` diagonal).
///
/// Modified Gram-Schmidt with one re-orthogonalization pass per column.
pub fn orthonormalize<T: Real>(u: &Matrix<T>) -> Result<Matrix<T>> {
    let (rows, cols) = (u.rows(), u.cols());
    if cols > rows {
        return Err(Error::numeric(
            "orthonormalize",
            format!("{cols} columns cannot be orthonormal in dimension {rows}"),
        ));
    }
    let tol = T::from_usize(rows.max(1)).unwrap() * T::epsilon() * T::lit(16.0);
    let mut basis: Vec<Vec<Complex<T>>> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut c = u.col(j);
        let original = norm_sqr(&c).sqrt();
        for _pass in 0..2 {
            for q in &basis {
                let proj = inner(q, &c);
                for (ci, qi) in c.iter_mut().zip(q) {
                    *ci -= proj * qi;
                }
            }
        }
        let nrm = norm_sqr(&c).sqrt();
        if !(nrm > tol * original) || !(nrm > T::min_positive_value()) {
            return Err(Error::numeric(
                "orthonormalize",
                format!("input is rank deficient at column {j}"),
            ));
        }
        basis.push(c.into_iter().map(|z| z / nrm).collect());
    }
    Matrix::from_columns(rows, &basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_util::*;
    use num_traits::Zero;
    use proptest::prelude::*;

    #[test]
    fn unitary_input_is_fixed() {
        let q = orthonormalize(&random_matrix(5, 5, 1)).unwrap();
        let again = orthonormalize(&q).unwrap();
        assert!((&again - &q).frobenius_norm() < 1e-12);
    }

    #[test]
    fn upper_triangular_two_by_two() {
        let u = Matrix::<f64>::from_vec(
            2,
            2,
            vec![
                Complex::new(1.0, 0.0),
                Complex::new(1.0, 0.0),
                Complex::zero(),
                Complex::new(1.0, 0.0),
            ],
        )
        .unwrap();
        let q = orthonormalize(&u).unwrap();
        assert!(q.column_orthonormality_defect() < 1e-15);
        // first column is e1, second is e2 (the (1,1) column is e1 + e2)
        assert!((q[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((q[(1, 1)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let mut u = random_matrix(4, 2, 3);
        let c0 = u.col(0);
        u.set_col(1, &c0.iter().map(|z| z * 2.0).collect::<Vec<_>>());
        assert!(orthonormalize(&u).is_err());
    }

    /// Projector built by textbook classical Gram-Schmidt.
    fn gram_schmidt_projector(u: &Matrix<f64>) -> Matrix<f64> {
        let mut basis: Vec<Vec<Complex<f64>>> = Vec::new();
        for j in 0..u.cols() {
            let v = u.col(j);
            let mut w = v.clone();
            for q in &basis {
                let p = inner(q, &v);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= p * qi;
                }
            }
            let n = norm_sqr(&w).sqrt();
            basis.push(w.iter().map(|z| z / n).collect());
        }
        let q = Matrix::from_columns(u.rows(), &basis).unwrap();
        &q * &q.adjoint()
    }

    #[test]
    fn projector_matches_gram_schmidt() {
        let u = random_matrix(10, 4, 77);
        let q = orthonormalize(&u).unwrap();
        let p = &q * &q.adjoint();
        assert!((&p - &gram_schmidt_projector(&u)).frobenius_norm() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn orthonormal_and_idempotent(rows in 2usize..20, seed in any::<u64>()) {
            let cols = 1 + (seed as usize) % rows;
            let q = orthonormalize(&random_matrix(rows, cols, seed)).unwrap();
            prop_assert!(q.column_orthonormality_defect() <= 1e-10 * cols as f64);
            let q2 = orthonormalize(&q).unwrap();
            // idempotent up to column phases: |<q_j, q2_j>| = 1
            for j in 0..cols {
                let c = inner(&q.col(j), &q2.col(j)).norm();
                prop_assert!((c - 1.0).abs() < 1e-10);
            }
        }
    }
}
