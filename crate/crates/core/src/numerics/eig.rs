use num_complex::Complex;
use num_traits::Zero;

use super::Matrix;
use crate::error::{Error, Result};
use crate::Real;

/// Sweep cap for the cyclic Jacobi iteration.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-structure of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EigResult<T> {
    /// Real eigenvalues, descending.
    pub values: Vec<T>,
    /// Unit-norm eigenvectors as columns, in the order of `values`.
    pub vectors: Matrix<T>,
}

impl<T: Real> EigResult<T> {
    /// `V diag(values) Vᴴ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let scaled = Matrix::from_fn(self.vectors.rows(), self.vectors.cols(), |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        &scaled * &self.vectors.adjoint()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn tolerance<T: Real>() -> T {
    T::lit(1e-8).max(T::epsilon() * T::lit(100.0))
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations.
///
/// The input is symmetrized before decomposing, so round-off asymmetry is
/// tolerated; anything further than `1e-8` (relative) from Hermitian is
/// rejected.
pub fn hermitian_eig<T: Real>(a: &Matrix<T>) -> Result<EigResult<T>> {
    if !a.is_square() {
        return Err(Error::dim(
            "hermitian_eig",
            format!("expected a square matrix, got {}x{}", a.rows(), a.cols()),
        ));
    }
    if !a.is_finite() {
        return Err(Error::numeric("hermitian_eig", "input has non-finite entries"));
    }
    let defect = a.hermitian_defect();
    if defect > tolerance() {
        return Err(Error::numeric(
            "hermitian_eig",
            format!("input is not Hermitian (relative defect {defect:e})"),
        ));
    }

    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Matrix::<T>::identity(n);
    let eps = T::epsilon();

    let mut converged = n <= 1;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let total = m.frobenius_norm();
        let off = off_diagonal_norm(&m);
        if off <= eps * total || off.is_zero() {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&m);
        if off > eps * m.frobenius_norm() * T::lit(16.0) {
            return Err(Error::numeric(
                "hermitian_eig",
                format!("Jacobi iteration did not converge within {JACOBI_MAX_SWEEPS} sweeps (off-diagonal norm {off:e})"),
            ));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[(j, j)]
            .re
            .partial_cmp(&m[(i, i)].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(EigResult { values, vectors })
}

fn off_diagonal_norm<T: Real>(m: &Matrix<T>) -> T {
    let n = m.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// One two-sided rotation `m ← Jᴴ m J`, `v ← v J` annihilating `m[p,q]`.
///
/// `J` restricted to `(p, q)` is `[[c, s·e^{iφ}], [−s·e^{−iφ}, c]]` with
/// `e^{iφ} = m[p,q]/|m[p,q]|`.
fn rotate<T: Real>(m: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let apq = m[(p, q)];
    let mag = apq.norm();
    if mag.is_zero() {
        return;
    }
    let n = m.rows();
    let phase = apq / mag;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let theta = (aqq - app) / (T::lit(2.0) * mag);
    let t = if theta.is_zero() {
        T::one()
    } else {
        theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    let sp = phase * s; // s·e^{iφ}
    let sm = phase.conj() * s; // s·e^{−iφ}

    // Columns p, q.
    for k in 0..n {
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        m[(k, p)] = akp * c - sm * akq;
        m[(k, q)] = sp * akp + akq * c;
    }
    // Rows p, q.
    for k in 0..n {
        let apk = m[(p, k)];
        let aqk = m[(q, k)];
        m[(p, k)] = apk * c - sp * aqk;
        m[(q, k)] = sm * apk + aqk * c;
    }
    m[(p, q)] = Complex::zero();
    m[(q, p)] = Complex::zero();
    m[(p, p)] = Complex::new(m[(p, p)].re, T::zero());
    m[(q, q)] = Complex::new(m[(q, q)].re, T::zero());

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - sm * vkq;
        v[(k, q)] = sp * vkp + vkq * c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_util::*;
    use num_complex::Complex;
    use proptest::prelude::*;

    fn check_invariants(a: &Matrix<f64>, e: &EigResult<f64>) {
        let n = a.rows() as f64;
        assert!(e.vectors.column_orthonormality_defect() <= 1e-10 * n);
        let rec = (&e.reconstruct() - a).frobenius_norm();
        assert!(rec <= 1e-8 * a.frobenius_norm().max(1e-300), "reconstruction {rec}");
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = hermitian_eig(&Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert!(e.vectors.column_orthonormality_defect() < 1e-15);
    }

    #[test]
    fn diagonal_input_is_sorted() {
        let a = Matrix::<f64>::from_real_diag(&[1.0, 4.0]);
        let e = hermitian_eig(&a).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        // permutation of identity columns
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gram_of_tall_matrix_has_forced_null_space() {
        // B is 6x4, so B Bᴴ (6x6) has rank 4 and two null eigenvalues.
        let b = random_matrix(6, 4, 11);
        let a = &b * &b.adjoint();
        let e = hermitian_eig(&a).unwrap();
        check_invariants(&a, &e);
        let small = e.values.iter().filter(|v| v.abs() < 1e-10).count();
        assert_eq!(small, 2);
        // Brute-force rank oracle: Gram-Schmidt over the columns of B.
        assert_eq!(gram_rank(&b, 1e-9), 4);
    }

    /// Rank by classical Gram-Schmidt with a residual threshold.
    fn gram_rank(b: &Matrix<f64>, tol: f64) -> usize {
        let mut basis: Vec<Vec<Complex<f64>>> = Vec::new();
        for j in 0..b.cols() {
            let mut c = b.col(j);
            for q in &basis {
                let proj = crate::numerics::inner(q, &c);
                for (ci, qi) in c.iter_mut().zip(q) {
                    *ci -= proj * qi;
                }
            }
            let nrm = crate::numerics::norm_sqr(&c).sqrt();
            if nrm > tol {
                basis.push(c.iter().map(|z| z / nrm).collect());
            }
        }
        basis.len()
    }

    #[test]
    fn non_square_is_a_dimension_error() {
        let err = hermitian_eig(&Matrix::<f64>::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let mut a = Matrix::<f64>::identity(2);
        a[(0, 1)] = Complex::new(1.0, 0.0);
        assert!(hermitian_eig(&a).is_err());
    }

    #[test]
    fn complex_two_by_two_against_closed_form() {
        // [[2, 1+i],[1-i, 3]]: eigenvalues (5 ± sqrt(1 + 8))/2 = 4, 1
        let a = Matrix::<f64>::from_vec(
            2,
            2,
            vec![
                Complex::new(2.0, 0.0),
                Complex::new(1.0, 1.0),
                Complex::new(1.0, -1.0),
                Complex::new(3.0, 0.0),
            ],
        )
        .unwrap();
        let e = hermitian_eig(&a).unwrap();
        assert!((e.values[0] - 4.0).abs() < 1e-13);
        assert!((e.values[1] - 1.0).abs() < 1e-13);
        check_invariants(&a, &e);
    }

    #[test]
    fn large_random_hermitian_reconstructs() {
        let a = random_hermitian(128, 5);
        let e = hermitian_eig(&a).unwrap();
        check_invariants(&a, &e);
    }

    #[test]
    fn single_precision_decomposes() {
        let a = random_hermitian(16, 9).cast::<f32>();
        let e = hermitian_eig(&a).unwrap();
        let rec = (&e.reconstruct() - &a).frobenius_norm();
        assert!(rec < 1e-4 * a.frobenius_norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn reconstruction_holds_for_random_hermitian(n in 1usize..40, seed in any::<u64>()) {
            let a = random_hermitian(n, seed);
            let e = hermitian_eig(&a).unwrap();
            check_invariants(&a, &e);
        }
    }
}
