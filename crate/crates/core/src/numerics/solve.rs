use num_complex::Complex;
use num_traits::Zero;

use super::Matrix;
use crate::error::{Error, Result};
use crate::Real;

/// Diagonal of `Λ⁺` on the eigenvalue scale: `1/√v` above `tol`, else 0.
pub fn pinv_diag<T: Real>(values: &[T], tol: T) -> Result<Vec<T>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v < -tol {
                Err(Error::numeric(
                    "pinv_diag",
                    format!("entry {i} is negative ({v:e}) beyond tolerance {tol:e}"),
                ))
            } else if v > tol {
                Ok(T::one() / v.sqrt())
            } else {
                Ok(T::zero())
            }
        })
        .collect()
}

/// Solves `a·x = b` for Hermitian positive definite `a` via Cholesky.
pub fn solve_hermitian<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(Error::dim(
            "solve_hermitian",
            format!("a is {}x{}, b is {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        ));
    }
    let l = cholesky(a)?;
    let mut x = b.clone();
    for c in 0..b.cols() {
        // L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
        // Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
    }
    Ok(x)
}

/// Lower-triangular `L` with `a = L Lᴴ`.
fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(T::zero(), T::max);
    let floor = T::from_usize(n.max(1)).unwrap() * T::epsilon() * scale;
    let mut l = Matrix::<T>::zeros(n, n);
    let mut smallest = T::infinity();
    let mut failed = false;
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        smallest = smallest.min(d);
        if !(d > floor) {
            failed = true;
            // keep going to report the smallest pivot
            l[(j, j)] = Complex::new(T::one(), T::zero());
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex::new(djj, T::zero());
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    if failed {
        return Err(Error::numeric(
            "solve_hermitian",
            format!("matrix is not positive definite (smallest pivot {smallest:e})"),
        ));
    }
    Ok(l)
}

/// LU factorization with partial pivoting of a general square matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim(
                "lu",
                format!("expected a square matrix, got {}x{}", a.rows(), a.cols()),
            ));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best.is_zero() {
                return Err(Error::numeric("lu", format!("singular matrix (zero pivot in column {k})")));
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f.is_zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    /// `max|u_kk| / min|u_kk|`, a cheap lower bound on the condition number.
    pub fn pivot_ratio(&self) -> T {
        let n = self.lu.rows();
        let mags = (0..n).map(|k| self.lu[(k, k)].norm());
        let (lo, hi) = mags.fold((T::infinity(), T::zero()), |(lo, hi), m| (lo.min(m), hi.max(m)));
        if lo.is_zero() {
            T::infinity()
        } else {
            hi / lo
        }
    }

    pub fn solve_vec(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n, "Lu::solve_vec length");
        let mut x: Vec<Complex<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                let xk = x[k];
                x[i] -= l * xk;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                let xk = x[k];
                x[i] -= u * xk;
            }
            x[i] = x[i] / self.lu[(i, i)];
        }
        x
    }
}

/// Solves `a·x = b` for a general square `a`.
pub fn solve_general<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if b.rows() != a.rows() {
        return Err(Error::dim(
            "solve_general",
            format!("a has {} rows, b has {}", a.rows(), b.rows()),
        ));
    }
    let lu = Lu::factor(a)?;
    let mut x = Matrix::zeros(b.rows(), b.cols());
    for c in 0..b.cols() {
        x.set_col(c, &lu.solve_vec(&b.col(c)));
    }
    Ok(x)
}
