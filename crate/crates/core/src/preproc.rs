//! Second-order preprocessing: covariance, noise floor and whitening.
//!
//! The noise-free covariance of the two-tap model is `H0H0ᴴ + H1H1ᴴ`. Its
//! rank is at most `K + rank(H1)`, and `H1` only has `max_delay` non-zero
//! rows, so for a synchronous downlink the signal subspace is usually well
//! below `2K`. The whitening fit therefore detects the signal dimension from
//! the spectrum instead of fixing it: the `K` leading directions are always
//! kept, and further directions up to `taps·K` are kept while they stand
//! clearly above the noise floor.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, pinv_diag, solve_hermitian, EigResult, Matrix};
use crate::sigmodel::SignaturePair;
use crate::Real;

/// `(1/M)·Σ r_n r_nᴴ`, symmetrised.
pub fn sample_covariance<T: Real>(blocks: &[Vec<Complex<T>>]) -> Result<Matrix<T>> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::config("covariance of an empty block sequence"))?;
    let n = first.len();
    let mut acc = Matrix::<T>::zeros(n, n);
    for (b, r) in blocks.iter().enumerate() {
        if r.len() != n {
            return Err(Error::dim(
                "sample_covariance",
                format!("block {b} has length {}, expected {n}", r.len()),
            ));
        }
        for i in 0..n {
            let ri = r[i];
            let row = acc.row_mut(i);
            // upper triangle only; mirrored below
            for j in i..n {
                row[j] += ri * r[j].conj();
            }
        }
    }
    let scale = T::one() / T::from_usize(blocks.len()).unwrap();
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i <= j {
            acc[(i, j)] * scale
        } else {
            acc[(j, i)].conj() * scale
        }
    }))
}

/// Model covariance `H0H0ᴴ + H1H1ᴴ + q·I` of a known signature pair.
pub fn exact_covariance<T: Real>(sig: &SignaturePair<T>, noise_var: T) -> Matrix<T> {
    let mut c = sig.signal_covariance();
    for i in 0..c.rows() {
        c[(i, i)] += Complex::new(noise_var, T::zero());
    }
    c
}

/// Tuning of the signal-dimension detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteningOptions {
    /// An eigenvalue beyond the first `K` counts as signal when it exceeds
    /// the noise estimate by more than `margin·q̂`.
    pub margin: f64,
    /// Forces the retained dimension instead of detecting it.
    pub dim: Option<usize>,
}

impl Default for WhiteningOptions {
    fn default() -> Self {
        WhiteningOptions { margin: 1.0, dim: None }
    }
}

/// Noise floor and `D × G1` whitening map `Λ⁺Vᴴ` onto the signal subspace.
#[derive(Debug, Clone)]
pub struct WhiteningTransform<T> {
    pub noise_var_hat: T,
    pub subspace_dim: usize,
    pub map: Matrix<T>,
    pub eig: EigResult<T>,
}

impl<T: Real> WhiteningTransform<T> {
    pub fn window(&self) -> usize {
        self.map.cols()
    }

    pub fn apply(&self, block: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if block.len() != self.map.cols() {
            return Err(Error::config(format!(
                "block length {} does not match the whitening window {}",
                block.len(),
                self.map.cols()
            )));
        }
        Ok(self.map.mul_vec(block))
    }

    /// `map·[H0 H1]`, the composite rotation `[U0ᴴ U1ᴴ]` seen after whitening.
    pub fn signal_rotation(&self, sig: &SignaturePair<T>) -> Matrix<T> {
        &self.map * &sig.stacked()
    }
}

pub fn fit_whitening<T: Real>(raw_cov: &Matrix<T>, expected_users: usize, taps: usize) -> Result<WhiteningTransform<T>> {
    fit_whitening_with(raw_cov, expected_users, taps, &WhiteningOptions::default())
}

pub fn fit_whitening_with<T: Real>(
    raw_cov: &Matrix<T>,
    expected_users: usize,
    taps: usize,
    opts: &WhiteningOptions,
) -> Result<WhiteningTransform<T>> {
    let n = raw_cov.rows();
    let k = expected_users;
    if k == 0 || taps == 0 {
        return Err(Error::config("whitening needs at least one user and one tap"));
    }
    if k >= n {
        return Err(Error::config(format!(
            "{k} users leave no noise dimension in a window of {n}"
        )));
    }
    let eig = hermitian_eig(raw_cov)?;
    let lam = &eig.values;
    let top = lam[0].max(T::zero());
    let tol = T::from_usize(n).unwrap() * T::epsilon() * top;
    let margin = T::lit(opts.margin);
    let cap = (taps * k).min(n - 1);
    let floor = |d: usize| -> T {
        if d >= n {
            T::zero()
        } else {
            lam[d..].iter().copied().sum::<T>() / T::from_usize(n - d).unwrap()
        }
    };

    let (dim, q) = match opts.dim {
        Some(d) => {
            if d < k || d >= n {
                return Err(Error::config(format!("forced dimension {d} outside {k}..{n}")));
            }
            (d, floor(d))
        }
        None => {
            let mut d = k;
            let mut q = floor(d);
            loop {
                let extra = lam[k..cap]
                    .iter()
                    .take_while(|&&l| l - q > tol.max(margin * q))
                    .count();
                let next = k + extra;
                if next == d {
                    break;
                }
                d = next;
                q = floor(d);
            }
            (d, q)
        }
    };

    let excess: Vec<T> = lam[..dim].iter().map(|&l| l - q).collect();
    if let Some(i) = excess.iter().position(|&e| !(e > tol)) {
        return Err(Error::numeric(
            "fit_whitening",
            format!(
                "signal subspace collapses: eigenvalue {i} exceeds the noise estimate {q:e} by {:e}",
                excess[i]
            ),
        ));
    }
    let inv_sqrt = pinv_diag(&excess, tol)?;
    let map = Matrix::from_fn(dim, n, |i, j| eig.vectors[(j, i)].conj() * inv_sqrt[i]);
    Ok(WhiteningTransform {
        noise_var_hat: q.max(T::zero()),
        subspace_dim: dim,
        map,
        eig,
    })
}

pub fn whiten<T: Real>(wt: &WhiteningTransform<T>, blocks: &[Vec<Complex<T>>]) -> Result<Vec<Vec<Complex<T>>>> {
    blocks.iter().map(|b| wt.apply(b)).collect()
}

/// Least-squares recovery of `b_n` from a whitened block given the composite
/// rotation `a = [A0 A1]`: the first `K` entries of `pinv(a)·r^w`.
///
/// When the column spaces of `A0` and `A1` meet only at zero, those entries
/// are exact in the noise-free case even if `a` is rank deficient.
pub fn oracle_invert<T: Real>(rotation: &Matrix<T>, users: usize, whitened: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    if whitened.len() != rotation.rows() || users > rotation.cols() {
        return Err(Error::dim(
            "oracle_invert",
            format!(
                "rotation is {}x{}, block has {} entries, {users} users",
                rotation.rows(),
                rotation.cols(),
                whitened.len()
            ),
        ));
    }
    let gram = rotation * &rotation.adjoint();
    let rhs = Matrix::from_fn(whitened.len(), 1, |i, _| whitened[i]);
    let x = solve_hermitian(&gram, &rhs)?;
    let full = rotation.adjoint_mul_vec(&x.col(0));
    Ok(full[..users].to_vec())
}

/// Identity map on the first `dim` coordinates of a `window`-long block.
pub fn truncation<T: Real>(dim: usize, window: usize) -> Matrix<T> {
    Matrix::from_fn(dim, window, |i, j| {
        if i == j {
            Complex::new(T::one(), T::zero())
        } else {
            Complex::zero()
        }
    })
}
