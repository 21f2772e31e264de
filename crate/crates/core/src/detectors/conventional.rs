//! Matched filter, Rake and LMMSE baselines, applied block by block.

use num_complex::Complex;
use num_traits::Zero;

use crate::codes::{CodeSet, ScramblingSequence};
use crate::error::{Error, Result};
use crate::numerics::{inner, solve_hermitian, EigResult, Matrix};
use crate::sigmodel::{ChannelProfile, SignaturePair};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    MatchedFilter,
    Rake,
    Lmmse,
    LmmseEigen,
}

/// Despreads `x` with `code`: `codeᴴx/√G`.
pub(crate) fn despread<T: Real>(code: &[Complex<T>], x: &[Complex<T>]) -> Complex<T> {
    inner(code, &x[..code.len()]) / T::from_usize(code.len()).unwrap().sqrt()
}

fn check_user(codes: &CodeSet, user: usize) -> Result<()> {
    if user >= codes.users() {
        return Err(Error::config(format!(
            "user index {user} out of range for {} users",
            codes.users()
        )));
    }
    Ok(())
}

/// `y_n = e_iᴴ r_n[0..G)/√G`, `e_i` the (scrambled) code of user `i`.
pub fn mf_detect<T: Real>(
    codes: &CodeSet,
    user: usize,
    scramble: Option<&ScramblingSequence<T>>,
    blocks: &[Vec<Complex<T>>],
) -> Result<Vec<Complex<T>>> {
    check_user(codes, user)?;
    let g = codes.gain();
    if let Some(b) = blocks.iter().find(|b| b.len() < g) {
        return Err(Error::config(format!("block of length {} is shorter than the code ({g})", b.len())));
    }
    let e = codes.effective_code(user, scramble);
    Ok(blocks.iter().map(|r| despread(&e, r)).collect())
}

/// Maximal-ratio combination of the delayed fingers, `z = Hᴴr`:
/// `z_c = Σ_l conj(α_l)·r[c + d_l]` for `c < G`.
pub fn rake_combine<T: Real>(chan: &ChannelProfile<T>, gain: usize, block: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let need = gain + chan.max_delay();
    if block.len() < need {
        return Err(Error::config(format!(
            "Rake finger at delay {} needs {need} samples, block has {}",
            chan.max_delay(),
            block.len()
        )));
    }
    let mut z = vec![Complex::zero(); gain];
    for (a, &d) in chan.gains().iter().zip(chan.delays()) {
        let ac = a.conj();
        for (c, zc) in z.iter_mut().enumerate() {
            *zc += ac * block[c + d];
        }
    }
    Ok(z)
}

/// `y_n = e_iᴴ·Hᴴr_n/√G` with known gains and all listed delays as fingers.
pub fn rake_detect<T: Real>(
    codes: &CodeSet,
    user: usize,
    scramble: Option<&ScramblingSequence<T>>,
    chan_est: &ChannelProfile<T>,
    blocks: &[Vec<Complex<T>>],
) -> Result<Vec<Complex<T>>> {
    check_user(codes, user)?;
    let e = codes.effective_code(user, scramble);
    blocks
        .iter()
        .map(|r| Ok(despread(&e, &rake_combine(chan_est, codes.gain(), r)?)))
        .collect()
}

/// Per-user combining vectors as the columns of a `window × K` matrix;
/// `y_{k,n} = w_kᴴ r_n`.
#[derive(Debug, Clone)]
pub struct LinearDetector<T> {
    pub kind: DetectorKind,
    pub weights: Matrix<T>,
}

impl<T: Real> LinearDetector<T> {
    pub fn users(&self) -> usize {
        self.weights.cols()
    }

    pub fn detect(&self, user: usize, blocks: &[Vec<Complex<T>>]) -> Result<Vec<Complex<T>>> {
        if user >= self.users() {
            return Err(Error::config(format!("user index {user} out of range for {} users", self.users())));
        }
        let w = self.weights.col(user);
        blocks
            .iter()
            .map(|r| {
                if r.len() != w.len() {
                    Err(Error::dim(
                        "linear_detect",
                        format!("block length {} does not match weights {}", r.len(), w.len()),
                    ))
                } else {
                    Ok(inner(&w, r))
                }
            })
            .collect()
    }
}

/// `R⁻¹h0` by Cholesky solve, never an explicit inverse.
pub fn lmmse_weights<T: Real>(sig: &SignaturePair<T>, r: &Matrix<T>) -> Result<LinearDetector<T>> {
    if r.rows() != sig.g1 {
        return Err(Error::dim(
            "lmmse",
            format!("covariance is {}x{}, window is {}", r.rows(), r.cols(), sig.g1),
        ));
    }
    Ok(LinearDetector {
        kind: DetectorKind::Lmmse,
        weights: solve_hermitian(r, &sig.h0)?,
    })
}

/// `V_s D_s⁻¹ V_sᴴ h0` over the `dim` leading eigenpairs.
pub fn lmmse_eigen_weights<T: Real>(sig: &SignaturePair<T>, eig: &EigResult<T>, dim: usize) -> Result<LinearDetector<T>> {
    let n = eig.dim();
    if n != sig.g1 || dim == 0 || dim > n {
        return Err(Error::dim(
            "lmmse_eigen",
            format!("eigen-structure of size {n}, window {}, subspace {dim}", sig.g1),
        ));
    }
    let tol = T::from_usize(n).unwrap() * T::epsilon() * eig.values[0].abs();
    if let Some(i) = eig.values[..dim].iter().position(|&v| !(v > tol)) {
        return Err(Error::numeric(
            "lmmse_eigen",
            format!("retained eigenvalue {i} ({:e}) is not above tolerance {tol:e}", eig.values[i]),
        ));
    }
    let vs = eig.vectors.columns(0, dim);
    let mut proj = &vs.adjoint() * &sig.h0;
    for i in 0..dim {
        let inv = T::one() / eig.values[i];
        for z in proj.row_mut(i) {
            *z *= inv;
        }
    }
    Ok(LinearDetector {
        kind: DetectorKind::LmmseEigen,
        weights: &vs * &proj,
    })
}

/// `y_n = h0_iᴴ·R⁻¹r_n`.
pub fn lmmse_detect<T: Real>(
    sig: &SignaturePair<T>,
    user: usize,
    r: &Matrix<T>,
    blocks: &[Vec<Complex<T>>],
) -> Result<Vec<Complex<T>>> {
    lmmse_weights(sig, r)?.detect(user, blocks)
}

pub fn lmmse_eigen_detect<T: Real>(
    sig: &SignaturePair<T>,
    user: usize,
    eig: &EigResult<T>,
    dim: usize,
    blocks: &[Vec<Complex<T>>],
) -> Result<Vec<Complex<T>>> {
    lmmse_eigen_weights(sig, eig, dim)?.detect(user, blocks)
}
