//! Rake receivers with an adaptive chip-space matrix `W` between the finger
//! combiner and the despreader: `y = e_iᴴ·W·Hᴴr/√G`.

use std::collections::VecDeque;

use num_complex::Complex;
use num_traits::Zero;

use super::conventional::{despread, rake_combine};
use crate::codes::{CodeSet, ScramblingSequence};
use crate::error::{Error, Result};
use crate::numerics::{norm_sqr, Matrix};
use crate::sigmodel::ChannelProfile;
use crate::Real;

/// Sliding batch length for the expectations.
pub const DEFAULT_BATCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RakeRule {
    /// Batch fixed point `W⁺ = E[g(y)zᴴ] − diag(E[g′(y)])·W`, `g` the split
    /// cube, taken as a relaxed step `W + μ(W⁺ − W)` (`μ = 1` is the plain
    /// fixed-point iteration).
    FastIca,
    /// `W⁺ = W + μ(I − E[g(y)g(y)ᴴ])·W`, `g(y) = y|y|² − 2y`.
    RobustIca,
    /// `W⁺ = W + γ(I − E[yyᴴ])·W`.
    Pca,
}

impl RakeRule {
    /// Step (relaxation for the fixed point) tuned on the scaled reference
    /// scenario at 10 dB, batch 50.
    pub fn default_step(self) -> f64 {
        match self {
            RakeRule::FastIca => 3e-4,
            RakeRule::RobustIca | RakeRule::Pca => 1e-3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RakeRule::FastIca => "rake-ica",
            RakeRule::RobustIca => "rake-rica",
            RakeRule::Pca => "rake-pca",
        }
    }
}

/// `g(y) = Re(y)³ + j·Im(y)³`.
pub fn split_cube<T: Real>(y: Complex<T>) -> Complex<T> {
    Complex::new(y.re.powi(3), y.im.powi(3))
}

/// `3|y|²`, the derivative of the cube for real arguments.
pub fn split_cube_slope<T: Real>(y: Complex<T>) -> T {
    T::lit(3.0) * y.norm_sqr()
}

/// Kurtosis gradient for unit-power circular signals, `y|y|² − 2y`.
pub fn kurtosis_gradient<T: Real>(y: Complex<T>) -> Complex<T> {
    y * (y.norm_sqr() - T::lit(2.0))
}

#[derive(Debug, Clone)]
pub struct AdaptiveRakeState<T> {
    pub rule: RakeRule,
    /// `G × G`, initially `I`, kept at `‖W‖_F = √G`.
    pub w: Matrix<T>,
    pub step: T,
    pub batch: usize,
    pub iteration: usize,
    window: VecDeque<Vec<Complex<T>>>,
}

impl<T: Real> AdaptiveRakeState<T> {
    pub fn new(rule: RakeRule, gain: usize, step: T, batch: usize) -> Self {
        AdaptiveRakeState {
            rule,
            w: Matrix::identity(gain),
            step,
            batch: batch.max(1),
            iteration: 0,
            window: VecDeque::new(),
        }
    }

    pub fn gain(&self) -> usize {
        self.w.rows()
    }

    /// `W·z`.
    pub fn output(&self, z: &[Complex<T>]) -> Vec<Complex<T>> {
        self.w.mul_vec(z)
    }

    /// Adds `z` to the sliding batch and applies one update of the rule.
    pub fn update(&mut self, z: &[Complex<T>]) -> Result<()> {
        if z.len() != self.gain() {
            return Err(Error::dim(
                "adaptive_rake_update",
                format!("combined block of length {} for a {}-chip W", z.len(), self.gain()),
            ));
        }
        self.window.push_back(z.to_vec());
        while self.window.len() > self.batch {
            self.window.pop_front();
        }
        let next = match self.rule {
            RakeRule::FastIca => {
                let target = self.fastica_target();
                let norm = target.frobenius_norm();
                if norm > T::zero() && norm.is_finite() {
                    let unit = target.scale(T::from_usize(self.gain()).unwrap().sqrt() / norm);
                    &self.w + &(&unit - &self.w).scale(self.step)
                } else {
                    target
                }
            }
            RakeRule::RobustIca => self.gradient_target(kurtosis_gradient),
            RakeRule::Pca => self.gradient_target(|y| y),
        };
        self.normalize_into(next)?;
        self.iteration += 1;
        Ok(())
    }

    fn outputs(&self) -> Vec<Vec<Complex<T>>> {
        self.window.iter().map(|z| self.w.mul_vec(z)).collect()
    }

    fn fastica_target(&self) -> Matrix<T> {
        let g = self.gain();
        let n = T::from_usize(self.window.len()).unwrap();
        let ys = self.outputs();
        let mut next = Matrix::zeros(g, g);
        let mut slope = vec![T::zero(); g];
        for (y, z) in ys.iter().zip(&self.window) {
            for i in 0..g {
                let gi = split_cube(y[i]) / n;
                slope[i] += split_cube_slope(y[i]) / n;
                if gi.is_zero() {
                    continue;
                }
                for (e, zj) in next.row_mut(i).iter_mut().zip(z) {
                    *e += gi * zj.conj();
                }
            }
        }
        for (i, &s) in slope.iter().enumerate() {
            for (e, wij) in next.row_mut(i).iter_mut().zip(self.w.row(i)) {
                *e -= *wij * s;
            }
        }
        // the fixed point is only defined up to sign; keep the orientation of W
        let overlap: T = next
            .as_slice()
            .iter()
            .zip(self.w.as_slice())
            .map(|(a, b): (&Complex<T>, &Complex<T>)| (a * b.conj()).re)
            .fold(T::zero(), |s, v| s + v);
        if overlap < T::zero() {
            next.scale(-T::one())
        } else {
            next
        }
    }

    /// `W + μ(I − E[f(y)f(y)ᴴ])W`.
    fn gradient_target(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Matrix<T> {
        let g = self.gain();
        let n = T::from_usize(self.window.len()).unwrap();
        let mut m = Matrix::identity(g);
        for y in self.outputs() {
            let fy: Vec<Complex<T>> = y.into_iter().map(&f).collect();
            for i in 0..g {
                let a = fy[i] / n;
                for (e, fj) in m.row_mut(i).iter_mut().zip(&fy) {
                    *e -= a * fj.conj();
                }
            }
        }
        &self.w + &(&m * &self.w).scale(self.step)
    }

    fn normalize_into(&mut self, next: Matrix<T>) -> Result<()> {
        let norm = next.frobenius_norm();
        if !norm.is_finite() || !next.is_finite() {
            return Err(self.divergence("non-finite W"));
        }
        // an all-zero batch carries no information: keep W, only rescale it
        let (next, norm) = if norm > T::zero() {
            (next, norm)
        } else {
            (self.w.clone(), self.w.frobenius_norm())
        };
        let scale = T::from_usize(self.gain()).unwrap().sqrt() / norm;
        self.w = next.scale(scale);
        Ok(())
    }

    fn divergence(&self, detail: &str) -> Error {
        Error::Divergence {
            structure: self.rule.name(),
            epoch: 0,
            block: self.iteration,
            detail: detail.into(),
        }
    }
}

/// Unit-power scale for the combined blocks, `1/√(E|z_c|²)`.
pub fn input_scale<T: Real>(combined: &[Vec<Complex<T>>]) -> T {
    let (mut total, mut count) = (T::zero(), 0usize);
    for z in combined {
        total += norm_sqr(z);
        count += z.len();
    }
    if count == 0 || !(total > T::zero()) {
        return T::one();
    }
    (T::from_usize(count).unwrap() / total).sqrt()
}

/// Runs the Rake chain with `W` adapted online (update on each block, then
/// detect), returning `W·Hᴴr_n` for every block. Training sees the combined
/// blocks scaled to unit power; detection uses them unscaled.
pub fn rake_adaptive_combine<T: Real>(
    state: &mut AdaptiveRakeState<T>,
    chan_est: &ChannelProfile<T>,
    blocks: &[Vec<Complex<T>>],
    adapt: bool,
) -> Result<Vec<Vec<Complex<T>>>> {
    let g = state.gain();
    let combined: Vec<Vec<Complex<T>>> = blocks.iter().map(|r| rake_combine(chan_est, g, r)).collect::<Result<_>>()?;
    let s = input_scale(&combined);
    combined
        .iter()
        .map(|z| {
            if adapt {
                let scaled: Vec<Complex<T>> = z.iter().map(|&v| v * s).collect();
                state.update(&scaled)?;
            }
            Ok(state.output(z))
        })
        .collect()
}

/// Soft symbols of one user from the adaptive Rake chain.
pub fn rake_adaptive_detect<T: Real>(
    state: &mut AdaptiveRakeState<T>,
    codes: &CodeSet,
    user: usize,
    scramble: Option<&ScramblingSequence<T>>,
    chan_est: &ChannelProfile<T>,
    blocks: &[Vec<Complex<T>>],
    adapt: bool,
) -> Result<Vec<Complex<T>>> {
    if user >= codes.users() {
        return Err(Error::config(format!("user index {user} out of range for {} users", codes.users())));
    }
    if state.gain() != codes.gain() {
        return Err(Error::config(format!(
            "W has {} chips, codes have {}",
            state.gain(),
            codes.gain()
        )));
    }
    let e = codes.effective_code(user, scramble);
    Ok(rake_adaptive_combine(state, chan_est, blocks, adapt)?
        .iter()
        .map(|x| despread(&e, x))
        .collect())
}
