//! Adaptive blind separating structures on whitened blocks.
//!
//! Taps are stored in row form: output `j` of a tap is row `j` times the
//! input, so the feed-forward output is `y_n = Σ_k U_k·r_{n−k}`. With this
//! convention the column updates `u ← u − μ·r·g(y_j)` become the outer
//! products `U ← U − μ·g(y)·rᴴ`.

use std::collections::VecDeque;

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::numerics::{inner, norm_sqr, orthonormalize, Lu, Matrix};
use crate::Real;

/// Largest admissible `‖y_n‖ / ‖r_n‖` before a run is declared divergent.
pub const GROWTH_LIMIT: f64 = 1e3;
/// Largest admissible pivot ratio of the feedback-I `U_0`.
pub const CONDITION_LIMIT: f64 = 1e8;
/// Bound on `Σ_k ‖U_k‖₂` over the feedback taps; below 1 the recursion is stable.
pub const FEEDBACK_LIMIT: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    FeedForward,
    FeedbackI,
    FeedbackII,
}

impl Structure {
    pub fn name(self) -> &'static str {
        match self {
            Structure::FeedForward => "ff",
            Structure::FeedbackI => "fb1",
            Structure::FeedbackII => "fb2",
        }
    }
}

/// Elementwise score of the source model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreFunction {
    /// `g(y) = y − (tanh(Re y) + j·tanh(Im y))`, for sub-Gaussian symbols.
    #[default]
    SubGaussian,
}

impl ScoreFunction {
    pub fn eval<T: Real>(self, y: Complex<T>) -> Complex<T> {
        match self {
            ScoreFunction::SubGaussian => Complex::new(y.re - y.re.tanh(), y.im - y.im.tanh()),
        }
    }

    pub fn apply<T: Real>(self, y: &[Complex<T>]) -> Vec<Complex<T>> {
        y.iter().map(|&v| self.eval(v)).collect()
    }
}

/// Update law of the feedback-I structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fb1Law {
    /// The printed final laws, column `j` of `U_k` moving along `−y_{n−k}·g_j(r_n)`:
    /// `U_k ← U_k − μ·y_{n−k}·g(r_n)ᴴ`.
    Printed,
    /// Relative gradient of the inverse (mixing-form) model, restricted to
    /// unitary `U_0`: `U_0 ← U_0 + μ·U_0(g(y)yᴴ − y·g(y)ᴴ)`,
    /// `U_k ← U_k + μ·U_0·g(y)·y_{n−k}ᴴ`.
    #[default]
    Natural,
}

impl Fb1Law {
    pub fn name(self) -> &'static str {
        match self {
            Fb1Law::Printed => "printed",
            Fb1Law::Natural => "natural",
        }
    }
}

impl std::str::FromStr for Fb1Law {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "printed" => Ok(Fb1Law::Printed),
            "natural" => Ok(Fb1Law::Natural),
            other => Err(Error::config(format!("unknown feedback-I law '{other}' (expected natural or printed)"))),
        }
    }
}

/// Adaptive taps `U_0..U_T` plus the recent input/output history.
#[derive(Debug, Clone)]
pub struct DemixingState<T> {
    pub structure: Structure,
    pub taps: Vec<Matrix<T>>,
    pub step: T,
    pub score: ScoreFunction,
    pub fb1_law: Fb1Law,
    pub iteration: usize,
    inputs: VecDeque<Vec<Complex<T>>>,
    outputs: VecDeque<Vec<Complex<T>>>,
    last_update: T,
}

impl<T: Real> DemixingState<T> {
    /// `U_0 = I`, `U_k = 0` for `k = 1..=lags`.
    pub fn new(structure: Structure, dim: usize, lags: usize, step: T) -> Self {
        let mut taps = vec![Matrix::identity(dim)];
        taps.extend((0..lags).map(|_| Matrix::zeros(dim, dim)));
        DemixingState {
            structure,
            taps,
            step,
            score: ScoreFunction::SubGaussian,
            fb1_law: Fb1Law::default(),
            iteration: 0,
            inputs: VecDeque::new(),
            outputs: VecDeque::new(),
            last_update: T::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.taps[0].rows()
    }

    pub fn lags(&self) -> usize {
        self.taps.len() - 1
    }

    /// Forgets past inputs and outputs (frame start, zero padding).
    pub fn reset_history(&mut self) {
        self.inputs.clear();
        self.outputs.clear();
    }

    /// Frobenius norm of the last applied tap change.
    pub fn last_update_norm(&self) -> T {
        self.last_update
    }

    /// `‖U_0U_0ᴴ − I‖_F`.
    pub fn unitarity_residual(&self) -> T {
        self.taps[0].row_orthonormality_defect()
    }

    /// Re-projects the rows of `U_0` onto an orthonormal set. Lag taps are
    /// left free; feedback taps are shrunk if `Σ_k ‖U_k‖₂` exceeds
    /// [`FEEDBACK_LIMIT`].
    pub fn orthonormalize_taps(&mut self) -> Result<()> {
        self.taps[0] = orthonormalize(&self.taps[0].adjoint())?.adjoint();
        if self.structure != Structure::FeedForward {
            let limit = T::lit(FEEDBACK_LIMIT);
            let frob: T = self.taps[1..].iter().map(|u| u.frobenius_norm()).sum();
            if frob > limit {
                let total: T = self.taps[1..].iter().map(spectral_norm).sum();
                if total > limit {
                    let shrink = limit / total;
                    for u in &mut self.taps[1..] {
                        *u = u.scale(shrink);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn step(&mut self, r: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        match self.structure {
            Structure::FeedForward => self.ff_step(r),
            Structure::FeedbackI => self.fb1_step(r),
            Structure::FeedbackII => self.fb2_step(r),
        }
    }

    fn check_input(&self, r: &[Complex<T>]) -> Result<()> {
        if r.len() != self.dim() {
            return Err(Error::dim(
                "demixing_step",
                format!("block of length {} for a {}-dimensional separator", r.len(), self.dim()),
            ));
        }
        Ok(())
    }

    fn guard(&self, r: &[Complex<T>], y: &[Complex<T>]) -> Result<()> {
        let ny = norm_sqr(y).sqrt();
        let nr = norm_sqr(r).sqrt();
        if !ny.is_finite() || self.taps.iter().any(|u| !u.is_finite()) {
            return Err(self.divergence("non-finite output or taps"));
        }
        if ny > T::lit(GROWTH_LIMIT) * nr && ny > T::epsilon() {
            return Err(self.divergence(format!("output norm {ny:e} exceeds {GROWTH_LIMIT}x input norm {nr:e}")));
        }
        Ok(())
    }

    fn divergence(&self, detail: impl Into<String>) -> Error {
        Error::Divergence {
            structure: self.structure.name(),
            epoch: 0,
            block: self.iteration,
            detail: detail.into(),
        }
    }

    fn push_history(&mut self, r: &[Complex<T>], y: &[Complex<T>]) {
        let lags = self.lags();
        if lags == 0 {
            return;
        }
        self.inputs.push_front(r.to_vec());
        self.outputs.push_front(y.to_vec());
        self.inputs.truncate(lags);
        self.outputs.truncate(lags);
    }

    /// `u ← u − μ·a·bᴴ`, returns `‖a‖‖b‖` (the Frobenius norm of `a·bᴴ`).
    fn rank_one(u: &mut Matrix<T>, scale: Complex<T>, a: &[Complex<T>], b: &[Complex<T>]) -> T {
        for (i, &ai) in a.iter().enumerate() {
            let s = scale * ai;
            if s.is_zero() {
                continue;
            }
            for (uij, bj) in u.row_mut(i).iter_mut().zip(b) {
                *uij += s * bj.conj();
            }
        }
        (norm_sqr(a) * norm_sqr(b)).sqrt()
    }

    /// `y_n = Σ_k U_k r_{n−k}`; `U_k ← U_k − μ·g(y_n)·r_{n−k}ᴴ`.
    pub fn ff_step(&mut self, r: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.check_input(r)?;
        let mut y = self.taps[0].mul_vec(r);
        for (k, past) in self.inputs.iter().enumerate() {
            for (yi, v) in y.iter_mut().zip(self.taps[k + 1].mul_vec(past)) {
                *yi += v;
            }
        }
        self.guard(r, &y)?;
        if !self.step.is_zero() {
            let g = self.score.apply(&y);
            let mu = Complex::new(-self.step, T::zero());
            let mut total = Self::rank_one(&mut self.taps[0], mu, &g, r).powi(2);
            let inputs = std::mem::take(&mut self.inputs);
            for (k, past) in inputs.iter().enumerate() {
                total += Self::rank_one(&mut self.taps[k + 1], mu, &g, past).powi(2);
            }
            self.inputs = inputs;
            self.last_update = self.step * total.sqrt();
        }
        self.push_history(r, &y);
        self.iteration += 1;
        Ok(y)
    }

    /// `y_n = U_0⁻¹(r_n − Σ_k U_k y_{n−k})` by a fresh LU solve.
    pub fn fb1_step(&mut self, r: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.check_input(r)?;
        let mut v = r.to_vec();
        for (k, past) in self.outputs.iter().enumerate() {
            for (vi, w) in v.iter_mut().zip(self.taps[k + 1].mul_vec(past)) {
                *vi -= w;
            }
        }
        let lu = Lu::factor(&self.taps[0]).map_err(|e| self.divergence(e.to_string()))?;
        let ratio = lu.pivot_ratio();
        if !(ratio < T::lit(CONDITION_LIMIT)) {
            return Err(self.divergence(format!("U_0 is ill-conditioned (pivot ratio {ratio:e})")));
        }
        let y = lu.solve_vec(&v);
        self.guard(r, &y)?;
        if !self.step.is_zero() {
            let outputs = std::mem::take(&mut self.outputs);
            let total = match self.fb1_law {
                Fb1Law::Printed => {
                    let g = self.score.apply(r);
                    let mu = Complex::new(-self.step, T::zero());
                    let mut total = Self::rank_one(&mut self.taps[0], mu, &y, &g).powi(2);
                    for (k, past) in outputs.iter().enumerate() {
                        total += Self::rank_one(&mut self.taps[k + 1], mu, past, &g).powi(2);
                    }
                    total
                }
                Fb1Law::Natural => {
                    // U_0 += μ·U_0(g yᴴ − y gᴴ), with U_0 y = v
                    let g = self.score.apply(&y);
                    let ug = self.taps[0].mul_vec(&g);
                    // clip the step on large excursions so the cubic score cannot run away
                    let excursion = self.step * norm_sqr(&g).sqrt() * norm_sqr(&y).sqrt();
                    let mu = Complex::new(self.step / excursion.max(T::one()), T::zero());
                    let before = self.taps[0].clone();
                    Self::rank_one(&mut self.taps[0], mu, &ug, &y);
                    Self::rank_one(&mut self.taps[0], -mu, &v, &g);
                    let mut total = (&self.taps[0] - &before).frobenius_norm().powi(2);
                    for (k, past) in outputs.iter().enumerate() {
                        total += (mu.re * Self::rank_one(&mut self.taps[k + 1], mu, &ug, past)).powi(2);
                    }
                    total / (self.step * self.step)
                }
            };
            self.outputs = outputs;
            self.last_update = self.step * total.sqrt();
        }
        self.push_history(r, &y);
        self.iteration += 1;
        Ok(y)
    }

    /// `y_n = U_0 r_n − Σ_k U_k y_{n−k}`; `U_0 ← U_0 − μ·g(y_n)·r_nᴴ`,
    /// `U_k ← U_k + μ·g(y_n)·y_{n−k}ᴴ` (the feedback enters with a minus
    /// sign, so descent on it flips the sign).
    pub fn fb2_step(&mut self, r: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.check_input(r)?;
        let mut y = self.taps[0].mul_vec(r);
        for (k, past) in self.outputs.iter().enumerate() {
            for (yi, w) in y.iter_mut().zip(self.taps[k + 1].mul_vec(past)) {
                *yi -= w;
            }
        }
        self.guard(r, &y)?;
        if !self.step.is_zero() {
            let g = self.score.apply(&y);
            let mut total = Self::rank_one(&mut self.taps[0], Complex::new(-self.step, T::zero()), &g, r).powi(2);
            let outputs = std::mem::take(&mut self.outputs);
            for (k, past) in outputs.iter().enumerate() {
                total += Self::rank_one(&mut self.taps[k + 1], Complex::new(self.step, T::zero()), &g, past).powi(2);
            }
            self.outputs = outputs;
            self.last_update = self.step * total.sqrt();
        }
        self.push_history(r, &y);
        self.iteration += 1;
        Ok(y)
    }
}

/// Hyperparameters of [`run_blind`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlindConfig {
    pub step: f64,
    /// Number of lag (or feedback) taps `T`; `U_1..U_T`.
    pub lags: usize,
    pub epochs: usize,
    /// Re-orthonormalisation period in blocks; 0 disables it.
    pub orth_period: usize,
    pub fb1_law: Fb1Law,
}

impl Default for BlindConfig {
    fn default() -> Self {
        BlindConfig {
            step: 0.02,
            lags: 1,
            epochs: 20,
            orth_period: 10,
            fb1_law: Fb1Law::default(),
        }
    }
}

/// Largest singular value by power iteration on `AᴴA`.
fn spectral_norm<T: Real>(a: &Matrix<T>) -> T {
    let n = a.cols();
    if n == 0 {
        return T::zero();
    }
    let mut v = vec![Complex::new(T::one() / T::lit(n as f64).sqrt(), T::zero()); n];
    let mut sigma = T::zero();
    for _ in 0..100 {
        let w = a.adjoint_mul_vec(&a.mul_vec(&v));
        let nw = norm_sqr(&w).sqrt();
        if nw.is_zero() {
            return T::zero();
        }
        let next = nw.sqrt();
        v = w.into_iter().map(|x| x / nw).collect();
        let done = (next - sigma).abs() <= T::lit(1e-10) * next;
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}

/// One row of the per-epoch convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub mean_update: f64,
    pub unitarity_residual: f64,
}

/// Separator output and, once aligned, the per-user estimates.
#[derive(Debug, Clone)]
pub struct BlindOutput<T> {
    /// `D × M` outputs of the final frozen pass.
    pub raw: Matrix<T>,
    pub state: DemixingState<T>,
    pub trace: Vec<TraceRow>,
}

/// Trains a fresh separator for `epochs` passes over the frame (step size
/// decaying as `μ/√(epoch+1)`), then replays the frame with adaptation
/// frozen and returns those outputs.
pub fn run_blind<T: Real>(
    structure: Structure,
    whitened: &[Vec<Complex<T>>],
    cfg: &BlindConfig,
) -> Result<BlindOutput<T>> {
    let dim = whitened
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::config("blind separation of an empty frame"))?;
    let mut state = DemixingState::new(structure, dim, cfg.lags, T::lit(cfg.step));
    state.fb1_law = cfg.fb1_law;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        state.step = T::lit(cfg.step / ((epoch + 1) as f64).sqrt());
        state.reset_history();
        let mut acc = 0.0;
        for (b, r) in whitened.iter().enumerate() {
            state.step(r).map_err(|e| with_position(e, epoch, b))?;
            acc += state.last_update_norm().as_f64();
            if cfg.orth_period > 0 && (b + 1) % cfg.orth_period == 0 {
                state.orthonormalize_taps().map_err(|e| {
                    with_position(
                        Error::Divergence {
                            structure: structure.name(),
                            epoch,
                            block: b,
                            detail: e.to_string(),
                        },
                        epoch,
                        b,
                    )
                })?;
            }
        }
        if cfg.orth_period > 0 {
            state.orthonormalize_taps().map_err(|e| Error::Divergence {
                structure: structure.name(),
                epoch,
                block: whitened.len(),
                detail: e.to_string(),
            })?;
        }
        let row = TraceRow {
            epoch,
            mean_update: acc / whitened.len() as f64,
            unitarity_residual: state.unitarity_residual().as_f64(),
        };
        log::trace!("{} epoch {epoch}: mean update {:.3e}, residual {:.1e}", structure.name(), row.mean_update, row.unitarity_residual);
        trace.push(row);
    }
    state.step = T::zero();
    state.reset_history();
    let mut raw = Matrix::zeros(dim, whitened.len());
    for (n, r) in whitened.iter().enumerate() {
        let y = state.step(r).map_err(|e| with_position(e, cfg.epochs, n))?;
        raw.set_col(n, &y);
    }
    Ok(BlindOutput { raw, state, trace })
}

fn with_position(e: Error, epoch: usize, block: usize) -> Error {
    match e {
        Error::Divergence { structure, detail, .. } => Error::Divergence {
            structure,
            epoch,
            block,
            detail,
        },
        other => other,
    }
}

/// Writes the trace as CSV with header `epoch,mean_update,unitarity_residual`.
pub fn write_trace<W: std::io::Write>(trace: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch,mean_update,unitarity_residual")?;
    for r in trace {
        writeln!(out, "{},{:e},{:e}", r.epoch, r.mean_update, r.unitarity_residual)?;
    }
    Ok(())
}

/// Per-user estimates recovered from separator outputs.
#[derive(Debug, Clone)]
pub struct Alignment<T> {
    /// `K × M`, row `k` is `rotations[k]·raw[assignment[k]]`.
    pub aligned: Matrix<T>,
    pub assignment: Vec<usize>,
    pub rotations: Vec<Complex<T>>,
    /// Normalised correlation magnitude of each matched pair.
    pub correlation: Vec<T>,
}

/// Resolves the permutation and quarter-turn phase ambiguity against a
/// reference (ground truth, or the first `pilot` symbols of it).
///
/// Streams are matched greedily by largest normalised correlation magnitude;
/// each matched stream is rotated by the element of `{1, j, −1, −j}` that
/// best aligns it with its reference row.
pub fn align_output<T: Real>(raw: &Matrix<T>, reference: &Matrix<T>, pilot: Option<usize>) -> Result<Alignment<T>> {
    let (d, m) = (raw.rows(), raw.cols());
    let k = reference.rows();
    if d < k {
        return Err(Error::config(format!("{d} separator outputs cannot cover {k} users")));
    }
    if reference.cols() != m {
        return Err(Error::dim(
            "align_output",
            format!("raw has {m} symbols, reference has {}", reference.cols()),
        ));
    }
    let p = pilot.unwrap_or(m).min(m);
    if p == 0 {
        return Err(Error::config("alignment needs at least one reference symbol"));
    }
    // cross[u][s] = Σ_n conj(ref_u,n)·raw_s,n over the reference span
    let cross: Vec<Vec<Complex<T>>> = (0..k)
        .map(|u| (0..d).map(|s| inner(&reference.row(u)[..p], &raw.row(s)[..p])).collect())
        .collect();
    let ref_norm: Vec<T> = (0..k).map(|u| norm_sqr(&reference.row(u)[..p]).sqrt()).collect();
    let raw_norm: Vec<T> = (0..d).map(|s| norm_sqr(&raw.row(s)[..p]).sqrt()).collect();
    let score = |u: usize, s: usize| {
        let den = ref_norm[u] * raw_norm[s];
        if den > T::zero() {
            cross[u][s].norm() / den
        } else {
            T::zero()
        }
    };

    let mut assignment = vec![usize::MAX; k];
    let mut correlation = vec![T::zero(); k];
    let mut stream_used = vec![false; d];
    for _ in 0..k {
        let mut best: Option<(usize, usize, T)> = None;
        for u in (0..k).filter(|&u| assignment[u] == usize::MAX) {
            for s in (0..d).filter(|&s| !stream_used[s]) {
                let c = score(u, s);
                if best.is_none_or(|(_, _, b)| c > b) {
                    best = Some((u, s, c));
                }
            }
        }
        let (u, s, c) = best.expect("enough streams remain");
        assignment[u] = s;
        correlation[u] = c;
        stream_used[s] = true;
    }

    let one = T::one();
    let zero = T::zero();
    let quarter = [
        Complex::new(one, zero),
        Complex::new(zero, one),
        Complex::new(-one, zero),
        Complex::new(zero, -one),
    ];
    let rotations: Vec<Complex<T>> = (0..k)
        .map(|u| {
            // Re⟨ρ·raw, ref⟩ = Re(ρ·cross)
            let c = cross[u][assignment[u]];
            let mut best = quarter[0];
            let mut best_val = (best * c).re;
            for &q in &quarter[1..] {
                let v = (q * c).re;
                if v > best_val {
                    best = q;
                    best_val = v;
                }
            }
            best
        })
        .collect();
    let aligned = Matrix::from_fn(k, m, |u, n| raw[(assignment[u], n)] * rotations[u]);
    Ok(Alignment {
        aligned,
        assignment,
        rotations,
        correlation,
    })
}
