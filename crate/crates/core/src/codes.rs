//! Channelisation codes (Gold, OVSF) and the WCDMA scrambling sequence.
//!
//! Codes are stored as exact bipolar chips (`+1`/`-1` as `i8`) so their
//! correlation properties can be checked in integer arithmetic. Power
//! normalisation by `1/√G` happens in the signal model.

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::rng_from;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeFamily {
    Gold,
    Ovsf,
}

impl CodeFamily {
    pub fn name(self) -> &'static str {
        match self {
            CodeFamily::Gold => "gold",
            CodeFamily::Ovsf => "ovsf",
        }
    }
}

impl std::str::FromStr for CodeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gold" => Ok(CodeFamily::Gold),
            "ovsf" | "walsh" | "hadamard" => Ok(CodeFamily::Ovsf),
            other => Err(Error::config(format!("unknown code family '{other}'"))),
        }
    }
}

/// Per-user bipolar spreading sequences, one row per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSet {
    family: CodeFamily,
    gain: usize,
    chips: Vec<Vec<i8>>,
}

impl CodeSet {
    /// Builds a code set from explicit bipolar rows.
    pub fn from_chips(family: CodeFamily, chips: Vec<Vec<i8>>) -> Result<Self> {
        let gain = chips.first().map_or(0, Vec::len);
        if chips.is_empty() || gain == 0 {
            return Err(Error::config("a code set needs at least one non-empty code"));
        }
        if chips.len() > gain {
            return Err(Error::config(format!(
                "{} users exceed the spreading gain {gain}",
                chips.len()
            )));
        }
        for (k, row) in chips.iter().enumerate() {
            if row.len() != gain {
                return Err(Error::config(format!("code {k} has length {}, expected {gain}", row.len())));
            }
            if row.iter().any(|&c| c != 1 && c != -1) {
                return Err(Error::config(format!("code {k} has a chip outside {{+1, -1}}")));
            }
        }
        Ok(CodeSet { family, gain, chips })
    }

    pub fn family(&self) -> CodeFamily {
        self.family
    }

    /// Chips per symbol, `G`.
    pub fn gain(&self) -> usize {
        self.gain
    }

    pub fn users(&self) -> usize {
        self.chips.len()
    }

    pub fn code(&self, user: usize) -> &[i8] {
        &self.chips[user]
    }

    pub fn chips(&self) -> &[Vec<i8>] {
        &self.chips
    }

    /// Integer inner product of two codes at zero lag.
    pub fn inner(&self, a: usize, b: usize) -> i64 {
        self.chips[a]
            .iter()
            .zip(&self.chips[b])
            .map(|(&x, &y)| i64::from(x) * i64::from(y))
            .sum()
    }

    /// The code of `user` as chip-rate complex samples, optionally scrambled,
    /// without power normalisation.
    pub fn effective_code<T: Real>(
        &self,
        user: usize,
        scramble: Option<&ScramblingSequence<T>>,
    ) -> Vec<Complex<T>> {
        let code = &self.chips[user];
        match scramble {
            Some(sc) => code
                .iter()
                .zip(&sc.values)
                .map(|(&c, &s)| s * T::lit(f64::from(c)))
                .collect(),
            None => code
                .iter()
                .map(|&c| Complex::new(T::lit(f64::from(c)), T::zero()))
                .collect(),
        }
    }
}

/// Feedback taps (exponents below the leading one) of the preferred pairs.
fn preferred_pair(degree: u32) -> Option<(&'static [u32], &'static [u32])> {
    match degree {
        // x^5 + x^2 + 1, x^5 + x^4 + x^3 + x^2 + 1
        5 => Some((&[2, 0], &[4, 3, 2, 0])),
        // x^6 + x + 1, x^6 + x^5 + x^2 + x + 1
        6 => Some((&[1, 0], &[5, 2, 1, 0])),
        _ => None,
    }
}

/// Binary maximal-length sequence of the polynomial `x^degree + Σ x^t`.
///
/// Uses the recurrence `a[n+degree] = Σ_t a[n+t] (mod 2)` started from
/// `0…01`.
pub fn m_sequence(degree: u32, taps: &[u32]) -> Vec<u8> {
    let n = (1usize << degree) - 1;
    let m = degree as usize;
    let mut a = vec![0u8; n + m];
    a[m - 1] = 1;
    for i in 0..n {
        a[i + m] = taps.iter().fold(0, |acc, &t| acc ^ a[i + t as usize]);
    }
    a.truncate(n);
    a
}

/// Every member of the Gold family of the given degree in bipolar form:
/// the two m-sequences followed by `u ⊕ Tᵏv` for `k = 0..2^degree−1`.
pub fn gold_family(degree: u32) -> Result<Vec<Vec<i8>>> {
    let (pa, pb) = preferred_pair(degree).ok_or_else(|| {
        Error::config(format!("Gold codes are supported for degree 5 or 6, got {degree}"))
    })?;
    let u = m_sequence(degree, pa);
    let v = m_sequence(degree, pb);
    let n = u.len();
    let bipolar = |bits: &[u8]| bits.iter().map(|&b| if b == 0 { 1 } else { -1 }).collect::<Vec<i8>>();
    let mut family = vec![bipolar(&u), bipolar(&v)];
    for k in 0..n {
        let x: Vec<u8> = (0..n).map(|i| u[i] ^ v[(i + k) % n]).collect();
        family.push(bipolar(&x));
    }
    Ok(family)
}

/// `K` Gold codes of length `2^degree − 1`, drawn from the family by a
/// seeded shuffle. Balanced members (chip sum `±1`) are handed out first.
pub fn gen_gold(degree: u32, users: usize, seed: u64) -> Result<CodeSet> {
    let family = gold_family(degree)?;
    let gain = family[0].len();
    if users == 0 {
        return Err(Error::config("at least one user is required"));
    }
    if users > family.len() {
        return Err(Error::config(format!(
            "{users} users exceed the Gold family size {}",
            family.len()
        )));
    }
    if users > gain {
        return Err(Error::config(format!("{users} users exceed the spreading gain {gain}")));
    }
    let (mut balanced, mut rest): (Vec<usize>, Vec<usize>) = (0..family.len())
        .partition(|&i| family[i].iter().map(|&c| i32::from(c)).sum::<i32>().abs() == 1);
    let mut rng = rng_from(seed);
    balanced.shuffle(&mut rng);
    rest.shuffle(&mut rng);
    let chips = balanced
        .into_iter()
        .chain(rest)
        .take(users)
        .map(|i| family[i].clone())
        .collect();
    CodeSet::from_chips(CodeFamily::Gold, chips)
}

/// First `K` rows of the Sylvester Walsh-Hadamard matrix of order `G`.
pub fn gen_ovsf(gain: usize, users: usize) -> Result<CodeSet> {
    if gain == 0 || !gain.is_power_of_two() {
        return Err(Error::config(format!("OVSF spreading gain must be a power of two, got {gain}")));
    }
    if users == 0 || users > gain {
        return Err(Error::config(format!("OVSF with gain {gain} supports 1..={gain} users, got {users}")));
    }
    let mut h: Vec<Vec<i8>> = vec![vec![1]];
    while h.len() < gain {
        let top: Vec<Vec<i8>> = h.iter().map(|r| r.iter().chain(r.iter()).copied().collect()).collect();
        let bottom: Vec<Vec<i8>> = h
            .iter()
            .map(|r| r.iter().copied().chain(r.iter().map(|&c| -c)).collect())
            .collect();
        h = top.into_iter().chain(bottom).collect();
    }
    h.truncate(users);
    CodeSet::from_chips(CodeFamily::Ovsf, h)
}

/// Complex cell scrambling sequence with entries in `{(±1 ± j)/√2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScramblingSequence<T> {
    pub values: Vec<Complex<T>>,
}

impl<T: Real> ScramblingSequence<T> {
    pub fn gain(&self) -> usize {
        self.values.len()
    }

    /// The diagonal scrambling matrix `C`.
    pub fn matrix(&self) -> Matrix<T> {
        let n = self.values.len();
        Matrix::from_fn(n, n, |i, j| if i == j { self.values[i] } else { Complex::new(T::zero(), T::zero()) })
    }

    /// All-`(1+0j)` sequence; scrambling with it is the identity.
    pub fn identity(gain: usize) -> Self {
        ScramblingSequence {
            values: vec![Complex::new(T::one(), T::zero()); gain],
        }
    }
}

pub fn gen_scrambling<T: Real>(gain: usize, seed: u64) -> ScramblingSequence<T> {
    let mut rng = rng_from(seed);
    let a = T::FRAC_1_SQRT_2();
    let values = (0..gain)
        .map(|_| {
            let re = if rng.random::<bool>() { a } else { -a };
            let im = if rng.random::<bool>() { a } else { -a };
            Complex::new(re, im)
        })
        .collect();
    ScramblingSequence { values }
}

/// Block-diagonal `S_i = Diag(s_i, …, s_i)` for a frame of `symbols`
/// symbols: `(G·symbols) × symbols`, raw bipolar chips (so `S_iᴴS_i = G·I`).
pub fn signature_block<T: Real>(
    codes: &CodeSet,
    user: usize,
    symbols: usize,
    scramble: Option<&ScramblingSequence<T>>,
) -> Result<Matrix<T>> {
    if user >= codes.users() {
        return Err(Error::config(format!(
            "user index {user} out of range for {} users",
            codes.users()
        )));
    }
    let g = codes.gain();
    let s = codes.effective_code(user, scramble);
    let mut m = Matrix::zeros(g * symbols, symbols);
    for col in 0..symbols {
        for (c, &v) in s.iter().enumerate() {
            m[(col * g + c, col)] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Periodic correlation `Σ_i a_i b_{i+τ}`, exhaustive over τ.
    fn periodic_correlations(a: &[i8], b: &[i8]) -> Vec<i32> {
        let n = a.len();
        (0..n)
            .map(|tau| (0..n).map(|i| i32::from(a[i]) * i32::from(b[(i + tau) % n])).sum())
            .collect()
    }

    fn t_of(degree: u32) -> i32 {
        1 + (1 << ((degree + 2) / 2))
    }

    #[test]
    fn m_sequences_are_maximal_and_balanced() {
        for degree in [5u32, 6] {
            let (pa, pb) = preferred_pair(degree).unwrap();
            for taps in [pa, pb] {
                let s = m_sequence(degree, taps);
                let n = (1usize << degree) - 1;
                assert_eq!(s.len(), n);
                assert_eq!(s.iter().filter(|&&b| b == 1).count(), 1 << (degree - 1));
                // two-valued autocorrelation
                let bip: Vec<i8> = s.iter().map(|&b| if b == 0 { 1 } else { -1 }).collect();
                let ac = periodic_correlations(&bip, &bip);
                assert_eq!(ac[0], n as i32);
                assert!(ac[1..].iter().all(|&v| v == -1));
            }
        }
    }

    #[test]
    fn gold_length_63() {
        let c = gen_gold(6, 10, 1).unwrap();
        assert_eq!(c.gain(), 63);
        assert!(c.chips().iter().flatten().all(|&x| x == 1 || x == -1));
    }

    #[test]
    fn gold_family_is_three_valued() {
        for degree in [5u32, 6] {
            let t = t_of(degree);
            let allowed = [-1, -t, t - 2];
            let fam = gold_family(degree).unwrap();
            let n = fam[0].len() as i32;
            for i in 0..fam.len() {
                for j in i..fam.len() {
                    let corr = periodic_correlations(&fam[i], &fam[j]);
                    for (tau, &v) in corr.iter().enumerate() {
                        if i == j && tau == 0 {
                            assert_eq!(v, n);
                        } else {
                            assert!(allowed.contains(&v), "degree {degree} pair ({i},{j}) shift {tau}: {v}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gold_selection_prefers_balanced_members() {
        // 47 balanced shifts + 2 m-sequences at degree 6
        let c = gen_gold(6, 49, 3).unwrap();
        for code in c.chips() {
            let s: i32 = code.iter().map(|&x| i32::from(x)).sum();
            assert_eq!(s.abs(), 1);
        }
        let c = gen_gold(6, 50, 3).unwrap();
        let unbalanced = c
            .chips()
            .iter()
            .filter(|code| code.iter().map(|&x| i32::from(x)).sum::<i32>().abs() != 1)
            .count();
        assert_eq!(unbalanced, 1);
    }

    #[test]
    fn gold_members_are_distinct_and_seeded() {
        let a = gen_gold(5, 20, 9).unwrap();
        let b = gen_gold(5, 20, 9).unwrap();
        assert_eq!(a, b);
        let mut rows = a.chips().to_vec();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 20);
        assert_ne!(gen_gold(5, 20, 10).unwrap(), a);
    }

    #[test]
    fn gold_rejects_bad_parameters() {
        assert!(matches!(gen_gold(7, 3, 0), Err(Error::Config(_))));
        assert!(matches!(gen_gold(5, 34, 0), Err(Error::Config(_))));
        assert!(matches!(gen_gold(5, 32, 0), Err(Error::Config(_))));
    }

    #[test]
    fn ovsf_base_case() {
        let c = gen_ovsf(2, 2).unwrap();
        assert_eq!(c.code(0), &[1, 1]);
        assert_eq!(c.code(1), &[1, -1]);
    }

    #[test]
    fn ovsf_gram_is_scaled_identity() {
        let c = gen_ovsf(64, 64).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                assert_eq!(c.inner(i, j), if i == j { 64 } else { 0 });
            }
        }
        let c = gen_ovsf(64, 50).unwrap();
        assert_eq!(c.users(), 50);
        assert!((0..50).all(|k| c.inner(k, k) == 64));
    }

    #[test]
    fn ovsf_rejects_non_power_of_two() {
        assert!(matches!(gen_ovsf(63, 4), Err(Error::Config(_))));
        assert!(matches!(gen_ovsf(32, 33), Err(Error::Config(_))));
    }

    #[test]
    fn scrambling_is_unit_modulus_and_deterministic() {
        let s = gen_scrambling::<f64>(64, 5);
        assert!(s.values.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert_eq!(s, gen_scrambling::<f64>(64, 5));
        let c = s.matrix();
        let cc = &c * &c.adjoint();
        assert!((&cc - &Matrix::identity(64)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn scrambling_mean_vanishes() {
        let s = gen_scrambling::<f64>(10_000, 17);
        let mean: Complex<f64> = s.values.iter().sum::<Complex<f64>>() / 10_000.0;
        assert!(mean.norm() < 0.05);
    }

    #[test]
    fn signature_block_structure() {
        let c = gen_ovsf(8, 3).unwrap();
        let s1 = signature_block::<f64>(&c, 2, 1, None).unwrap();
        assert_eq!((s1.rows(), s1.cols()), (8, 1));
        assert_eq!(s1[(1, 0)].re, f64::from(c.code(2)[1]));
        let s2 = signature_block::<f64>(&c, 2, 2, None).unwrap();
        assert_eq!((s2.rows(), s2.cols()), (16, 2));
        assert_eq!(s2[(3, 1)].re, 0.0);
        assert_eq!(s2[(11, 1)].re, f64::from(c.code(2)[3]));
        assert!(signature_block::<f64>(&c, 3, 1, None).is_err());
    }

    proptest! {
        #[test]
        fn signature_gram_is_gain_times_identity(user in 0usize..10, symbols in 1usize..6, seed in any::<u64>()) {
            let c = gen_gold(5, 10, seed).unwrap();
            let sc = gen_scrambling::<f64>(31, seed);
            for scramble in [None, Some(&sc)] {
                let s = signature_block(&c, user, symbols, scramble).unwrap();
                let g = &s.adjoint() * &s;
                let expected = Matrix::<f64>::identity(symbols).scale(31.0);
                prop_assert!((&g - &expected).frobenius_norm() < 1e-12);
            }
        }
    }
}
