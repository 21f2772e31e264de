//! Multipath signature matrices, QPSK frames and the two-tap received model
//! `r_n = H0·b_n + H1·b_{n−1} + n_n`.

use std::io::{BufRead, Write};

use num_complex::Complex;
use num_traits::Zero;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::codes::{CodeSet, ScramblingSequence};
use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, Matrix};
use crate::rng::rng_from;
use crate::Real;

/// Time-invariant multipath channel: complex gains at integer chip delays.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile<T> {
    gains: Vec<Complex<T>>,
    delays: Vec<usize>,
}

impl<T: Real> ChannelProfile<T> {
    pub fn new(gains: Vec<Complex<T>>, delays: Vec<usize>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::config("a channel needs at least one path"));
        }
        if gains.len() != delays.len() {
            return Err(Error::config(format!(
                "{} gains but {} delays",
                gains.len(),
                delays.len()
            )));
        }
        if delays.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("path delays must be strictly increasing"));
        }
        if gains.iter().all(|g| g.is_zero()) {
            return Err(Error::config("all path gains are zero"));
        }
        if gains.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
            return Err(Error::config("path gains must be finite"));
        }
        Ok(ChannelProfile { gains, delays })
    }

    /// Single path with unit gain and no delay.
    pub fn identity() -> Self {
        ChannelProfile {
            gains: vec![Complex::new(T::one(), T::zero())],
            delays: vec![0],
        }
    }

    /// The five-path downlink channel used throughout the experiments
    /// (delays 0..4 chips).
    pub fn five_path_channel() -> Self {
        let g = [
            (0.3684, 0.5364),
            (0.1982, 0.0187),
            (0.0237, 0.5683),
            (0.1112, 0.0835),
            (0.2203, 0.2756),
        ];
        ChannelProfile {
            gains: g.iter().map(|&(re, im)| Complex::new(T::lit(re), T::lit(im))).collect(),
            delays: (0..5).collect(),
        }
    }

    /// Parses `"re,im@delay;re,im@delay;…"`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut gains = Vec::new();
        let mut delays = Vec::new();
        for (i, tap) in text.split(';').map(str::trim).filter(|t| !t.is_empty()).enumerate() {
            let bad = || Error::config(format!("channel tap {i} ('{tap}') is not of the form re,im@delay"));
            let (gain, delay) = tap.split_once('@').ok_or_else(bad)?;
            let (re, im) = gain.split_once(',').ok_or_else(bad)?;
            let re: f64 = re.trim().parse().map_err(|_| bad())?;
            let im: f64 = im.trim().parse().map_err(|_| bad())?;
            let d: usize = delay.trim().parse().map_err(|_| bad())?;
            gains.push(Complex::new(T::lit(re), T::lit(im)));
            delays.push(d);
        }
        Self::new(gains, delays)
    }

    pub fn gains(&self) -> &[Complex<T>] {
        &self.gains
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn paths(&self) -> usize {
        self.gains.len()
    }

    pub fn max_delay(&self) -> usize {
        *self.delays.last().expect("non-empty channel")
    }

    /// `Σ|α_l|²`.
    pub fn energy(&self) -> T {
        self.gains.iter().map(|g| g.norm_sqr()).sum()
    }

    /// Renders in the `parse` format.
    pub fn to_tap_string(&self) -> String {
        self.gains
            .iter()
            .zip(&self.delays)
            .map(|(g, d)| format!("{},{}@{}", g.re, g.im, d))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Current-symbol (`h0`) and previous-symbol (`h1`) signatures over a
/// processing window of `g1 = G + max_delay` chips.
///
/// Column `k` of `h0` is user `k`'s full multipath waveform starting at the
/// window origin. Column `k` of `h1` holds the part of that waveform that
/// spills past `G` chips, folded back to the top of the next window.
#[derive(Debug, Clone)]
pub struct SignaturePair<T> {
    pub h0: Matrix<T>,
    pub h1: Matrix<T>,
    pub g1: usize,
    pub gain: usize,
    /// Received energy per unit-power symbol, `Σ|α_l|²`.
    pub symbol_energy: T,
}

impl<T: Real> SignaturePair<T> {
    pub fn users(&self) -> usize {
        self.h0.cols()
    }

    /// `[h0 h1]`.
    pub fn stacked(&self) -> Matrix<T> {
        self.h0.hstack(&self.h1)
    }

    /// Noise-free covariance `h0·h0ᴴ + h1·h1ᴴ`.
    pub fn signal_covariance(&self) -> Matrix<T> {
        let s = self.stacked();
        &s * &s.adjoint()
    }

    /// Numerical rank of `[h0 h1]`.
    pub fn rank(&self) -> Result<usize> {
        let s = self.stacked();
        let gram = &s.adjoint() * &s;
        let eig = hermitian_eig(&gram)?;
        let top = eig.values.first().copied().unwrap_or_else(T::zero);
        let tol = T::from_usize(gram.rows()).unwrap() * T::epsilon() * top * T::lit(1e3);
        Ok(eig.values.iter().filter(|&&v| v > tol).count())
    }
}

/// Builds `h0`, `h1` by superposing each path's delayed, scaled copy of the
/// (optionally scrambled) code, normalised by `1/√G`.
pub fn build_signatures<T: Real>(
    codes: &CodeSet,
    chan: &ChannelProfile<T>,
    scramble: Option<&ScramblingSequence<T>>,
) -> Result<SignaturePair<T>> {
    let g = codes.gain();
    if let Some(sc) = scramble {
        if sc.gain() != g {
            return Err(Error::config(format!(
                "scrambling length {} does not match spreading gain {g}",
                sc.gain()
            )));
        }
    }
    let dmax = chan.max_delay();
    if dmax >= g {
        return Err(Error::config(format!(
            "maximum path delay {dmax} must be below the spreading gain {g}"
        )));
    }
    let g1 = g + dmax;
    let k = codes.users();
    let norm = T::one() / T::from_usize(g).unwrap().sqrt();
    let mut h0 = Matrix::zeros(g1, k);
    let mut h1 = Matrix::zeros(g1, k);
    for user in 0..k {
        let chips = codes.effective_code(user, scramble);
        let mut wave = vec![Complex::<T>::zero(); g1];
        for (alpha, &d) in chan.gains().iter().zip(chan.delays()) {
            for (c, &chip) in chips.iter().enumerate() {
                wave[c + d] += *alpha * chip * norm;
            }
        }
        for (i, &w) in wave.iter().enumerate() {
            h0[(i, user)] = w;
            if i >= g {
                h1[(i - g, user)] = w;
            }
        }
    }
    let sig = SignaturePair {
        h0,
        h1,
        g1,
        gain: g,
        symbol_energy: chan.energy(),
    };
    if log::log_enabled!(log::Level::Debug) {
        let full = k + k.min(dmax);
        match sig.rank() {
            Ok(r) if r < full => log::debug!("[h0 h1] has rank {r}, below the structural {full}"),
            Err(e) => log::debug!("rank check skipped: {e}"),
            _ => {}
        }
    }
    Ok(sig)
}

/// Gray-mapped QPSK: bit 0 → `+1/√2`, bit 1 → `−1/√2` on each axis.
pub fn qpsk_symbol<T: Real>(b_re: u8, b_im: u8) -> Complex<T> {
    let a = T::FRAC_1_SQRT_2();
    Complex::new(if b_re == 0 { a } else { -a }, if b_im == 0 { a } else { -a })
}

/// Inverse of [`qpsk_symbol`] for any complex point; exact zeros map to 0.
pub fn qpsk_bits<T: Real>(z: Complex<T>) -> (u8, u8) {
    (u8::from(z.re < T::zero()), u8::from(z.im < T::zero()))
}

/// `K × M` unit-power QPSK symbols and the bits that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame<T> {
    /// `bits[k]` has `2M` entries: `(re, im)` bit pairs per symbol.
    pub bits: Vec<Vec<u8>>,
    pub values: Matrix<T>,
}

impl<T: Real> SymbolFrame<T> {
    pub fn users(&self) -> usize {
        self.values.rows()
    }

    pub fn symbols(&self) -> usize {
        self.values.cols()
    }

    /// Symbol vector `b_n` of all users.
    pub fn column(&self, n: usize) -> Vec<Complex<T>> {
        self.values.col(n)
    }
}

pub fn gen_frame<T: Real>(users: usize, symbols: usize, seed: u64) -> Result<SymbolFrame<T>> {
    if users == 0 || symbols == 0 {
        return Err(Error::config("a frame needs at least one user and one symbol"));
    }
    let mut rng = rng_from(seed);
    let bits: Vec<Vec<u8>> = (0..users)
        .map(|_| (0..2 * symbols).map(|_| u8::from(rng.random::<bool>())).collect())
        .collect();
    let values = Matrix::from_fn(users, symbols, |k, m| qpsk_symbol(bits[k][2 * m], bits[k][2 * m + 1]));
    Ok(SymbolFrame { bits, values })
}

/// Sequence of received window vectors `r_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame<T> {
    pub window: usize,
    pub blocks: Vec<Vec<Complex<T>>>,
    /// Noise variance per complex sample, `E|n|²`.
    pub noise_var: T,
}

impl<T: Real> ReceivedFrame<T> {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Writes one block per line as space-separated `re,im` pairs.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for block in &self.blocks {
            let line: Vec<String> = block.iter().map(|z| format!("{:e},{:e}", z.re, z.im)).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Reads the [`write_dump`](Self::write_dump) format back.
    pub fn read_dump<R: BufRead>(input: R, noise_var: T) -> Result<Self> {
        let mut blocks = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let block = line
                .split_whitespace()
                .map(|pair| {
                    let (re, im) = pair.split_once(',')?;
                    Some(Complex::new(T::lit(re.parse().ok()?), T::lit(im.parse().ok()?)))
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::config(format!("line {}: malformed sample", lineno + 1)))?;
            blocks.push(block);
        }
        let window = blocks.first().map_or(0, Vec::len);
        if let Some(i) = blocks.iter().position(|b| b.len() != window) {
            return Err(Error::config(format!("line {}: block length differs from the first", i + 1)));
        }
        Ok(ReceivedFrame {
            window,
            blocks,
            noise_var,
        })
    }
}

/// Noise variance per complex sample for a per-symbol SNR in dB.
/// Infinite SNR gives zero.
pub fn noise_variance<T: Real>(symbol_energy: T, snr_db: f64) -> T {
    if snr_db == f64::INFINITY {
        T::zero()
    } else {
        symbol_energy / T::lit(10f64.powf(snr_db / 10.0))
    }
}

/// Noise-free blocks `h0·b_n + h1·b_{n−1}` with `b_{−1} = 0`.
pub fn clean_blocks<T: Real>(frame: &SymbolFrame<T>, sig: &SignaturePair<T>) -> Result<Vec<Vec<Complex<T>>>> {
    if frame.users() != sig.users() {
        return Err(Error::dim(
            "transmit",
            format!("frame has {} users, signatures have {}", frame.users(), sig.users()),
        ));
    }
    let mut prev = vec![Complex::zero(); frame.users()];
    let mut out = Vec::with_capacity(frame.symbols());
    for n in 0..frame.symbols() {
        let b = frame.column(n);
        let cur = sig.h0.mul_vec(&b);
        let isi = sig.h1.mul_vec(&prev);
        out.push(cur.iter().zip(&isi).map(|(a, c)| a + c).collect());
        prev = b;
    }
    Ok(out)
}

/// Unit-variance circular complex Gaussian samples, `blocks × window`.
pub fn unit_noise<T: Real>(window: usize, blocks: usize, seed: u64) -> Vec<Vec<Complex<T>>> {
    let mut rng = rng_from(seed);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..blocks)
        .map(|_| {
            (0..window)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex::new(T::lit(re * s), T::lit(im * s))
                })
                .collect()
        })
        .collect()
}

/// Adds `√q·noise` to clean blocks.
pub fn add_noise<T: Real>(
    clean: &[Vec<Complex<T>>],
    noise: &[Vec<Complex<T>>],
    noise_var: T,
) -> Vec<Vec<Complex<T>>> {
    let s = noise_var.sqrt();
    clean
        .iter()
        .zip(noise)
        .map(|(c, n)| c.iter().zip(n).map(|(a, b)| a + b * s).collect())
        .collect()
}

/// Passes a frame through the two-tap model with AWGN at `snr_db`
/// (`f64::INFINITY` for noise-free).
pub fn transmit<T: Real>(
    frame: &SymbolFrame<T>,
    sig: &SignaturePair<T>,
    snr_db: f64,
    seed: u64,
) -> Result<ReceivedFrame<T>> {
    let clean = clean_blocks(frame, sig)?;
    let q = noise_variance(sig.symbol_energy, snr_db);
    let blocks = if q.is_zero() {
        clean
    } else {
        add_noise(&clean, &unit_noise(sig.g1, frame.symbols(), seed), q)
    };
    Ok(ReceivedFrame {
        window: sig.g1,
        blocks,
        noise_var: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{gen_gold, gen_ovsf, gen_scrambling};
    use crate::numerics::inner;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelProfile::<f64>::new(vec![c(1.0, 0.0)], vec![0]).is_ok());
        assert!(ChannelProfile::<f64>::new(vec![c(1.0, 0.0), c(1.0, 0.0)], vec![1, 1]).is_err());
        assert!(ChannelProfile::<f64>::new(vec![c(0.0, 0.0)], vec![0]).is_err());
        assert!(ChannelProfile::<f64>::new(vec![], vec![]).is_err());
        let codes = gen_ovsf(8, 2).unwrap();
        let far = ChannelProfile::<f64>::new(vec![c(1.0, 0.0)], vec![8]).unwrap();
        assert!(matches!(build_signatures(&codes, &far, None), Err(Error::Config(_))));
    }

    #[test]
    fn channel_parse_round_trip() {
        let ch = ChannelProfile::<f64>::parse("0.3684,0.5364@0;0.1982,0.0187@1").unwrap();
        assert_eq!(ch.paths(), 2);
        assert_eq!(ch.gains()[0], c(0.3684, 0.5364));
        assert_eq!(ch.delays(), &[0, 1]);
        let again = ChannelProfile::<f64>::parse(&ch.to_tap_string()).unwrap();
        assert_eq!(again, ch);
        assert!(ChannelProfile::<f64>::parse("1,0").is_err());
        assert!(ChannelProfile::<f64>::parse("1,x@0").is_err());
    }

    #[test]
    fn single_unit_path_signatures() {
        let codes = gen_ovsf(8, 3).unwrap();
        let sig = build_signatures(&codes, &ChannelProfile::<f64>::identity(), None).unwrap();
        assert_eq!(sig.g1, 8);
        for k in 0..3 {
            for i in 0..8 {
                let want = f64::from(codes.code(k)[i]) / 8f64.sqrt();
                assert!((sig.h0[(i, k)] - c(want, 0.0)).norm() < 1e-15);
            }
        }
        assert_eq!(sig.h1.frobenius_norm(), 0.0);
    }

    /// Direct convolution of one code with the channel, length G + max delay.
    fn convolve(code: &[i8], ch: &ChannelProfile<f64>) -> Vec<Complex<f64>> {
        let g = code.len();
        let mut out = vec![Complex::zero(); g + ch.max_delay()];
        for t in 0..out.len() {
            for (a, &d) in ch.gains().iter().zip(ch.delays()) {
                if t >= d && t - d < g {
                    out[t] += a * f64::from(code[t - d]) / (g as f64).sqrt();
                }
            }
        }
        out
    }

    #[test]
    fn two_path_tail_has_one_sample() {
        let codes = gen_gold(5, 4, 2).unwrap();
        let ch = ChannelProfile::new(vec![c(0.8, 0.1), c(0.3, -0.4)], vec![0, 1]).unwrap();
        let sig = build_signatures(&codes, &ch, None).unwrap();
        for k in 0..4 {
            let conv = convolve(codes.code(k), &ch);
            let nonzero = (0..sig.g1).filter(|&i| !sig.h1[(i, k)].is_zero()).count();
            assert_eq!(nonzero, 1);
            assert!((sig.h1[(0, k)] - conv[31]).norm() < 1e-15);
            for i in 0..sig.g1 {
                assert!((sig.h0[(i, k)] - conv[i]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn five_path_channel_energy() {
        let ch = ChannelProfile::<f64>::five_path_channel();
        let e = ch.energy();
        let codes = gen_gold(6, 30, 4).unwrap();
        let sig = build_signatures(&codes, &ch, None).unwrap();
        assert_eq!(sig.g1, 67);
        let mut total = 0.0;
        for k in 0..30 {
            let conv = convolve(codes.code(k), &ch);
            let h0 = norm_sq_col(&sig.h0, k);
            let h1 = norm_sq_col(&sig.h1, k);
            // exact against the convolution oracle
            let tail: f64 = conv[63..].iter().map(|z| z.norm_sqr()).sum();
            let full: f64 = conv.iter().map(|z| z.norm_sqr()).sum();
            assert!((h0 - full).abs() < 1e-12);
            assert!((h1 - tail).abs() < 1e-12);
            total += h0 + h1;
        }
        // individual codes deviate through their aperiodic autocorrelation,
        // the user average does not
        let ratio = total / 30.0 / e;
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    fn norm_sq_col(m: &Matrix<f64>, k: usize) -> f64 {
        m.col(k).iter().map(|z| z.norm_sqr()).sum()
    }

    #[test]
    fn frame_is_unit_modulus_and_gray_consistent() {
        let f = gen_frame::<f64>(3, 50, 8).unwrap();
        for k in 0..3 {
            for m in 0..50 {
                let z = f.values[(k, m)];
                assert!((z.norm() - 1.0).abs() < 1e-15);
                assert_eq!(qpsk_bits(z), (f.bits[k][2 * m], f.bits[k][2 * m + 1]));
            }
        }
        for b0 in 0..2 {
            for b1 in 0..2 {
                assert_eq!(qpsk_bits(qpsk_symbol::<f64>(b0, b1)), (b0, b1));
            }
        }
    }

    #[test]
    fn frame_determinism_and_independence() {
        let a = gen_frame::<f64>(1, 4, 99).unwrap();
        assert_eq!(a, gen_frame::<f64>(1, 4, 99).unwrap());
        let f = gen_frame::<f64>(2, 10_000, 5).unwrap();
        let rho = inner(f.values.row(0), f.values.row(1)) / 10_000.0;
        assert!(rho.norm() < 0.05);
    }

    #[test]
    fn noise_free_first_block_is_h0_b1() {
        let codes = gen_gold(5, 6, 1).unwrap();
        let sig = build_signatures(&codes, &ChannelProfile::<f64>::five_path_channel(), None).unwrap();
        let f = gen_frame(6, 5, 2).unwrap();
        let r = transmit(&f, &sig, f64::INFINITY, 3).unwrap();
        assert_eq!(r.noise_var, 0.0);
        assert_eq!(r.blocks[0], sig.h0.mul_vec(&f.column(0)));
        for n in 1..5 {
            let want: Vec<_> = sig
                .h0
                .mul_vec(&f.column(n))
                .iter()
                .zip(sig.h1.mul_vec(&f.column(n - 1)))
                .map(|(a, b)| a + b)
                .collect();
            for (x, y) in r.blocks[n].iter().zip(&want) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_variance_at_zero_db() {
        let codes = gen_ovsf(16, 1).unwrap();
        let sig = build_signatures(&codes, &ChannelProfile::<f64>::identity(), None).unwrap();
        let f = gen_frame(1, 100_000 / 16, 6).unwrap();
        let clean = clean_blocks(&f, &sig).unwrap();
        let r = transmit(&f, &sig, 0.0, 7).unwrap();
        assert!((r.noise_var - 1.0).abs() < 1e-15);
        let mut acc = 0.0;
        let mut n = 0usize;
        for (rb, cb) in r.blocks.iter().zip(&clean) {
            for (x, y) in rb.iter().zip(cb) {
                acc += (x - y).norm_sqr();
                n += 1;
            }
        }
        assert!(n >= 99_000);
        assert!((acc / n as f64 - 1.0).abs() < 0.03);
    }

    #[test]
    fn single_user_matched_filter_is_exact() {
        let codes = gen_ovsf(32, 1).unwrap();
        let sig = build_signatures(&codes, &ChannelProfile::<f64>::identity(), None).unwrap();
        let f = gen_frame(1, 20, 1).unwrap();
        let r = transmit(&f, &sig, f64::INFINITY, 0).unwrap();
        let s: Vec<Complex<f64>> = codes.effective_code(0, None);
        for n in 0..20 {
            let y = inner(&s, &r.blocks[n][..32]) / 32f64.sqrt();
            assert!((y - f.values[(0, n)]).norm() < 1e-14);
        }
    }

    #[test]
    fn received_energy_matches_paths() {
        let ch = ChannelProfile::<f64>::five_path_channel();
        let codes = gen_gold(6, 10, 3).unwrap();
        let sig = build_signatures(&codes, &ch, None).unwrap();
        let f = gen_frame(10, 2000, 4).unwrap();
        let r = transmit(&f, &sig, f64::INFINITY, 0).unwrap();
        let mean: f64 = r.blocks.iter().map(|b| b.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>() / 2000.0;
        let want = 10.0 * ch.energy();
        assert!((mean / want - 1.0).abs() < 0.05, "ratio {}", mean / want);
    }

    #[test]
    fn unit_scrambling_matches_unscrambled() {
        let codes = gen_gold(5, 5, 1).unwrap();
        let ch = ChannelProfile::<f64>::five_path_channel();
        let a = build_signatures(&codes, &ch, None).unwrap();
        let b = build_signatures(&codes, &ch, Some(&ScramblingSequence::identity(31))).unwrap();
        assert_eq!(a.h0, b.h0);
        assert_eq!(a.h1, b.h1);
        let sc = gen_scrambling(31, 2);
        let s = build_signatures(&codes, &ch, Some(&sc)).unwrap();
        assert!((s.h0.frobenius_norm() - a.h0.frobenius_norm()).abs() < 0.5);
        assert!(build_signatures(&codes, &ch, Some(&gen_scrambling(32, 2))).is_err());
    }

    #[test]
    fn five_path_channel_rank_is_structural() {
        let codes = gen_gold(5, 10, 1).unwrap();
        let sig = build_signatures(&codes, &ChannelProfile::<f64>::five_path_channel(), None).unwrap();
        assert_eq!(sig.rank().unwrap(), 14);
    }

    #[test]
    fn dump_round_trip() {
        let codes = gen_gold(5, 3, 1).unwrap();
        let sig = build_signatures(&codes, &ChannelProfile::<f64>::five_path_channel(), None).unwrap();
        let f = gen_frame(3, 4, 2).unwrap();
        let r = transmit(&f, &sig, 10.0, 3).unwrap();
        let mut buf = Vec::new();
        r.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap().split(' ').count(), sig.g1);
        let back = ReceivedFrame::read_dump(&buf[..], r.noise_var).unwrap();
        assert_eq!(back, r);
        assert!(ReceivedFrame::<f64>::read_dump(&b"1,2 3"[..], 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn noise_free_model_is_linear(seed in any::<u64>(), a in -2.0f64..2.0) {
            let codes = gen_gold(5, 4, seed).unwrap();
            let sig = build_signatures(&codes, &ChannelProfile::<f64>::five_path_channel(), None).unwrap();
            let f1 = gen_frame::<f64>(4, 6, seed).unwrap();
            let f2 = gen_frame::<f64>(4, 6, seed ^ 1).unwrap();
            let mix = SymbolFrame {
                bits: f1.bits.clone(),
                values: &f1.values.scale(a) + &f2.values,
            };
            let r1 = clean_blocks(&f1, &sig).unwrap();
            let r2 = clean_blocks(&f2, &sig).unwrap();
            let rm = clean_blocks(&mix, &sig).unwrap();
            for n in 0..6 {
                for i in 0..sig.g1 {
                    prop_assert!((rm[n][i] - (r1[n][i] * a + r2[n][i])).norm() < 1e-12);
                }
            }
        }
    }
}
