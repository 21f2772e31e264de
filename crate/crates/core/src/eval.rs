//! Monte Carlo BER harness.
//!
//! Every trial draws its own frame and noise from `seed ^ trial`, and every
//! SNR point of a trial reuses the same symbols and unit noise (common random
//! numbers), so detectors and SNRs are compared on paired realizations.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::codes::{gen_gold, gen_ovsf, gen_scrambling, CodeFamily, CodeSet, ScramblingSequence};
use crate::detectors::adaptive_rake::{rake_adaptive_combine, AdaptiveRakeState, RakeRule, DEFAULT_BATCH};
use crate::detectors::blind::{align_output, run_blind, BlindConfig, Structure};
use crate::detectors::conventional::{lmmse_eigen_weights, lmmse_weights, mf_detect, rake_detect};
use crate::error::{Error, Result};
use crate::numerics::{inner, Matrix};
use crate::preproc::{fit_whitening, sample_covariance, whiten, WhiteningTransform};
use crate::rng::{derive, stream};
use crate::sigmodel::{
    add_noise, build_signatures, clean_blocks, gen_frame, noise_variance, qpsk_bits, unit_noise, ChannelProfile,
    SignaturePair, SymbolFrame,
};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    /// Unscrambled synchronous DS-CDMA.
    DsCdma,
    /// One complex scrambling sequence per cell on top of the codes.
    Wcdma,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::DsCdma => "ds-cdma",
            System::Wcdma => "wcdma",
        }
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ds-cdma" | "dscdma" | "cdma" => Ok(System::DsCdma),
            "wcdma" => Ok(System::Wcdma),
            _ => Err(Error::config(format!("unknown system '{s}' (expected ds-cdma or wcdma)"))),
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    Mf,
    Rake,
    Lmmse,
    LmmseEig,
    Ff,
    Fb1,
    Fb2,
    RakeIca,
    RakeRica,
    RakePca,
}

impl Detector {
    pub const ALL: [Detector; 10] = [
        Detector::Mf,
        Detector::Rake,
        Detector::Lmmse,
        Detector::LmmseEig,
        Detector::Ff,
        Detector::Fb1,
        Detector::Fb2,
        Detector::RakeIca,
        Detector::RakeRica,
        Detector::RakePca,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Detector::Mf => "mf",
            Detector::Rake => "rake",
            Detector::Lmmse => "lmmse",
            Detector::LmmseEig => "lmmse-eig",
            Detector::Ff => "ff",
            Detector::Fb1 => "fb1",
            Detector::Fb2 => "fb2",
            Detector::RakeIca => "rake-ica",
            Detector::RakeRica => "rake-rica",
            Detector::RakePca => "rake-pca",
        }
    }

    pub fn structure(self) -> Option<Structure> {
        match self {
            Detector::Ff => Some(Structure::FeedForward),
            Detector::Fb1 => Some(Structure::FeedbackI),
            Detector::Fb2 => Some(Structure::FeedbackII),
            _ => None,
        }
    }

    pub fn rake_rule(self) -> Option<RakeRule> {
        match self {
            Detector::RakeIca => Some(RakeRule::FastIca),
            Detector::RakeRica => Some(RakeRule::RobustIca),
            Detector::RakePca => Some(RakeRule::Pca),
            _ => None,
        }
    }

    /// Parses a comma-separated list, keeping the given order.
    pub fn parse_list(s: &str) -> Result<Vec<Detector>> {
        let list: Vec<Detector> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(Error::config("empty detector list"));
        }
        Ok(list)
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Detector::ALL
            .iter()
            .copied()
            .find(|d| d.id() == t)
            .ok_or_else(|| Error::config(format!("unknown detector '{s}'")))
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Parses `lo:step:hi` (inclusive) or a comma list of SNR values in dB.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::config(format!("invalid SNR grid '{s}' (expected lo:step:hi or a comma list)"));
    let grid: Vec<f64> = if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [lo, step, hi] = parts[..] else { return Err(bad()) };
        if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() || hi < lo {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| lo + step * i as f64).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: System,
    pub code: CodeFamily,
    pub gain: usize,
    pub users: usize,
    pub symbols: usize,
    pub channel: ChannelProfile<f64>,
    pub snr_db: Vec<f64>,
    pub detectors: Vec<Detector>,
    pub trials: usize,
    pub seed: u64,
    pub blind: BlindConfig,
    /// Overrides the per-rule default step of the adaptive Rake receivers.
    pub rake_step: Option<f64>,
    pub rake_batch: usize,
    /// Leading symbols per user used for alignment and excluded from BER.
    pub pilot: usize,
}

impl Default for ExperimentConfig {
    /// The scaled reference scenario: Gold `G = 31`, `K = 10`, `M = 1000`,
    /// five-path channel.
    fn default() -> Self {
        ExperimentConfig {
            system: System::DsCdma,
            code: CodeFamily::Gold,
            gain: 31,
            users: 10,
            symbols: 1000,
            channel: ChannelProfile::five_path_channel(),
            snr_db: vec![0.0, 10.0, 20.0],
            detectors: Detector::ALL.to_vec(),
            trials: 10,
            seed: 1,
            blind: BlindConfig::default(),
            rake_step: None,
            rake_batch: DEFAULT_BATCH,
            pilot: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.users == 0 {
            return fail("users must be at least 1".into());
        }
        if self.users > self.gain {
            return fail(format!("{} users exceed the spreading gain {}", self.users, self.gain));
        }
        match self.code {
            CodeFamily::Gold if gold_degree(self.gain).is_none() => {
                return fail(format!("Gold codes need gain 31 or 63, got {}", self.gain))
            }
            CodeFamily::Ovsf if !self.gain.is_power_of_two() || self.gain < 2 => {
                return fail(format!("OVSF codes need a power-of-two gain, got {}", self.gain))
            }
            _ => {}
        }
        if self.channel.max_delay() >= self.gain {
            return fail(format!(
                "channel delay {} must be below the gain {}",
                self.channel.max_delay(),
                self.gain
            ));
        }
        if self.snr_db.is_empty() {
            return fail("empty SNR grid".into());
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return fail(format!("SNR {s} dB is not finite"));
        }
        if self.snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return fail("SNR grid must be strictly ascending".into());
        }
        if self.detectors.is_empty() {
            return fail("no detectors selected".into());
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.symbols <= self.pilot {
            return fail(format!("{} symbols leave nothing after {} pilots", self.symbols, self.pilot));
        }
        if !(self.blind.step >= 0.0) || !self.blind.step.is_finite() {
            return fail(format!("step size {} must be finite and non-negative", self.blind.step));
        }
        if let Some(s) = self.rake_step {
            if !(s >= 0.0) || !s.is_finite() {
                return fail(format!("Rake step {s} must be finite and non-negative"));
            }
        }
        if self.rake_batch == 0 {
            return fail("Rake batch must be at least 1".into());
        }
        Ok(())
    }

    /// Bits scored per trial, `2·K·(M − P)`.
    pub fn bits_per_trial(&self) -> u64 {
        2 * (self.users * (self.symbols - self.pilot)) as u64
    }
}

fn gold_degree(gain: usize) -> Option<u32> {
    match gain {
        31 => Some(5),
        63 => Some(6),
        _ => None,
    }
}

/// `(Re < 0, Im < 0)` per symbol; zero maps to bit 0.
pub fn hard_decide(soft: &[C64]) -> Vec<(u8, u8)> {
    soft.iter().map(|&z| qpsk_bits(z)).collect()
}

/// Aggregate result of one detector at one SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub detector: Detector,
    pub snr_db: f64,
    pub users: usize,
    pub symbols: usize,
    pub trials: usize,
    pub failed_trials: usize,
    pub bits: u64,
    pub bit_errors: u64,
    /// `bit_errors / bits`; NaN when every trial failed.
    pub ber: f64,
    /// Standard error of the mean per-trial BER (binomial for one trial).
    pub stderr: f64,
}

/// Outcome of one detector on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub detector: Detector,
    /// `None` when the detector failed (diverged or was numerically unusable).
    pub bit_errors: Option<u64>,
    pub failure: Option<String>,
}

/// Code set, scrambling and signatures shared by every trial of a config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: ExperimentConfig,
    pub codes: CodeSet,
    pub scramble: Option<ScramblingSequence<f64>>,
    pub sig: SignaturePair<f64>,
}

/// One trial's transmitted frame at one SNR.
#[derive(Debug, Clone)]
pub struct Realization {
    pub frame: SymbolFrame<f64>,
    pub blocks: Vec<Vec<C64>>,
    pub noise_var: f64,
}

impl Scenario {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let codes = match cfg.code {
            CodeFamily::Gold => gen_gold(
                gold_degree(cfg.gain).expect("validated"),
                cfg.users,
                derive(cfg.seed, stream::CODES),
            )?,
            CodeFamily::Ovsf => gen_ovsf(cfg.gain, cfg.users)?,
        };
        let scramble = match cfg.system {
            System::DsCdma => None,
            System::Wcdma => Some(gen_scrambling(cfg.gain, derive(cfg.seed, stream::SCRAMBLING))),
        };
        let sig = build_signatures(&codes, &cfg.channel, scramble.as_ref())?;
        Ok(Scenario {
            cfg: cfg.clone(),
            codes,
            scramble,
            sig,
        })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.cfg.seed ^ trial as u64
    }

    /// Frame of `trial` at `snr_db`; the symbols and the unit-variance noise
    /// do not depend on the SNR.
    pub fn realize(&self, trial: usize, snr_db: f64) -> Result<Realization> {
        let ts = self.trial_seed(trial);
        let frame = gen_frame(self.cfg.users, self.cfg.symbols, derive(ts, stream::SYMBOLS))?;
        let clean = clean_blocks(&frame, &self.sig)?;
        let noise = unit_noise(self.sig.g1, self.cfg.symbols, derive(ts, stream::NOISE));
        let q = noise_variance(self.sig.symbol_energy, snr_db);
        let blocks = add_noise(&clean, &noise, q);
        Ok(Realization {
            frame,
            blocks,
            noise_var: q,
        })
    }

    /// Runs every configured detector on one realization.
    pub fn run_trial(&self, trial: usize, snr_db: f64) -> Result<Vec<TrialOutcome>> {
        let rz = self.realize(trial, snr_db)?;
        let mut ctx = TrialContext::new(self, &rz);
        self.cfg
            .detectors
            .iter()
            .map(|&d| match ctx.estimate(d) {
                Ok(est) => Ok(TrialOutcome {
                    detector: d,
                    bit_errors: Some(count_errors(&est, &rz.frame.values, self.cfg.pilot)),
                    failure: None,
                }),
                Err(e @ (Error::Divergence { .. } | Error::Numeric { .. })) => {
                    log::debug!("{d} failed on trial {trial} at {snr_db} dB: {e}");
                    Ok(TrialOutcome {
                        detector: d,
                        bit_errors: None,
                        failure: Some(e.to_string()),
                    })
                }
                Err(e) => Err(e),
            })
            .collect()
    }
}

/// Bit errors over all users, skipping the first `pilot` symbols.
pub fn count_errors(estimate: &Matrix<f64>, truth: &Matrix<f64>, pilot: usize) -> u64 {
    let mut errors = 0u64;
    for u in 0..truth.rows() {
        let est = hard_decide(&estimate.row(u)[pilot..]);
        let tru = hard_decide(&truth.row(u)[pilot..]);
        for (a, b) in est.iter().zip(&tru) {
            errors += (a.0 != b.0) as u64 + (a.1 != b.1) as u64;
        }
    }
    errors
}

/// Quantities shared between detectors of one trial, computed on demand.
struct TrialContext<'a> {
    sc: &'a Scenario,
    rz: &'a Realization,
    cov: Option<Matrix<f64>>,
    whitening: Option<WhiteningTransform<f64>>,
    whitened: Option<Vec<Vec<C64>>>,
}

impl<'a> TrialContext<'a> {
    fn new(sc: &'a Scenario, rz: &'a Realization) -> Self {
        TrialContext {
            sc,
            rz,
            cov: None,
            whitening: None,
            whitened: None,
        }
    }

    fn cov(&mut self) -> Result<&Matrix<f64>> {
        if self.cov.is_none() {
            self.cov = Some(sample_covariance(&self.rz.blocks)?);
        }
        Ok(self.cov.as_ref().expect("just set"))
    }

    fn whitening(&mut self) -> Result<&WhiteningTransform<f64>> {
        if self.whitening.is_none() {
            let users = self.sc.cfg.users;
            let wt = fit_whitening(self.cov()?, users, 2)?;
            self.whitening = Some(wt);
        }
        Ok(self.whitening.as_ref().expect("just set"))
    }

    fn whitened(&mut self) -> Result<&[Vec<C64>]> {
        if self.whitened.is_none() {
            let rz = self.rz;
            let w = whiten(self.whitening()?, &rz.blocks)?;
            self.whitened = Some(w);
        }
        Ok(self.whitened.as_deref().expect("just set"))
    }

    /// `K × M` soft estimates, rows in user order.
    fn estimate(&mut self, d: Detector) -> Result<Matrix<f64>> {
        let sc = self.sc;
        let cfg = &sc.cfg;
        let (k, m) = (cfg.users, cfg.symbols);
        let blocks = &self.rz.blocks;
        let per_user = |f: &dyn Fn(usize) -> Result<Vec<C64>>| -> Result<Matrix<f64>> {
            let rows: Vec<Vec<C64>> = (0..k).map(f).collect::<Result<_>>()?;
            Ok(Matrix::from_fn(k, m, |u, n| rows[u][n]))
        };
        match d {
            Detector::Mf => per_user(&|u| mf_detect(&sc.codes, u, sc.scramble.as_ref(), blocks)),
            Detector::Rake => per_user(&|u| rake_detect(&sc.codes, u, sc.scramble.as_ref(), &cfg.channel, blocks)),
            Detector::Lmmse => {
                let det = lmmse_weights(&sc.sig, self.cov()?)?;
                per_user(&|u| det.detect(u, blocks))
            }
            Detector::LmmseEig => {
                let wt = self.whitening()?;
                let det = lmmse_eigen_weights(&sc.sig, &wt.eig, wt.subspace_dim)?;
                per_user(&|u| det.detect(u, blocks))
            }
            Detector::Ff | Detector::Fb1 | Detector::Fb2 => {
                let structure = d.structure().expect("blind detector");
                let out = run_blind(structure, self.whitened()?, &cfg.blind)?;
                let pilot = (cfg.pilot > 0).then_some(cfg.pilot);
                Ok(align_output(&out.raw, &self.rz.frame.values, pilot)?.aligned)
            }
            Detector::RakeIca | Detector::RakeRica | Detector::RakePca => {
                let rule = d.rake_rule().expect("adaptive Rake");
                let step = cfg.rake_step.unwrap_or(rule.default_step());
                let mut st = AdaptiveRakeState::new(rule, cfg.gain, step, cfg.rake_batch);
                let combined = rake_adaptive_combine(&mut st, &cfg.channel, blocks, true)?;
                let norm = 1.0 / (cfg.gain as f64).sqrt();
                per_user(&|u| {
                    let e = sc.codes.effective_code(u, sc.scramble.as_ref());
                    Ok(combined.iter().map(|x| inner(&e, x) * norm).collect())
                })
            }
        }
    }
}

/// Runs every trial of one SNR point in parallel; the result is in trial
/// order, each entry in detector order.
pub fn run_snr(sc: &Scenario, snr_db: f64) -> Result<Vec<Vec<TrialOutcome>>> {
    (0..sc.cfg.trials)
        .into_par_iter()
        .map(|t| sc.run_trial(t, snr_db))
        .collect()
}

/// Folds per-trial outcomes of one detector into a point.
pub fn aggregate(cfg: &ExperimentConfig, detector: Detector, snr_db: f64, outcomes: &[&TrialOutcome]) -> BerPoint {
    let per_trial = cfg.bits_per_trial();
    let ok: Vec<u64> = outcomes.iter().filter_map(|o| o.bit_errors).collect();
    let bits = per_trial * ok.len() as u64;
    let bit_errors: u64 = ok.iter().sum();
    let ber = if bits > 0 { bit_errors as f64 / bits as f64 } else { f64::NAN };
    let stderr = match ok.len() {
        0 => f64::NAN,
        1 => (ber * (1.0 - ber) / bits as f64).sqrt(),
        n => {
            let rates: Vec<f64> = ok.iter().map(|&e| e as f64 / per_trial as f64).collect();
            let var = rates.iter().map(|r| (r - ber).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        }
    };
    BerPoint {
        detector,
        snr_db,
        users: cfg.users,
        symbols: cfg.symbols,
        trials: outcomes.len(),
        failed_trials: outcomes.len() - ok.len(),
        bits,
        bit_errors,
        ber,
        stderr,
    }
}

/// Single-trial point of one detector, with `trial` the index added to the
/// base seed.
pub fn run_point(cfg: &ExperimentConfig, detector: Detector, snr_db: f64, trial: usize) -> Result<BerPoint> {
    let mut one = cfg.clone();
    one.detectors = vec![detector];
    one.trials = trial + 1;
    let sc = Scenario::new(&one)?;
    let outcome = sc.run_trial(trial, snr_db)?;
    let mut cfg1 = one;
    cfg1.trials = 1;
    Ok(aggregate(&cfg1, detector, snr_db, &[&outcome[0]]))
}

/// Full detectors × SNR sweep. Points are handed to `sink` as each SNR
/// completes (SNR-major, detectors in config order) and also returned.
pub fn sweep(cfg: &ExperimentConfig, mut sink: impl FnMut(&BerPoint) -> Result<()>) -> Result<Vec<BerPoint>> {
    let sc = Scenario::new(cfg)?;
    let mut points = Vec::with_capacity(cfg.snr_db.len() * cfg.detectors.len());
    for &snr in &cfg.snr_db {
        let trials = run_snr(&sc, snr)?;
        for (i, &d) in cfg.detectors.iter().enumerate() {
            let col: Vec<&TrialOutcome> = trials.iter().map(|t| &t[i]).collect();
            let p = aggregate(cfg, d, snr, &col);
            log::info!(
                "{:>9} @ {:>6.2} dB: ber {:.3e} ({} errors, {} failed trials)",
                d.id(),
                snr,
                p.ber,
                p.bit_errors,
                p.failed_trials
            );
            sink(&p)?;
            points.push(p);
        }
    }
    Ok(points)
}

pub const CSV_HEADER: &str = "system,code,G,K,M,L,snr_db,detector,trials,failed_trials,bits,bit_errors,ber,stderr,seed";

pub fn csv_row(cfg: &ExperimentConfig, p: &BerPoint) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{:e},{:e},{}",
        cfg.system.name(),
        cfg.code.name(),
        cfg.gain,
        p.users,
        p.symbols,
        cfg.channel.paths(),
        p.snr_db,
        p.detector.id(),
        p.trials,
        p.failed_trials,
        p.bits,
        p.bit_errors,
        p.ber,
        p.stderr,
        cfg.seed
    )
}

/// Streams the sweep to `out` as CSV.
pub fn sweep_csv<W: Write>(cfg: &ExperimentConfig, mut out: W) -> Result<Vec<BerPoint>> {
    let io = |e: std::io::Error| Error::config(format!("writing CSV: {e}"));
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    let points = sweep(cfg, |p| {
        writeln!(out, "{}", csv_row(cfg, p)).map_err(io)?;
        out.flush().map_err(io)
    })?;
    Ok(points)
}
