//! Flat `key=value` settings shared by the config file and the flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cdma_ica::detectors::blind::{BlindConfig, Fb1Law};
use cdma_ica::eval::{parse_snr_grid, Detector, ExperimentConfig, System};
use cdma_ica::{ChannelProfile, CodeFamily};

use crate::CliError;

/// Every recognised key, in the order the resolved config is written.
pub const KEYS: &[&str] = &[
    "system",
    "code",
    "gain",
    "users",
    "symbols",
    "channel",
    "snr",
    "detectors",
    "trials",
    "seed",
    "pilot",
    "mu",
    "taps",
    "epochs",
    "orth-period",
    "fb1-law",
    "rake-step",
    "rake-batch",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key=value, got '{line}'", i + 1)))?;
            let key = k.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("{origin}:{}: unknown key '{}'", i + 1, k.trim())));
            }
            s.values.insert(key, v.trim().to_string());
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.values.insert(key.to_string(), value.into());
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Builds and validates the experiment; `users` has no default.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig {
            snr_db: parse_snr_grid("-10:5:30").expect("valid default grid"),
            ..ExperimentConfig::default()
        };
        cfg.system = self.parsed("system", cfg.system, |v| v.parse::<System>().map_err(|e| e.to_string()))?;
        cfg.code = self.parsed("code", cfg.code, |v| v.parse::<CodeFamily>().map_err(|e| e.to_string()))?;
        let default_gain = match cfg.code {
            CodeFamily::Gold => 63,
            CodeFamily::Ovsf => 64,
        };
        cfg.gain = self.number("gain", default_gain)?;
        cfg.users = match self.get("users") {
            Some(_) => self.number("users", 0)?,
            None => {
                return Err(CliError::Usage(
                    "missing required setting 'users' (pass --users or set it in the config file)".into(),
                ))
            }
        };
        cfg.symbols = self.number("symbols", 1000)?;
        cfg.channel = self.parsed("channel", cfg.channel, |v| {
            ChannelProfile::parse(v).map_err(|e| e.to_string())
        })?;
        cfg.snr_db = self.parsed("snr", cfg.snr_db, |v| parse_snr_grid(v).map_err(|e| e.to_string()))?;
        cfg.detectors = self.parsed("detectors", cfg.detectors, |v| {
            Detector::parse_list(v).map_err(|e| e.to_string())
        })?;
        cfg.trials = self.number("trials", cfg.trials)?;
        cfg.seed = self.number("seed", cfg.seed)?;
        cfg.pilot = self.number("pilot", 0)?;
        let d = BlindConfig::default();
        cfg.blind = BlindConfig {
            step: self.number("mu", d.step)?,
            lags: self.number("taps", d.lags)?,
            epochs: self.number("epochs", d.epochs)?,
            orth_period: self.number("orth-period", d.orth_period)?,
            fb1_law: self.parsed("fb1-law", d.fb1_law, |v| v.parse::<Fb1Law>().map_err(|e| e.to_string()))?,
        };
        cfg.rake_step = match self.get("rake-step") {
            None | Some("default") => None,
            Some(_) => Some(self.number("rake-step", 0.0)?),
        };
        cfg.rake_batch = self.number("rake-batch", cfg.rake_batch)?;
        cfg.validate().map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
        Ok(cfg)
    }

    fn parsed<V>(&self, key: &str, default: V, f: impl Fn(&str) -> Result<V, String>) -> Result<V, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => f(v).map_err(|e| CliError::Usage(format!("invalid value '{v}' for --{key}: {e}"))),
        }
    }

    fn number<V: std::str::FromStr>(&self, key: &str, default: V) -> Result<V, CliError>
    where
        V::Err: std::fmt::Display,
    {
        self.parsed(key, default, |v| v.parse::<V>().map_err(|e| e.to_string()))
    }
}

/// Renders a config back to settings that reproduce it exactly.
pub fn render(cfg: &ExperimentConfig) -> String {
    let snr: Vec<String> = cfg.snr_db.iter().map(|s| s.to_string()).collect();
    let dets: Vec<&str> = cfg.detectors.iter().map(|d| d.id()).collect();
    let rake_step = cfg.rake_step.map_or("default".to_string(), |s| s.to_string());
    let values: Vec<(&str, String)> = vec![
        ("system", cfg.system.name().into()),
        ("code", cfg.code.name().into()),
        ("gain", cfg.gain.to_string()),
        ("users", cfg.users.to_string()),
        ("symbols", cfg.symbols.to_string()),
        ("channel", cfg.channel.to_tap_string()),
        ("snr", snr.join(",")),
        ("detectors", dets.join(",")),
        ("trials", cfg.trials.to_string()),
        ("seed", cfg.seed.to_string()),
        ("pilot", cfg.pilot.to_string()),
        ("mu", cfg.blind.step.to_string()),
        ("taps", cfg.blind.lags.to_string()),
        ("epochs", cfg.blind.epochs.to_string()),
        ("orth-period", cfg.blind.orth_period.to_string()),
        ("fb1-law", cfg.blind.fb1_law.name().into()),
        ("rake-step", rake_step),
        ("rake-batch", cfg.rake_batch.to_string()),
    ];
    debug_assert_eq!(values.len(), KEYS.len());
    let mut out = String::from("# resolved configuration; reload with --config\n");
    for (k, v) in values {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}
