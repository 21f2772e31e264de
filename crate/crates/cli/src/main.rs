//! `cdma-ica`: BER sweeps, plots and frame dumps from the command line.

mod plot;
mod settings;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cdma_ica::eval::{csv_row, sweep, sweep_csv, BerPoint, Detector, ExperimentConfig, Scenario, CSV_HEADER};
use cdma_ica::ReceivedFrame;

use settings::Settings;

/// Default output directory when `--out` is absent.
pub const OUT_ENV: &str = "CDMA_ICA_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "cdma-ica", version, about = "Blind and adaptive multiuser detection BER experiments", args_override_self = true)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a detectors x SNR sweep and write `ber.csv` plus `run.conf`.
    Run(ExperimentArgs),
    /// Render a results CSV as an SVG waterfall.
    Plot {
        csv: PathBuf,
        /// Output file; defaults to the CSV path with an `.svg` extension.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write one received frame, one window per line as `re,im` pairs.
    Dump {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Trial index whose frame is written.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Quick end-to-end check on a small scenario.
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// key=value settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ds-cdma or wcdma.
    #[arg(long)]
    system: Option<String>,
    /// gold or ovsf.
    #[arg(long)]
    code: Option<String>,
    /// Spreading gain G (default 63 for Gold, 64 for OVSF).
    #[arg(long)]
    gain: Option<String>,
    /// Number of users K.
    #[arg(long)]
    users: Option<String>,
    /// Symbols per user M.
    #[arg(long)]
    symbols: Option<String>,
    /// SNR grid in dB, "lo:step:hi" or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    /// Comma list of mf,rake,lmmse,lmmse-eig,ff,fb1,fb2,rake-ica,rake-rica,rake-pca.
    #[arg(long)]
    detectors: Option<String>,
    /// Multipath taps "re,im@delay;...".
    #[arg(long, allow_hyphen_values = true)]
    channel: Option<String>,
    /// Blind separator step size.
    #[arg(long)]
    mu: Option<String>,
    /// Number of lag / feedback taps T.
    #[arg(long)]
    taps: Option<String>,
    /// Passes over the frame for the blind separators.
    #[arg(long)]
    epochs: Option<String>,
    /// Blocks between re-orthonormalisations (0 disables).
    #[arg(long)]
    orth_period: Option<String>,
    /// Feedback-I update law, natural or printed.
    #[arg(long)]
    fb1_law: Option<String>,
    /// Step of the adaptive Rake receivers ("default" picks per rule).
    #[arg(long)]
    rake_step: Option<String>,
    /// Sliding batch of the adaptive Rake receivers.
    #[arg(long)]
    rake_batch: Option<String>,
    /// Pilot symbols per user (used for alignment, excluded from BER).
    #[arg(long)]
    pilot: Option<String>,
    /// Trials per point.
    #[arg(long)]
    trials: Option<String>,
    /// Base seed.
    #[arg(long)]
    seed: Option<String>,
    /// Output directory (default from $CDMA_ICA_OUT, else ./results).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        let mut flags = Settings::default();
        let pairs = [
            ("system", &self.system),
            ("code", &self.code),
            ("gain", &self.gain),
            ("users", &self.users),
            ("symbols", &self.symbols),
            ("snr", &self.snr),
            ("detectors", &self.detectors),
            ("channel", &self.channel),
            ("mu", &self.mu),
            ("taps", &self.taps),
            ("epochs", &self.epochs),
            ("orth-period", &self.orth_period),
            ("fb1-law", &self.fb1_law),
            ("rake-step", &self.rake_step),
            ("rake-batch", &self.rake_batch),
            ("pilot", &self.pilot),
            ("trials", &self.trials),
            ("seed", &self.seed),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                flags.set(k, v.clone());
            }
        }
        s.merge(&flags);
        Ok(s)
    }

    fn out_dir(&self) -> PathBuf {
        out_dir(self.out.clone())
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_sidecar(dir: &Path, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let path = dir.join("run.conf");
    fs::write(&path, settings::render(cfg)).map_err(io_err(&path))?;
    Ok(path)
}

fn summary(cfg: &ExperimentConfig, points: &[BerPoint]) -> String {
    let mut s = format!("{:>10}", "snr_db");
    for d in &cfg.detectors {
        s.push_str(&format!(" {:>10}", d.id()));
    }
    s.push('\n');
    for (i, snr) in cfg.snr_db.iter().enumerate() {
        s.push_str(&format!("{snr:>10}"));
        for p in &points[i * cfg.detectors.len()..(i + 1) * cfg.detectors.len()] {
            let cell = if p.failed_trials == p.trials {
                "failed".to_string()
            } else {
                format!("{:.3e}", p.ber)
            };
            s.push_str(&format!(" {cell:>10}"));
        }
        s.push('\n');
    }
    s
}

fn cmd_run(args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = args.settings()?.resolve()?;
    let dir = args.out_dir();
    create_dir(&dir)?;
    write_sidecar(&dir, &cfg)?;
    let csv_path = dir.join("ber.csv");
    let file = File::create(&csv_path).map_err(io_err(&csv_path))?;
    let start = Instant::now();
    let points = sweep_csv(&cfg, BufWriter::new(file)).map_err(|e| CliError::Runtime(e.to_string()))?;
    print!("{}", summary(&cfg, &points));
    println!(
        "{} points in {:.1} s -> {}",
        points.len(),
        start.elapsed().as_secs_f64(),
        csv_path.display()
    );
    let dead: Vec<String> = points
        .iter()
        .filter(|p| p.failed_trials == p.trials)
        .map(|p| format!("{}@{}dB", p.detector, p.snr_db))
        .collect();
    if dead.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("every trial failed at {}", dead.join(", "))))
    }
}

fn cmd_plot(csv: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let text = fs::read_to_string(csv).map_err(io_err(csv))?;
    let table = plot::parse_csv(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", csv.display())))?;
    let out = out.unwrap_or_else(|| csv.with_extension("svg"));
    fs::write(&out, plot::render_svg(&table)).map_err(io_err(&out))?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_dump(args: &ExperimentArgs, trial: usize) -> Result<(), CliError> {
    let cfg = args.settings()?.resolve()?;
    let snr = cfg.snr_db[0];
    let sc = Scenario::new(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let rz = sc.realize(trial, snr).map_err(|e| CliError::Runtime(e.to_string()))?;
    let dir = args.out_dir();
    create_dir(&dir)?;
    write_sidecar(&dir, &cfg)?;
    let path = dir.join(format!("frame_t{trial}.txt"));
    let frame = ReceivedFrame {
        window: sc.sig.g1,
        blocks: rz.blocks,
        noise_var: rz.noise_var,
    };
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    frame.write_dump(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    println!(
        "{} blocks of {} samples at {snr} dB (noise variance {:e}) -> {}",
        frame.len(),
        frame.window,
        frame.noise_var,
        path.display()
    );
    Ok(())
}

fn selftest_config() -> ExperimentConfig {
    ExperimentConfig {
        gain: 31,
        users: 4,
        symbols: 500,
        snr_db: vec![0.0, 10.0, 20.0],
        detectors: Detector::ALL.to_vec(),
        trials: 2,
        seed: 7,
        ..ExperimentConfig::default()
    }
}

fn cmd_selftest(out: Option<PathBuf>) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = selftest_config();
    let rt = |e: cdma_ica::Error| CliError::Runtime(e.to_string());
    let mut first = Vec::new();
    let points = sweep_csv(&cfg, &mut first).map_err(rt)?;
    let mut second = Vec::new();
    sweep(&cfg, |p| {
        second.push(csv_row(&cfg, p));
        Ok(())
    })
    .map_err(rt)?;
    let text = String::from_utf8(first).expect("ASCII CSV");
    let at = |d: Detector, snr: f64| {
        points
            .iter()
            .find(|p| p.detector == d && p.snr_db == snr)
            .expect("swept point")
            .ber
    };
    let checks = [
        (
            "csv shape",
            text.lines().count() == 1 + cfg.snr_db.len() * cfg.detectors.len() && text.starts_with(CSV_HEADER),
        ),
        ("deterministic rerun", text.lines().skip(1).eq(second.iter().map(String::as_str))),
        (
            "bit accounting",
            points
                .iter()
                .all(|p| p.bits == cfg.bits_per_trial() * (p.trials - p.failed_trials) as u64),
        ),
        ("no failed trials", points.iter().all(|p| p.failed_trials == 0)),
        ("rake beats mf at 20 dB", at(Detector::Rake, 20.0) <= at(Detector::Mf, 20.0)),
        ("lmmse beats mf at 20 dB", at(Detector::Lmmse, 20.0) <= at(Detector::Mf, 20.0)),
        ("fb2 beats mf at 10 dB", at(Detector::Fb2, 10.0) <= at(Detector::Mf, 10.0)),
        ("fb1 below 1e-2 at 20 dB", at(Detector::Fb1, 20.0) < 1e-2),
        (
            "plot renders",
            plot::parse_csv(&text).map(|t| plot::render_svg(&t).contains("<polyline")).unwrap_or(false),
        ),
    ];
    let mut ok = true;
    for (name, pass) in checks {
        println!("{} {name}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    }
    if let Some(dir) = out {
        create_dir(&dir)?;
        let path = dir.join("selftest.csv");
        fs::write(&path, &text).map_err(io_err(&path))?;
        write_sidecar(&dir, &cfg)?;
    }
    println!("selftest finished in {:.1} s", start.elapsed().as_secs_f64());
    if ok {
        Ok(())
    } else {
        Err(CliError::Runtime("selftest failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Plot { csv, out } => cmd_plot(csv, out.clone()),
        Command::Dump { exp, trial } => cmd_dump(exp, *trial),
        Command::Selftest { out } => cmd_selftest(out.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
