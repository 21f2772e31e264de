use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cdma-ica"));
    c.env_remove("CDMA_ICA_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "run",
    "--gain",
    "31",
    "--users",
    "3",
    "--symbols",
    "200",
    "--snr",
    "-5:5:5",
    "--detectors",
    "mf,rake,fb2",
    "--trials",
    "2",
    "--epochs",
    "3",
];

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = SMALL.to_vec();
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    run(&args)
}

#[test]
fn missing_users_is_a_usage_error() {
    let o = run(&["run", "--gain", "31"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("users"), "{}", stderr(&o));
}

#[test]
fn invalid_flag_values_exit_two_naming_the_flag() {
    for (flag, val) in [("--gain", "abc"), ("--snr", "9:1:0"), ("--detectors", "mf,zf"), ("--code", "kasami")] {
        let o = run(&["run", "--users", "3", flag, val]);
        assert_eq!(o.status.code(), Some(2), "{flag}");
        assert!(stderr(&o).contains(flag), "{flag}: {}", stderr(&o));
    }
    let o = run(&["run", "--users", "3", "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempdir().unwrap();
    let conf = dir.path().join("x.conf");
    fs::write(&conf, "users = 3\nspreading = 31\n").unwrap();
    let o = run(&["run", "--config", conf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("spreading"), "{}", stderr(&o));
}

#[test]
fn run_writes_csv_sidecar_and_is_reproducible() {
    let a = tempdir().unwrap();
    let o = small_run(a.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(a.path().join("ber.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);

    let b = tempdir().unwrap();
    assert!(small_run(b.path(), &[]).status.success());
    assert_eq!(csv, fs::read_to_string(b.path().join("ber.csv")).unwrap());

    // the sidecar alone reproduces the run
    let c = tempdir().unwrap();
    let sidecar = a.path().join("run.conf");
    let o = run(&["run", "--config", sidecar.to_str().unwrap(), "--out", c.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv, fs::read_to_string(c.path().join("ber.csv")).unwrap());
}

#[test]
fn run_then_plot_round_trips() {
    let dir = tempdir().unwrap();
    assert!(small_run(dir.path(), &[]).status.success());
    let csv = dir.path().join("ber.csv");
    let o = run(&["plot", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("ber.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn plot_reports_malformed_line() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(
        &csv,
        "system,code,G,K,M,L,snr_db,detector,trials,failed_trials,bits,bit_errors,ber,stderr,seed\nwcdma,ovsf\n",
    )
    .unwrap();
    let o = run(&["plot", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempdir().unwrap();
    let target = dir.path().join("from-env");
    let mut args = SMALL.to_vec();
    args.extend_from_slice(&["--snr", "10", "--detectors", "mf"]);
    let o = bin().args(&args).env("CDMA_ICA_OUT", &target).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("ber.csv").exists());
    assert!(target.join("run.conf").exists());
}

#[test]
fn channel_flag_reaches_the_sidecar() {
    let dir = tempdir().unwrap();
    let o = small_run(
        dir.path(),
        &["--channel", "0.3684,0.5364@0;0.1982,0.0187@1", "--detectors", "rake", "--snr", "10"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let conf = fs::read_to_string(dir.path().join("run.conf")).unwrap();
    assert!(conf.contains("channel = 0.3684,0.5364@0;0.1982,0.0187@1"), "{conf}");
    let csv = fs::read_to_string(dir.path().join("ber.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("ds-cdma,gold,31,3,200,2,10,rake,"));
}

#[test]
fn dump_writes_one_window_per_symbol() {
    let dir = tempdir().unwrap();
    let o = run(&[
        "dump", "--gain", "31", "--users", "3", "--symbols", "50", "--snr", "10", "--trial", "1", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("frame_t1.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 50);
    // G + max delay of the default five-path channel
    assert!(lines.iter().all(|l| l.split_whitespace().count() == 35));
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{out}");
    assert!(!out.contains("FAIL"));
}
