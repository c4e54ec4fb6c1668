use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cogharvest");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Writes `text` as a config file in `dir`.
fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("test.conf");
    fs::write(&path, text).unwrap();
    path
}

/// Column `name` of every data row (the totals row excluded).
fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines
        .filter(|l| !l.starts_with("total"))
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

const SMALL_SEARCH: [&str; 6] = ["--grid-omega", "6", "--grid-theta", "6", "--refine", "1"];

#[test]
fn analyze_reports_the_reference_metrics() {
    let cfg = config("single_su.conf");
    let out = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = stdout(&out);
    assert!(csv.starts_with("su,omega,theta,p_fa,p_d,pi_hat_idle,"));
    // pinned after the first run that matched the simulator
    let rate: f64 = column(&csv, "rate_lb")[0].parse().unwrap();
    let energy: f64 = column(&csv, "avg_energy")[0].parse().unwrap();
    assert!((rate - 28946.996377385887).abs() < 1e-6 * rate, "{rate}");
    assert!((energy - 68.8274179930451).abs() < 1e-9 * energy, "{energy}");
    assert!(stderr(&out).contains("constraint met"));
}

#[test]
fn invalid_config_names_the_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("single_su.conf"))
        .unwrap()
        .replace("sensing_duration = 1e-3", "sensing_duration = 10e-3");
    let line = text.lines().position(|l| l.starts_with("sensing_duration")).unwrap() + 1;
    let path = write_config(dir.path(), &text);
    let out = run(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("τd ≤ 0"), "{err}");
    assert!(err.contains(&format!("line {line}")), "{err}");
    assert!(stdout(&out).is_empty());
}

#[test]
fn unknown_keys_and_missing_files_are_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "[system]\nbattery_cels = 80\n[su.1]\nsu_ap_var = 2\nharvest_rate = 15\n");
    let out = run(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("battery_cels"), "{}", stderr(&out));

    let out = run(&["analyze", "--config", "/nonexistent/file.conf"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn ideal_sensing_never_interferes() {
    let cfg = config("three_su.conf");
    let out = run(&["analyze", "--config", cfg.to_str().unwrap(), "--ideal-sensing"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = stdout(&out);
    assert!(column(&csv, "interference").iter().all(|v| v == "0"), "{csv}");
    assert!(column(&csv, "p_fa").iter().all(|v| v == "0"));
    assert!(csv.lines().last().unwrap().ends_with(",true"));
}

#[test]
fn impossible_cap_is_reported_as_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("three_su.conf"))
        .unwrap()
        .lines()
        .map(|l| if l.starts_with("interference_cap") { "interference_cap = 0.01" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let path = write_config(dir.path(), &text);
    let mut args = vec!["optimize", "--config", path.to_str().unwrap()];
    args.extend(SMALL_SEARCH);
    let out = run(&args);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stdout(&out).lines().last().unwrap().ends_with(",false"));
    assert!(stderr(&out).contains("least interference"));
}

#[test]
fn optimize_meets_the_cap() {
    let cfg = config("three_su.conf");
    let mut args = vec!["optimize", "--config", cfg.to_str().unwrap()];
    args.extend(SMALL_SEARCH);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = stdout(&out);
    let total: f64 = column(&csv, "interference").iter().map(|v| v.parse::<f64>().unwrap()).sum();
    assert!(total <= 1.585 + 1e-12, "{total}");
}

#[test]
fn short_simulation_is_an_oracle_mismatch() {
    let cfg = config("single_su.conf");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--slots", "2000"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("FAIL"));
}

#[test]
fn zero_slots_are_rejected() {
    let cfg = config("single_su.conf");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--slots", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulation_is_reproducible_and_leaves_a_manifest() {
    let cfg = config("single_su.conf");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--slots",
            "200000",
            "--seed",
            "9",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(matches!(code(&out), 0 | 4), "{}", stderr(&out));
        assert!(stdout(&out).is_empty());
        outputs.push(fs::read(out_dir.join("simulate.csv")).unwrap());
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["command"], "simulate");
        assert_eq!(manifest["seed"], 9);
        assert!(out_dir.join("compare.csv").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn files_without_stdout_fallback_need_an_output_directory() {
    let cfg = config("single_su.conf");
    let out = run(&["analyze", "--config", cfg.to_str().unwrap(), "--dump-matrix"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).is_empty());

    let dir = tempfile::tempdir().unwrap();
    let out = run(&["analyze", "--config", cfg.to_str().unwrap(), "--dump-matrix", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let matrix = fs::read_to_string(dir.path().join("matrix_su1.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 81);
}

#[test]
fn sweep_flags_invalid_points() {
    let cfg = config("single_su.conf");
    let out = run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--axis", "tau_s", "--from", "1e-3", "--to", "12e-3", "--points", "4",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = stdout(&out);
    assert_eq!(column(&csv, "valid"), ["true", "true", "true", "false"]);
    assert!(column(&csv, "note")[3].contains("τd ≤ 0"));
}

#[test]
fn cap_sweep_is_non_decreasing() {
    let cfg = config("three_su.conf");
    let mut args = vec![
        "sweep", "--config", cfg.to_str().unwrap(), "--axis", "I_av", "--from", "0.2", "--to", "5", "--points", "5", "--log",
    ];
    args.extend(SMALL_SEARCH);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rates: Vec<f64> = column(&stdout(&out), "sum_rate").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(rates.len(), 5);
    assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
}
