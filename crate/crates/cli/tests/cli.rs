//! End-to-end tests against the compiled binary: exit-code contract,
//! deterministic CSV bytes across worker counts, config-file handling, and
//! the corrupted-ensemble failure path.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wgmlb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgmlb"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

#[test]
fn construct_writes_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.txt");
    let out = wgmlb(&[
        "construct", "--d", "15", "--s", "10", "--g", "5", "--B", "5", "--rho", "2", "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("15"));
    assert_eq!(lines.count(), 15, "fifteen edges");
    assert!(stdout(&out).contains("R1"));
}

#[test]
fn construct_rejects_r1_violation_with_exit_2() {
    // d/g equal to rho*B/(s-g) misses R1 by one.
    let out = wgmlb(&[
        "construct", "--d", "10", "--s", "10", "--g", "5", "--B", "5", "--rho", "2",
    ]);
    assert_eq!(exit_code(&out), 2);
    let text = stdout(&out);
    let r1_line = text.lines().find(|l| l.trim_start().starts_with("R1")).unwrap();
    assert!(r1_line.contains("FAIL"), "{r1_line}");
    assert!(r1_line.contains("lhs = 2") && r1_line.contains("rhs = 3"), "{r1_line}");
}

#[test]
fn construct_suggest_prints_minimal_parameters() {
    let out = wgmlb(&["construct", "--suggest", "--s", "10", "--g", "5", "--B", "5"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("rho_min = 2"));
    assert!(text.contains("d_min = 15"));
}

#[test]
fn bounds_emits_expected_json() {
    let out = wgmlb(&["bounds", "--d", "15", "--s", "10", "--g", "5", "--B", "5", "--rho", "2"]);
    assert_eq!(exit_code(&out), 0);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["exact_count"], 248832);
    assert!((json["exact_log"].as_f64().unwrap() - 12.4245332).abs() < 1e-6);
    assert_eq!(json["n_star_noisy"], 2);
    assert_eq!(json["version"], "0.1.0");

    let block = wgmlb(&["bounds", "--block", "--J", "2", "--N", "4", "--K", "2"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&block)).unwrap();
    assert_eq!(json["exact_count"], 96);

    let tree = wgmlb(&["bounds", "--tree", "--s", "3"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&tree)).unwrap();
    assert!((json["log_count"].as_f64().unwrap() - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn bounds_rejects_invalid_parameters_with_exit_2() {
    let out = wgmlb(&["bounds", "--d", "10", "--s", "10", "--g", "5", "--B", "5", "--rho", "2"]);
    assert_eq!(exit_code(&out), 2);
    let block = wgmlb(&["bounds", "--block", "--J", "2", "--N", "4", "--K", "9"]);
    assert_eq!(exit_code(&block), 2);
}

fn simulate_csv(dir: &Path, workers: &str, seed: &str) -> String {
    let path = dir.join(format!("out-{workers}-{seed}.csv"));
    let out = wgmlb(&[
        "simulate", "--d", "6", "--s", "4", "--g", "2", "--B", "2", "--rho", "2", "--trials",
        "300", "--n-grid", "1,2", "--seed", seed, "--workers", workers, "--csv",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    fs::read_to_string(&path).unwrap()
}

#[test]
fn simulate_is_byte_identical_across_workers_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_csv(dir.path(), "1", "42");
    let b = simulate_csv(dir.path(), "4", "42");
    assert_eq!(a, b, "worker count changed the CSV bytes");
    let c = simulate_csv(dir.path(), "2", "42");
    assert_eq!(a, c);
    let other_seed = simulate_csv(dir.path(), "2", "43");
    assert_ne!(a, other_seed, "different seeds must differ");
}

#[test]
fn simulate_reads_config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# tiny run\nd = 6\ns = 4\ng = 2\nB = 2\nrho = 2\nn_grid = 1\ntrials = 120\nmaster_seed = 5\n",
    )
    .unwrap();
    let json_path = dir.path().join("summary.json");
    let out = wgmlb(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "80",
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    // Flag override beats the file; file beats the default.
    assert_eq!(json["summary"]["config"]["trials"], 80);
    assert_eq!(json["summary"]["config"]["master_seed"], 5);
    assert_eq!(json["summary"]["config"]["spec"]["d"], 6);
    assert_eq!(json["summary"]["member_count"], 144);
    assert_eq!(json["version"], "0.1.0");
    assert_eq!(json["summary"]["library_version"], "0.1.0");
    // CSV went to stdout.
    assert!(stdout(&out).starts_with("n,trials,err_count"));
}

#[test]
fn simulate_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "dee = 6\n").unwrap();
    let out = wgmlb(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}

#[test]
fn simulate_noiseless_sign_runs_with_design_decoder() {
    let out = wgmlb(&[
        "simulate", "--d", "6", "--s", "4", "--g", "2", "--B", "2", "--rho", "2", "--mode",
        "noiseless", "--link", "sign", "--trials", "60", "--n-grid", "1,4",
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn verify_passes_on_intact_ensemble_and_fails_on_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let ens = dir.path().join("ens.txt");
    let build = wgmlb(&[
        "construct", "--d", "6", "--s", "4", "--g", "2", "--B", "2", "--rho", "2",
        "--ensemble-out", ens.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&build), 0);

    let intact = wgmlb(&[
        "verify", "--trials", "10000", "--seed", "7", "--ensemble", ens.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&intact), 0, "{}", stdout(&intact));

    // Edit one value: the minimum-distance check must fail with exit 3.
    let text = fs::read_to_string(&ens).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let member_line = lines
        .iter()
        .position(|l| l.split_whitespace().count() == 8)
        .unwrap();
    let mut fields: Vec<String> = lines[member_line]
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let lo: f64 = fields[4].parse().unwrap();
    fields[4] = format!("{:.16e}", lo + 1e-3);
    lines[member_line] = fields.join(" ");
    fs::write(&ens, lines.join("\n")).unwrap();

    let corrupted = wgmlb(&[
        "verify", "--trials", "10000", "--seed", "7", "--ensemble", ens.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&corrupted), 3, "{}", stdout(&corrupted));
    let report = stdout(&corrupted);
    assert!(report.contains("[FAIL] minimum pairwise distance"));
}

#[test]
fn verify_reproducible_for_fixed_seed() {
    let run = || {
        let out = wgmlb(&["verify", "--trials", "10000", "--seed", "11", "--d", "6", "--s", "4",
            "--g", "2", "--B", "2", "--rho", "2"]);
        (exit_code(&out), stdout(&out))
    };
    let (code_a, text_a) = run();
    let (code_b, text_b) = run();
    assert_eq!(code_a, 0);
    assert_eq!(code_b, 0);
    assert_eq!(text_a, text_b, "verify output must be reproducible");
}

#[test]
fn simulate_runs_over_serialized_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let ens = dir.path().join("ens.txt");
    let build = wgmlb(&[
        "construct", "--d", "6", "--s", "4", "--g", "2", "--B", "2", "--rho", "2",
        "--ensemble-out", ens.to_str().unwrap(), "--epsilon", "0.9",
    ]);
    assert_eq!(exit_code(&build), 0);
    let out = wgmlb(&[
        "simulate", "--ensemble", ens.to_str().unwrap(), "--trials", "100", "--n-grid", "1",
        "--json", dir.path().join("s.json").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    // Scale parameters come from the file header.
    assert_eq!(json["summary"]["config"]["epsilon"], 0.9);
    assert_eq!(json["summary"]["member_count"], 144);
}

#[test]
fn missing_files_exit_1() {
    let out = wgmlb(&["simulate", "--config", "/nonexistent/path.cfg"]);
    assert_eq!(exit_code(&out), 1);
    let out = wgmlb(&["verify", "--ensemble", "/nonexistent/ens.txt"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn clap_usage_errors_exit_2() {
    let out = wgmlb(&["construct", "--s", "10"]);
    assert_eq!(exit_code(&out), 2);
    let out = wgmlb(&["bounds", "--block", "--J", "2"]);
    assert_eq!(exit_code(&out), 2);
}
