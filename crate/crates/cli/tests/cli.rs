use std::path::Path;
use std::process::{Command, Output};

fn tisgm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tisgm"))
        .args(args)
        .env_remove("TISGM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn stability_csv_starts_with_config_header() {
    let o = tisgm(&["stability", "--theta", "1.6", "--k", "2"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# command = \"stability\""));
    let table: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(table[0], "theta,k,s_k");
    let s: f64 = table[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!(s > 0.0);
}

#[test]
fn critical_values_are_printed_for_each_order() {
    let o = tisgm(&["critical", "--k", "2,5"]);
    assert_eq!(code(&o), 0);
    let rows: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(!stdout(&o).contains("# theta"));
}

#[test]
fn empty_bracket_is_a_numerical_error() {
    let o = tisgm(&["critical", "--k", "2", "--bracket", "2:3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_k_list_is_a_usage_error() {
    assert_eq!(code(&tisgm(&["stability", "--k", ""])), 1);
    assert_eq!(code(&tisgm(&["stability", "--k", "0"])), 1);
}

#[test]
fn bad_theta_range_is_a_usage_error() {
    assert_eq!(code(&tisgm(&["ks", "--theta-range", "3:1:5"])), 1);
    assert_eq!(code(&tisgm(&["ks", "--theta-range", "1:3:1"])), 1);
}

#[test]
fn unknown_subcommand_exits_one_and_help_exits_zero() {
    assert_eq!(code(&tisgm(&["frobnicate"])), 1);
    assert_eq!(code(&tisgm(&["--help"])), 0);
}

#[test]
fn oversized_verify_is_a_capacity_error() {
    let o = tisgm(&["verify", "--k", "3", "--depth", "4"]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("capacity"), "{err}");
}

#[test]
fn plus_law_in_uniqueness_regime_is_rejected() {
    let o = tisgm(&["sample", "--theta", "1.2", "--law", "plus", "--trees", "10"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_passes_by_default_and_accepts_negative_coupling() {
    assert_eq!(code(&tisgm(&["verify"])), 0);
    let o = tisgm(&["verify", "--theta", "0.5"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("expected_fail"));
}

#[test]
fn sampling_is_byte_reproducible() {
    let args = [
        "sample", "--theta", "1.6", "--law", "plus", "--trees", "200", "--depth", "4", "--seed",
        "17",
    ];
    let a = tisgm(&args);
    let b = tisgm(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let mut other = args;
    other[10] = "18";
    assert_ne!(tisgm(&other).stdout, a.stdout);
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "theta = [1.4]\nk = [3]\nseed = 9\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_file = stdout(&tisgm(&["stability", "--config", cfg]));
    assert!(from_file.contains("# theta = [1.4]"));
    assert!(from_file.contains("# k = [3]"));
    assert!(from_file.contains("# seed = 9"));

    let flagged = stdout(&tisgm(&["stability", "--config", cfg, "--k", "4"]));
    assert!(flagged.contains("# theta = [1.4]"));
    assert!(flagged.contains("# k = [4]"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "thetta = [1.4]\n").unwrap();
    let o = tisgm(&["stability", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn out_dir_from_environment_names_file_after_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tisgm"))
        .args(["phases", "--theta", "1.6"])
        .env("TISGM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let path = dir.path().join("phases.json");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["config"]["command"], "phases");
    assert!(v["results"].is_array());
}

#[test]
fn explicit_out_wins_over_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/ks.csv");
    let o = tisgm(&[
        "ks",
        "--k",
        "2",
        "--theta-range",
        "1.1:3:20",
        "--out",
        out.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(out.exists());
    assert!(!Path::new(&dir.path().join("ks.csv")).exists());
}
