use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_mdpsmc");

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn bounce_args(sub: &str) -> Vec<String> {
    let m = models();
    vec![
        sub.into(),
        "--model".into(),
        m.join("bounce.mdp").display().to_string(),
        "--property".into(),
        m.join("bounce.prop").display().to_string(),
    ]
}

fn mdpsmc(args: &[String]) -> Output {
    Command::new(BIN).args(args).env_remove("MDPSMC_HASH_MODULUS").output().unwrap()
}

fn with(mut base: Vec<String>, extra: &[&str]) -> Vec<String> {
    base.extend(extra.iter().map(|s| s.to_string()));
    base
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn estimate_writes_json_and_cdf() {
    let dir = tempfile::tempdir().unwrap();
    let result = dir.path().join("r.json");
    let csv = dir.path().join("cdf.csv");
    let args = with(
        bounce_args("estimate"),
        &["--epsilon", "0.1", "--delta", "0.1", "--schedulers", "20", "--seed", "5"],
    );
    let args = with(args, &["--output", result.to_str().unwrap(), "--cdf", csv.to_str().unwrap()]);
    let out = mdpsmc(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(v["algorithm"], "extremal-estimation");
    assert_eq!(v["parameters"]["master_seed"], 5);
    assert_eq!(v["parameters"]["horizon"], 6);
    assert_eq!(v["parameters"]["scheduler_mode"], "general");
    let est = &v["result"]["estimation"];
    assert_eq!(est["per_scheduler"].as_array().unwrap().len(), 20);
    assert_eq!(est["plan"]["samples"], 298);
    assert!(v["execution"]["wall_clock_seconds"].is_number());

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = csv_text.lines();
    assert_eq!(lines.next(), Some("estimate,cumulative_fraction"));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[1], 1.0);
    assert_eq!(last[0], est["p_hat_max"].as_f64().unwrap());

    // the cdf subcommand reproduces the file from the JSON result
    let again = dir.path().join("again.csv");
    let out = mdpsmc(&[
        "cdf".into(),
        "--input".into(),
        result.display().to_string(),
        "--output".into(),
        again.display().to_string(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&again).unwrap(), csv_text);
}

#[test]
fn seed_is_echoed_when_not_given() {
    let out = mdpsmc(&with(bounce_args("estimate"), &["--epsilon", "0.2", "--delta", "0.2", "--schedulers", "3"]));
    assert!(out.status.success());
    assert!(json(&out)["parameters"]["master_seed"].is_u64());
}

#[test]
fn check_exit_status_reflects_acceptance() {
    let base = with(
        bounce_args("check"),
        &["--hypothesis", "geq", "--threshold", "0.3", "--theta", "0.02", "--schedulers", "300", "--seed", "1"],
    );
    let out = mdpsmc(&base);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["algorithm"], "hypothesis-test");
    assert_eq!(v["result"]["hypothesis-test"]["outcome"]["status"], "accepted");

    let out = mdpsmc(&with(base, &["--memoryless"]));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["result"]["hypothesis-test"]["outcome"]["status"], "not-accepted");
}

#[test]
fn simulate_prints_trace_and_verdict() {
    let out = mdpsmc(&with(bounce_args("simulate"), &["--sigma", "12", "--prob-seed", "34"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let verdict = *lines.last().unwrap();
    assert!(verdict == "SAT" || verdict == "UNSAT");
    let steps: Vec<&str> = lines.iter().copied().filter(|l| !l.starts_with('#') && *l != verdict).collect();
    assert!(!steps.is_empty() && steps.len() <= 7);
    for (i, line) in steps.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields[0], i.to_string());
        assert!(fields[1] == "0" || fields[1] == "1");
    }
    let again = mdpsmc(&with(bounce_args("simulate"), &["--sigma", "12", "--prob-seed", "34"]));
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn invalid_parameters_exit_with_three() {
    let cases: [&[&str]; 6] = [
        &["--epsilon", "0.1", "--delta", "0.1", "--schedulers", "0"],
        &["--epsilon", "0", "--delta", "0.1", "--schedulers", "1"],
        &["--epsilon", "0.1", "--delta", "1.5", "--schedulers", "1"],
        &["--epsilon", "0.1", "--delta", "0.1", "--schedulers", "1", "--jobs", "0"],
        &["--epsilon", "0.1", "--delta", "0.1", "--schedulers", "1", "--modulus", "15"],
        &["--epsilon", "0.1", "--delta", "0.1"],
    ];
    for extra in cases {
        let out = mdpsmc(&with(bounce_args("estimate"), extra));
        assert_eq!(out.status.code(), Some(3), "{extra:?}");
    }
    let out = mdpsmc(&with(
        bounce_args("check"),
        &["--hypothesis", "geq", "--threshold", "0.3", "--theta", "0", "--schedulers", "3"],
    ));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreadable_or_malformed_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mdp");
    std::fs::write(&bad, "var x : [0..1] init 0;\n[a] x = 0 -> 0.5 : (x' = 1) + 0.2 : true;\n").unwrap();
    let args = |model: &Path| {
        vec![
            "simulate".to_string(),
            "--model".into(),
            model.display().to_string(),
            "--property".into(),
            models().join("bounce.prop").display().to_string(),
            "--sigma".into(),
            "1".into(),
            "--prob-seed".into(),
            "1".into(),
        ]
    };
    let out = mdpsmc(&args(&bad));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.mdp"));
    assert_eq!(mdpsmc(&args(&dir.path().join("missing.mdp"))).status.code(), Some(2));

    let unbounded = dir.path().join("g.prop");
    std::fs::write(&unbounded, "G loc = 0").unwrap();
    let mut a = bounce_args("simulate");
    a[4] = unbounded.display().to_string();
    let out = mdpsmc(&with(a, &["--sigma", "1", "--prob-seed", "1"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn modulus_override() {
    let args = with(bounce_args("estimate"), &["--epsilon", "0.2", "--delta", "0.2", "--schedulers", "2", "--seed", "1"]);
    let out = Command::new(BIN).args(&args).env("MDPSMC_HASH_MODULUS", "1000003").output().unwrap();
    assert!(out.status.success());
    assert_eq!(json(&out)["parameters"]["hash_modulus"], 1_000_003);
    assert!(String::from_utf8_lossy(&out.stderr).contains("modulus"));

    let out = mdpsmc(&with(args.clone(), &["--modulus", "2305843009213693951"]));
    assert_eq!(json(&out)["parameters"]["hash_modulus"], 2_305_843_009_213_693_951u64);

    let out = Command::new(BIN).args(&args).env("MDPSMC_HASH_MODULUS", "twelve").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_succeeds() {
    let out = Command::new(BIN).arg("--help").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("estimate"));
}
