use std::path::Path;
use std::process::{Command, Output};

use discreg::config::ExperimentConfig;

fn discreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_discreg")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.conf", "kind = sequential-demo\n[sequential]\nalpha_zero = 1\n");
    let out = discreg(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sequential.alpha_zero") && err.contains("line 3"), "{err}");
}

#[test]
fn validate_echoes_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.conf", "kind = rate-study\n[linear]\nn = 5\n");
    let out = discreg(&["validate", &cfg, "--seed", "42"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = ExperimentConfig::parse(&text).unwrap();
    assert_eq!(parsed.seed, 42);
    assert_eq!(parsed.linear.n, 5);
    assert_eq!(parsed.to_text(), text);
}

#[test]
fn summary_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.conf", "kind = sequential-demo\nworkers = 1\n");
    let o = dir.path().join("o");
    let out = discreg(&["run", &cfg, "--out", o.to_str().unwrap()]);
    assert!(out.status.success());
    let summary = std::fs::read_to_string(o.join("summary.txt")).unwrap();
    let parsed = ExperimentConfig::parse(&summary).unwrap();
    assert_eq!(parsed, ExperimentConfig::parse(&parsed.to_text()).unwrap());
    assert!(summary.contains("# k = 3"));
}

#[test]
fn exhaustion_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "q.conf", "kind = sequential-demo\n[sequential]\nkmax = 1\n");
    let out = discreg(&["run", &cfg, "--out", dir.path().join("q").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    // noise far above the data: no residual can reach τδ
    let cfg = write(dir.path(), "r.conf", "[linear]\nn = 6\ndeltas = 100, 200, 300\n");
    let o = dir.path().join("r");
    let out = discreg(&["rates", &cfg, "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let csv = std::fs::read_to_string(o.join("rates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn oracle_verb_reports_the_worst_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.conf", "[linear]\ninstances = 5\n");
    let out = discreg(&["oracle", &cfg, "--out", dir.path().join("o").to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.starts_with("max relative error")).unwrap();
    let v: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(v <= 1e-6);
}
