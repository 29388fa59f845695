use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusecurr")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["synth"]).status.code(), Some(1));
    assert_eq!(run(&["degrade", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_pgm_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.pgm");
    std::fs::write(&bad, b"P5\n8 8\n255\n\x01\x02").unwrap();
    let out = run(&["degrade", "--in", p(&bad), "--out", p(&dir.path().join("o.pgm"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ParseError"));
}

#[test]
fn bad_config_value_is_a_runtime_error() {
    let out = run(&["train", "--crop", "20", "--dump-config"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ConfigError"));
}

#[test]
fn metrics_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(run(&["synth", "--out", p(&data), "--pairs", "2", "--size", "32"]).status.success());
    let csv = dir.path().join("m.csv");
    assert!(run(&["metrics", "--data", p(&data), "--out", p(&csv)]).status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path,ag,sf,ei,en,sd,viff,iqa"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn degrade_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(run(&["synth", "--out", p(&data), "--pairs", "1", "--size", "32", "--seed", "3"]).status.success());
    let out = dir.path().join("d.pgm");
    let status = run(&["degrade", "--in", p(&data.join("pair000_vi.pgm")), "--out", p(&out), "--blur", "0.5", "--noise", "0.3"]);
    assert!(status.status.success());
    assert!(fusecurr::imgio::load_pgm(&out).is_ok());
    let eval = dir.path().join("eval");
    assert!(run(&["eval", "--ckpt", "rule", "--data", p(&data), "--out", p(&eval)]).status.success());
    let text = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert!(text.lines().last().unwrap().starts_with("mean,"));
}
