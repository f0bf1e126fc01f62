use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "policy": "priority",
  "scenario": {"n_users": 2},
  "video": {"n_chunks": 6},
  "fusion": {"map_width": 16, "map_height": 8},
  "t_max": 40,
  "eval_episodes": 2
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thz360")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn evaluate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let stdout = ok(&["evaluate", "--config", &cfg, "--seed", "5", "--out", out.to_str().unwrap()]);
        assert!(stdout.starts_with("priority: avg QoE"), "{stdout}");
        files.push(std::fs::read(out.join("metrics.csv")).unwrap());
        assert!(out.join("episodes.jsonl").exists());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files[0].clone()).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("priority,5,"));
}

#[test]
fn policy_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("r");
    ok(&["evaluate", "--config", &cfg, "--policy", "random", "--out", out.to_str().unwrap()]);
    let text = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("random,"));
}

#[test]
fn sweep_collects_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("s");
    ok(&[
        "sweep", "--config", &cfg, "--seeds", "1,2", "--policies", "random,priority", "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let keys: Vec<String> = text.lines().skip(1).map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["random,1", "priority,1", "random,2", "priority,2"]);
    assert!(out.join("priority_seed2").join("episodes.jsonl").exists());
}

#[test]
fn generators_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("g");
    let o = out.to_str().unwrap();
    ok(&["gen-traces", "--config", &cfg, "--out", o]);
    let traces = std::fs::read_to_string(out.join("traces.csv")).unwrap();
    assert!(traces.lines().count() > 1);
    assert!(out.join("train_traces.csv").exists());

    let stdout = ok(&["gen-saliency", "--config", &cfg, "--out", o]);
    assert!(stdout.starts_with("wrote "), "{stdout}");
    assert!(out.join("video_0.smap").exists());
    let first = std::fs::read(out.join("video_0.smap")).unwrap();
    ok(&["gen-saliency", "--config", &cfg, "--out", o]);
    assert_eq!(std::fs::read(out.join("video_0.smap")).unwrap(), first);
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"t_maxx": 5}"#);
    let out = run(&["evaluate", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("t_maxx"), "{err}");

    let out = run(&["evaluate", "--policy", "nonsense"]);
    assert!(!out.status.success());
}
