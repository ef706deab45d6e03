use std::path::Path;
use std::process::{Command, Output};

const GOOD: &str = r#"
[run]
algorithm = "lsgt"
rounds = 20
local_updates = 10
stepsize = 0.05
batch_size = 4
seeds = [1, 2]

[topology]
kind = "random"
agents = 5
edge_probability = 0.5
seed = 2

[data]
source = "synthetic"
partition = "iid"
synthetic = { samples = 100, features = 4, classes = 3, separation = 2.0 }

[model]
kind = "logistic"
penalty = 0.05
"#;

fn localgt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_localgt"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_prints_ok() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "good.toml", GOOD);
    let out = localgt(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "OK\n");
}

#[test]
fn invalid_config_is_usage_error_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        &GOOD.replace("stepsize = 0.05", "stepsize = -0.05"),
    );
    let out = localgt(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.stepsize"));
}

#[test]
fn unknown_flag_prints_usage() {
    let out = localgt(&["run", "x.toml", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn spectral_of_complete_graph_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(
        dir.path(),
        "complete4.edges",
        "N 4\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n",
    );
    let out = localgt(&["spectral", &edges]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "lambda_w 0.0\n");
}

#[test]
fn run_writes_csv_and_descends() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "lsgt_e10.toml", GOOD);
    let csv = dir.path().join("out.csv");
    let out = localgt(&[
        "run",
        &cfg,
        "--out",
        csv.to_str().unwrap(),
        "--quiet",
        "--per-trial",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stderr.is_empty());
    let text = std::fs::read_to_string(&csv).unwrap();
    let gap = |line: &str| line.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 22);
    assert!(gap(rows[rows.len() - 1]) < gap(rows[1]));
    assert!(dir.path().join("out.trial1.csv").exists());
    assert!(dir.path().join("out.config.toml").exists());
}

#[test]
fn seed_override_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", GOOD);
    let run = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let o = localgt(&[
            "run",
            &cfg,
            "--seed",
            seed,
            "--out",
            p.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(p).unwrap()
    };
    assert_eq!(run("a.csv", "9"), run("b.csv", "9"));
    assert_ne!(run("a.csv", "9"), run("c.csv", "10"));
}

#[test]
fn sweep_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", GOOD);
    let out = localgt(&["sweep", &cfg, "--axis", "e", "--values", "1,5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("e,lambda_w,"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn partition_dump_lists_agents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", GOOD);
    let out = localgt(&["partition-dump", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().filter(|l| !l.is_empty()).count(), 5);
}

#[test]
fn divergence_exits_with_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &GOOD.replace("stepsize = 0.05", "stepsize = 1e14"),
    );
    let csv = dir.path().join("partial.csv");
    let out = localgt(&["run", &cfg, "--out", csv.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(std::fs::read_to_string(csv).unwrap().lines().count() >= 2);
}
