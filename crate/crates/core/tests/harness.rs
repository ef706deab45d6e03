use std::path::Path;

use localgt::harness::{
    config_echo_path, parse_csv, records_to_csv, run_experiment, run_sweep, trial_csv_path,
    write_outputs, ExperimentConfig, HarnessError, SweepAxis,
};

const BASE: &str = r#"
[run]
algorithm = "lsgt"
rounds = 12
local_updates = 3
stepsize = 0.05
batch_size = 4
seeds = [1, 2, 3]

[topology]
kind = "random"
agents = 6
edge_probability = 0.5
seed = 3

[data]
source = "synthetic"
partition = "iid"
synthetic = { samples = 120, features = 4, classes = 3, separation = 2.0 }
test_samples = 30

[model]
kind = "logistic"
penalty = 0.05
"#;

fn cfg(edit: impl Fn(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml_str(BASE, Path::new(".")).unwrap();
    edit(&mut c);
    c
}

#[test]
fn zero_rounds_give_one_record() {
    let out = run_experiment(&cfg(|c| c.run.rounds = 0)).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.records[0].round, 0);
    let text = records_to_csv(&out.records, false);
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn record_count_follows_cadence() {
    for (t, c) in [(12, 1), (12, 5), (10, 3)] {
        let out = run_experiment(&cfg(|x| {
            x.run.rounds = t;
            x.run.eval_every = Some(c);
            x.run.seeds = vec![1];
        }))
        .unwrap();
        assert_eq!(out.records.len(), t.div_ceil(c) + 1);
        assert_eq!(out.records.last().unwrap().round, t);
    }
}

#[test]
fn averaged_series_is_trial_mean() {
    let out = run_experiment(&cfg(|_| {})).unwrap();
    assert_eq!(out.trials.len(), 3);
    for (i, rec) in out.records.iter().enumerate() {
        let mean = out.trials.iter().map(|t| t[i].stat_gap).sum::<f64>() / 3.0;
        assert!((rec.stat_gap - mean).abs() <= 1e-15 * mean.max(1.0));
        let acc = out
            .trials
            .iter()
            .map(|t| t[i].test_acc.unwrap())
            .sum::<f64>()
            / 3.0;
        assert!((rec.test_acc.unwrap() - acc).abs() <= 1e-15);
    }
}

#[test]
fn every_algorithm_runs_and_descends() {
    use localgt::harness::config::AlgorithmKind::*;
    for algo in [Lsgt, Gt, Dsgd, D2, Centralized] {
        let out = run_experiment(&cfg(|c| {
            c.run.algorithm = algo;
            c.run.rounds = 40;
        }))
        .unwrap();
        let (first, last) = (&out.records[0], out.final_record().unwrap());
        assert!(last.train_loss < first.train_loss, "{algo:?}");
        if algo == Centralized {
            assert_eq!(last.comm_messages, 0);
            assert_eq!(last.phi_y, 0.0);
        } else {
            assert!(last.comm_messages > 0, "{algo:?}");
        }
    }
}

#[test]
fn must_run_reports_hybrid_columns() {
    let text = r#"
[run]
algorithm = "must"
rounds = 15
local_updates = 2
alpha = 0.05
beta = 0.05
batch_size = 3
seeds = [4]

[topology]
kind = "complete"
agents = 3

[data]
source = "synthetic"
partition = "hybrid"
synthetic = { samples = 18, features = 6, classes = 3, separation = 2.0 }
test_samples = 9

[model]
kind = "mlp"
hidden = 4
"#;
    let c = ExperimentConfig::from_toml_str(text, Path::new(".")).unwrap();
    let out = run_experiment(&c).unwrap();
    assert!(out.is_hybrid());
    let csv = records_to_csv(&out.records, true);
    assert!(
        csv.starts_with("round,comm_messages,train_loss,test_acc,stat_gap,phi_y,phi_v,phi_theta")
    );
    let last = out.final_record().unwrap();
    let h = last.hybrid.unwrap();
    assert!((last.phi_y - (h.theta + h.x)).abs() < 1e-15);
    assert!(last.stat_gap < out.records[0].stat_gap);
}

#[test]
fn csv_files_round_trip_and_echo_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let c = cfg(|_| {});
    let out = run_experiment(&c).unwrap();
    write_outputs(&out, &path, true).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(parse_csv(&text).unwrap(), out.records);
    for k in 0..3 {
        let t = std::fs::read_to_string(trial_csv_path(&path, k)).unwrap();
        assert_eq!(parse_csv(&t).unwrap(), out.trials[k]);
    }
    let echo = std::fs::read_to_string(config_echo_path(&path)).unwrap();
    let again = ExperimentConfig::from_toml_str(&echo, Path::new(".")).unwrap();
    let out2 = run_experiment(&again).unwrap();
    assert_eq!(records_to_csv(&out2.records, false), text);
}

#[test]
fn single_value_sweep_equals_run() {
    let c = cfg(|_| {});
    let points = run_sweep(&c, SweepAxis::E, &["3".into()]).unwrap();
    let direct = run_experiment(&c).unwrap();
    assert_eq!(points[0].output.records, direct.records);
}

#[test]
fn topology_sweep_orders_lambda() {
    let c = cfg(|x| x.run.rounds = 2);
    let values: Vec<String> = ["line", "random", "complete"].map(String::from).to_vec();
    let points = run_sweep(&c, SweepAxis::Topology, &values).unwrap();
    let l: Vec<f64> = points.iter().map(|p| p.output.lambda_w).collect();
    assert!(l[0] > l[1] && l[1] > l[2], "{l:?}");
    let table = localgt::harness::comparison_table(SweepAxis::Topology, &points);
    assert_eq!(table.lines().count(), 4);
    assert!(table.starts_with("topology,lambda_w"));
}

#[test]
fn invalid_sweep_value_aborts_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("never.csv");
    let c = cfg(|x| {
        x.output.checkpoint_every = 1;
        x.output.csv = Some(path.clone());
    });
    let err = run_sweep(&c, SweepAxis::Gamma, &["0.1".into(), "-1".into()]).unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn divergence_carries_partial_output() {
    let c = cfg(|x| {
        x.run.stepsize = Some(1e14);
        x.run.rounds = 50;
    });
    match run_experiment(&c) {
        Err(HarnessError::Diverged { partial, .. }) => {
            assert!(!partial.records.is_empty());
            assert_eq!(partial.records[0].round, 0);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn checkpoints_are_written_at_cadence() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(|x| {
        x.output.csv = Some(dir.path().join("run.csv"));
        x.output.checkpoint_every = 4;
        x.run.seeds = vec![1];
    });
    run_experiment(&c).unwrap();
    for r in [4, 8, 12] {
        let p = localgt::harness::checkpoint_path(&dir.path().join("run.csv"), 0, r);
        let ck =
            localgt::algorithms::checkpoint::Checkpoint::read_from(std::fs::File::open(p).unwrap())
                .unwrap();
        assert_eq!(ck.round, r as u64);
        assert_eq!(ck.agents.len(), 6);
    }
}
