use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::config::{
    AlgorithmKind, DataSource, ExperimentConfig, ModelKind, PartitionMode, TopologyKind,
};
use super::HarnessError;
use crate::algorithms::checkpoint::{AlgorithmTag, Checkpoint};
use crate::algorithms::{
    centralized_sgd_step, d2_round, dsgd_round, gt_round, lsgt_init, lsgt_round, must_init,
    must_round, AgentState, AlgorithmConfig, AlgorithmError, D2State, DsgdState, MustAgentState,
    MustConfig, RoundReport,
};
use crate::metrics::{
    average, consensus_errors, must_consensus_errors, must_stationarity_gap, stationarity_gap,
    HybridPhi, MetricsRecord,
};
use crate::problems::{
    load_idx, partition_hybrid, partition_iid, partition_noniid_shards, Dataset, HybridProblem,
    LocalProblem, LossModel, Mlp, MlpHead, Partition, PatchCoupling, Quadratic, QuadraticHead,
    SampleHead, SoftmaxRegression,
};
use crate::rng::{derive, purpose, SeedTree};
use crate::topology::{gen_graph, max_degree_mixing, Graph, GraphKind, MixingMatrix};

/// Tags mixed into a trial seed for its data-dependent draws.
const PARTITION_TAG: u64 = 0x7061_7274;
const HEAD_TAG: u64 = 0x6865_6164;

pub const MNIST_MEAN: f64 = 0.1307;
pub const MNIST_STD: f64 = 0.3081;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMetric {
    /// First round with averaged test accuracy at or above the value.
    TestAccuracy,
    /// First round with averaged stationarity gap at or below the value.
    StationarityGap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub metric: ThresholdMetric,
    pub value: f64,
    /// `None` if the series never crossed.
    pub round: Option<usize>,
}

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub algorithm: AlgorithmKind,
    pub config_echo: String,
    pub lambda_w: f64,
    /// Trial-averaged series.
    pub records: Vec<MetricsRecord>,
    pub trials: Vec<Vec<MetricsRecord>>,
    pub thresholds: Vec<Threshold>,
    pub wall_clock: Duration,
}

impl RunOutput {
    pub fn is_hybrid(&self) -> bool {
        self.algorithm == AlgorithmKind::Must
    }

    pub fn final_record(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn rounds_to(&self, metric: ThresholdMetric, value: f64) -> Option<usize> {
        first_crossing(&self.records, metric, value)
    }
}

/// Mixing matrix from the topology section.
pub fn build_mixing(cfg: &ExperimentConfig) -> Result<MixingMatrix, HarnessError> {
    let t = &cfg.topology;
    let graph = match t.kind {
        TopologyKind::File => {
            let path = t.path.as_ref().expect("validated");
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            let g = Graph::parse_edge_list(&text)?;
            if g.n_agents() != t.agents {
                return Err(HarnessError::Mismatch(format!(
                    "topology.agents = {} but {} lists {} agents",
                    t.agents,
                    path.display(),
                    g.n_agents()
                )));
            }
            g
        }
        TopologyKind::Line => gen_graph(GraphKind::Line, t.agents, t.seed)?,
        TopologyKind::Complete => gen_graph(GraphKind::Complete, t.agents, t.seed)?,
        TopologyKind::Random => gen_graph(
            GraphKind::Random {
                p: t.edge_probability.expect("validated"),
            },
            t.agents,
            t.seed,
        )?,
    };
    Ok(max_degree_mixing(&graph)?)
}

/// Training set and optional test set.
pub fn load_data(
    cfg: &ExperimentConfig,
) -> Result<(Arc<Dataset>, Option<Arc<Dataset>>), HarnessError> {
    let d = &cfg.data;
    match d.source {
        DataSource::Synthetic => {
            let mut spec = d.synthetic.expect("validated");
            let train_n = spec.samples;
            spec.samples += d.test_samples;
            let all = Dataset::synthetic(&spec, d.seed)?;
            let train = all.head(train_n);
            let test = (d.test_samples > 0).then(|| {
                let idx: Vec<usize> = (train_n..spec.samples).collect();
                Arc::new(all.subset(&idx))
            });
            Ok((Arc::new(train), test))
        }
        DataSource::Mnist => {
            let limit = |ds: Dataset, l: Option<usize>| {
                let ds = match l {
                    Some(k) => ds.head(k),
                    None => ds,
                };
                if d.normalize {
                    ds.standardized(MNIST_MEAN, MNIST_STD)
                } else {
                    ds
                }
            };
            let train = load_idx(
                d.train_images.as_ref().expect("validated"),
                d.train_labels.as_ref().expect("validated"),
            )?;
            let train = limit(train, d.train_limit);
            let test = match (&d.test_images, &d.test_labels) {
                (Some(i), Some(l)) => Some(Arc::new(limit(load_idx(i, l)?, d.test_limit))),
                _ => None,
            };
            Ok((Arc::new(train), test))
        }
    }
}

pub fn build_model(cfg: &ExperimentConfig, train: &Dataset) -> Arc<dyn LossModel> {
    let (d, c) = (train.n_features(), train.n_classes());
    match cfg.model.kind {
        ModelKind::Mlp => Arc::new(Mlp::new(d, cfg.model.hidden, c)),
        ModelKind::Logistic => {
            Arc::new(SoftmaxRegression::new(d, c).with_nonconvex_penalty(cfg.model.penalty))
        }
        ModelKind::Quadratic => Arc::new(Quadratic::new(d)),
    }
}

/// IID or label-sharded split; the shuffle depends on the trial seed.
pub fn build_partition(
    cfg: &ExperimentConfig,
    train: &Dataset,
    trial_seed: u64,
) -> Result<Partition, HarnessError> {
    let n = cfg.topology.agents;
    let seed = derive(trial_seed, PARTITION_TAG);
    Ok(match cfg.data.partition {
        PartitionMode::Iid => partition_iid(train, n, seed)?,
        PartitionMode::Noniid => {
            partition_noniid_shards(train, n, cfg.data.shards_per_agent, seed)?
        }
        PartitionMode::Hybrid => {
            return Err(HarnessError::Mismatch(
                "hybrid partition has no per-agent sample sets".into(),
            ))
        }
    })
}

pub fn build_hybrid(
    cfg: &ExperimentConfig,
    train: &Arc<Dataset>,
    trial_seed: u64,
) -> Result<HybridProblem, HarnessError> {
    let n = cfg.topology.agents;
    let assignment = partition_hybrid(
        train,
        n,
        cfg.data.patches,
        derive(trial_seed, PARTITION_TAG),
    )?;
    let m = cfg.model.hidden;
    let coupling = PatchCoupling::new(train.clone(), assignment, m)?;
    let head: Arc<dyn SampleHead> = match cfg.model.kind {
        ModelKind::Mlp => Arc::new(MlpHead::new(train.labels().to_vec(), m, train.n_classes())),
        _ => Arc::new(QuadraticHead::random(
            train.n_samples(),
            m,
            m,
            derive(cfg.data.seed, HEAD_TAG),
        )),
    };
    Ok(HybridProblem::new(coupling, head, cfg.run.batch_size)?)
}

/// Execute every seed of `cfg` and average the series.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let w = build_mixing(cfg)?;
    let (train, test) = load_data(cfg)?;
    let mut out = RunOutput {
        algorithm: cfg.run.algorithm,
        config_echo: cfg.to_toml(),
        lambda_w: w.lambda_w(),
        records: Vec::new(),
        trials: Vec::new(),
        thresholds: Vec::new(),
        wall_clock: Duration::ZERO,
    };
    for (k, &seed) in cfg.run.seeds.iter().enumerate() {
        let mut trial = Trial {
            cfg,
            w: &w,
            train: &train,
            test: test.as_deref(),
            seeds: SeedTree::new(seed),
            index: k,
            records: Vec::new(),
        };
        let result = trial.run(seed);
        out.trials.push(std::mem::take(&mut trial.records));
        if let Err(err) = result {
            out.records = average_trials(&out.trials);
            out.thresholds = thresholds(cfg, &out.records, test.is_some());
            out.wall_clock = start.elapsed();
            return Err(match err {
                HarnessError::Algorithm(source) => HarnessError::Diverged {
                    partial: Box::new(out),
                    source,
                },
                other => other,
            });
        }
    }
    out.records = average_trials(&out.trials);
    out.thresholds = thresholds(cfg, &out.records, test.is_some());
    out.wall_clock = start.elapsed();
    Ok(out)
}

fn thresholds(cfg: &ExperimentConfig, records: &[MetricsRecord], has_test: bool) -> Vec<Threshold> {
    let mut out = Vec::new();
    let classifies = records.iter().any(|r| r.test_acc.is_some());
    if has_test && classifies {
        for &value in &cfg.run.accuracy_thresholds {
            out.push(Threshold {
                metric: ThresholdMetric::TestAccuracy,
                value,
                round: first_crossing(records, ThresholdMetric::TestAccuracy, value),
            });
        }
    }
    if let Some(value) = cfg.run.gap_threshold {
        out.push(Threshold {
            metric: ThresholdMetric::StationarityGap,
            value,
            round: first_crossing(records, ThresholdMetric::StationarityGap, value),
        });
    }
    out
}

/// Round of the first record that reaches `value`.
pub fn first_crossing(
    records: &[MetricsRecord],
    metric: ThresholdMetric,
    value: f64,
) -> Option<usize> {
    records
        .iter()
        .find(|r| match metric {
            ThresholdMetric::TestAccuracy => r.test_acc.is_some_and(|a| a >= value),
            ThresholdMetric::StationarityGap => r.stat_gap <= value,
        })
        .map(|r| r.round)
}

/// Pointwise mean over trials, truncated to the shortest series.
pub fn average_trials(trials: &[Vec<MetricsRecord>]) -> Vec<MetricsRecord> {
    let Some(len) = trials.iter().map(Vec::len).min() else {
        return Vec::new();
    };
    let k = trials.len() as f64;
    (0..len)
        .map(|i| {
            let rows: Vec<&MetricsRecord> = trials.iter().map(|t| &t[i]).collect();
            let mean = |f: fn(&MetricsRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
            let test_acc = rows
                .iter()
                .map(|r| r.test_acc)
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / k);
            let hybrid = rows
                .iter()
                .map(|r| r.hybrid)
                .collect::<Option<Vec<HybridPhi>>>()
                .map(|v| HybridPhi {
                    theta: v.iter().map(|h| h.theta).sum::<f64>() / k,
                    x: v.iter().map(|h| h.x).sum::<f64>() / k,
                    z: v.iter().map(|h| h.z).sum::<f64>() / k,
                    u: v.iter().map(|h| h.u).sum::<f64>() / k,
                });
            MetricsRecord {
                round: rows[0].round,
                comm_messages: rows[0].comm_messages,
                train_loss: mean(|r| r.train_loss),
                test_acc,
                stat_gap: mean(|r| r.stat_gap),
                phi_y: mean(|r| r.phi_y),
                phi_v: mean(|r| r.phi_v),
                hybrid,
            }
        })
        .collect()
}

/// Rounds at which metrics are recorded: `0, c, 2c, ...` and `T`.
pub fn eval_rounds(rounds: usize, cadence: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=rounds).step_by(cadence.max(1)).collect();
    if out.last() != Some(&rounds) {
        out.push(rounds);
    }
    out
}

enum Classic {
    Tracking(Vec<AgentState>),
    Dsgd(DsgdState),
    D2(D2State),
    Central(Vec<f64>),
}

struct Trial<'a> {
    cfg: &'a ExperimentConfig,
    w: &'a MixingMatrix,
    train: &'a Arc<Dataset>,
    test: Option<&'a Dataset>,
    seeds: SeedTree,
    index: usize,
    records: Vec<MetricsRecord>,
}

impl Trial<'_> {
    fn run(&mut self, seed: u64) -> Result<(), HarnessError> {
        if self.cfg.run.algorithm == AlgorithmKind::Must {
            self.run_must(seed)
        } else {
            self.run_classic(seed)
        }
    }

    fn should_record(&self, round: usize) -> bool {
        round.is_multiple_of(self.cfg.eval_every()) || round == self.cfg.run.rounds
    }

    fn run_classic(&mut self, seed: u64) -> Result<(), HarnessError> {
        let cfg = self.cfg;
        let model = build_model(cfg, self.train);
        let partition = build_partition(cfg, self.train, seed)?;
        let problem = LocalProblem::new(
            model.clone(),
            self.train.clone(),
            partition,
            cfg.run.batch_size,
        )?;
        let y0 = model.init_params(&mut self.seeds.shared(purpose::MODEL_INIT));
        let acfg =
            AlgorithmConfig::new(cfg.run.stepsize.expect("validated"), cfg.run.local_updates);
        let seeds = self.seeds;

        let mut state = match cfg.run.algorithm {
            AlgorithmKind::Lsgt | AlgorithmKind::Gt => {
                Classic::Tracking(lsgt_init(&problem, &y0, &seeds)?)
            }
            AlgorithmKind::Dsgd => Classic::Dsgd(DsgdState::new(&y0, problem.n_agents())),
            AlgorithmKind::D2 => Classic::D2(D2State::from_common(&y0, self.w)?),
            AlgorithmKind::Centralized => Classic::Central(y0.clone()),
            AlgorithmKind::Must => unreachable!("handled by run_must"),
        };
        let pool: Vec<usize> = (0..self.train.n_samples()).collect();
        let mut messages = 0u64;
        self.records
            .push(self.classic_record(0, messages, &state, &problem)?);
        for r in 0..cfg.run.rounds {
            let report = match &mut state {
                Classic::Tracking(s) => {
                    let step = if cfg.run.algorithm == AlgorithmKind::Lsgt {
                        lsgt_round
                    } else {
                        gt_round
                    };
                    let (next, rep) = step(s, self.w, &acfg, &problem, &seeds, r)?;
                    *s = next;
                    rep
                }
                Classic::Dsgd(s) => {
                    let (next, rep) = dsgd_round(s, self.w, &acfg, &problem, &seeds, r)?;
                    *s = next;
                    rep
                }
                Classic::D2(s) => {
                    let (next, rep) = d2_round(s, self.w, &acfg, &problem, &seeds, r)?;
                    *s = next;
                    rep
                }
                Classic::Central(y) => {
                    for q in 1..=acfg.local_updates {
                        let mut rng = seeds.stream(0, r as u64, q as u64);
                        *y = centralized_sgd_step(
                            y,
                            model.as_ref(),
                            self.train,
                            &pool,
                            cfg.run.batch_size,
                            acfg.stepsize,
                            &mut rng,
                        )
                        .map_err(|e| match e {
                            AlgorithmError::Diverged { .. } => {
                                AlgorithmError::Diverged { round: r, agent: 0 }
                            }
                            other => other,
                        })?;
                    }
                    RoundReport {
                        round: r + 1,
                        ..RoundReport::default()
                    }
                }
            };
            messages += report.messages_sent;
            if self.should_record(r + 1) {
                let rec = self.classic_record(r + 1, messages, &state, &problem)?;
                self.records.push(rec);
            }
            self.maybe_checkpoint(r + 1, || {
                classic_checkpoint(cfg.run.algorithm, r as u64 + 1, &state)
            })?;
        }
        Ok(())
    }

    fn classic_record(
        &self,
        round: usize,
        comm_messages: u64,
        state: &Classic,
        problem: &LocalProblem,
    ) -> Result<MetricsRecord, HarnessError> {
        let n = problem.n_agents();
        let ys: Vec<&[f64]> = match state {
            Classic::Tracking(s) => s.iter().map(|a| a.y.as_slice()).collect(),
            Classic::Dsgd(s) => s.y.iter().map(Vec::as_slice).collect(),
            Classic::D2(s) => s.y.iter().map(Vec::as_slice).collect(),
            Classic::Central(y) => vec![y.as_slice(); n],
        };
        let (phi_y, phi_v) = match state {
            Classic::Tracking(s) => consensus_errors(s),
            Classic::Central(_) => (0.0, 0.0),
            _ => (crate::metrics::consensus_error(&ys), 0.0),
        };
        let y_bar = average(&ys);
        let model = problem.model.as_ref();
        let train_loss = mean_loss(model, self.train, &y_bar);
        let test_acc = match self.test {
            Some(test) if model.predict(&y_bar, test.features(0)).is_some() => {
                Some(problem.evaluate(test, &y_bar)?.1)
            }
            _ => None,
        };
        Ok(MetricsRecord {
            round,
            comm_messages,
            train_loss,
            test_acc,
            stat_gap: stationarity_gap(&ys, problem)?,
            phi_y,
            phi_v,
            hybrid: None,
        })
    }

    fn run_must(&mut self, seed: u64) -> Result<(), HarnessError> {
        let cfg = self.cfg;
        let hp = build_hybrid(cfg, self.train, seed)?;
        let (theta0, x0) = hp.init_params(&mut self.seeds.shared(purpose::MODEL_INIT));
        let (alpha, beta) = cfg.must_stepsizes();
        let mcfg = MustConfig {
            alpha,
            beta,
            local_updates: cfg.run.local_updates,
            coupling_update: cfg.run.coupling_update.into(),
        };
        let mut states = must_init(&hp, &theta0, &x0, &self.seeds)?;
        let mut messages = 0u64;
        self.records.push(self.must_record(0, 0, &states, &hp)?);
        for r in 0..cfg.run.rounds {
            let (next, report) = must_round(&states, self.w, &mcfg, &hp, &self.seeds, r)?;
            states = next;
            messages += report.messages_sent;
            if self.should_record(r + 1) {
                let rec = self.must_record(r + 1, messages, &states, &hp)?;
                self.records.push(rec);
            }
            self.maybe_checkpoint(r + 1, || Checkpoint::from_must(r as u64 + 1, &states))?;
        }
        Ok(())
    }

    fn must_record(
        &self,
        round: usize,
        comm_messages: u64,
        states: &[MustAgentState],
        hp: &HybridProblem,
    ) -> Result<MetricsRecord, HarnessError> {
        let thetas: Vec<&[f64]> = states.iter().map(|s| s.theta.as_slice()).collect();
        let xs: Vec<&[f64]> = states.iter().map(|s| s.x.as_slice()).collect();
        let (theta_bar, x_bar) = (average(&thetas), average(&xs));
        let train_loss = hp.objective(&theta_bar, &x_bar) * hp.n_agents() as f64;
        let probe = vec![0.0; hp.dim_z()];
        let test_acc = match self.test {
            Some(test) if hp.head.classify(&probe, &theta_bar).is_some() => {
                Some(hp.accuracy(test, &theta_bar, &x_bar)?)
            }
            _ => None,
        };
        let phi = must_consensus_errors(states);
        Ok(MetricsRecord {
            round,
            comm_messages,
            train_loss,
            test_acc,
            stat_gap: must_stationarity_gap(hp, states),
            phi_y: phi.theta + phi.x,
            phi_v: phi.u,
            hybrid: Some(phi),
        })
    }

    fn maybe_checkpoint(
        &self,
        round: usize,
        make: impl FnOnce() -> Checkpoint,
    ) -> Result<(), HarnessError> {
        let every = self.cfg.output.checkpoint_every;
        let Some(csv) = &self.cfg.output.csv else {
            return Ok(());
        };
        if every == 0 || !round.is_multiple_of(every) {
            return Ok(());
        }
        let path = checkpoint_path(csv, self.index, round);
        let io = |source| HarnessError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = std::fs::File::create(&path).map_err(io)?;
        make().write_to(std::io::BufWriter::new(file)).map_err(io)
    }
}

fn classic_checkpoint(kind: AlgorithmKind, round: u64, state: &Classic) -> Checkpoint {
    let tag = match kind {
        AlgorithmKind::Lsgt => AlgorithmTag::Lsgt,
        AlgorithmKind::Gt => AlgorithmTag::Gt,
        AlgorithmKind::Dsgd => AlgorithmTag::Dsgd,
        AlgorithmKind::D2 => AlgorithmTag::D2,
        AlgorithmKind::Centralized => AlgorithmTag::Centralized,
        AlgorithmKind::Must => AlgorithmTag::Must,
    };
    let single = |ys: Vec<Vec<f64>>| Checkpoint {
        tag,
        round,
        dim: ys.first().map_or(0, |y| y.len() as u64),
        agents: ys.into_iter().map(|y| vec![y]).collect(),
    };
    match state {
        Classic::Tracking(s) => Checkpoint::from_lsgt(tag, round, s),
        Classic::Dsgd(s) => single(s.y.clone()),
        Classic::D2(s) => single(s.y.clone()),
        Classic::Central(y) => single(vec![y.clone()]),
    }
}

/// `<csv stem>.trial<k>.round<r>.ckpt` next to the CSV.
pub fn checkpoint_path(csv: &Path, trial: usize, round: usize) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    csv.with_file_name(format!("{stem}.trial{trial}.round{round}.ckpt"))
}

/// Mean per-sample loss over the whole dataset plus the model penalty.
fn mean_loss(model: &dyn LossModel, data: &Dataset, params: &[f64]) -> f64 {
    let total: f64 = (0..data.n_samples())
        .map(|i| model.sample_loss(params, data.features(i), data.label(i)))
        .sum();
    total / data.n_samples() as f64 + model.penalty(params, None)
}
