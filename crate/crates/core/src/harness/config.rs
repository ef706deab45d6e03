//! Experiment configuration (TOML).
//!
//! ```toml
//! [run]
//! algorithm = "lsgt"          # lsgt | gt | dsgd | d2 | centralized | must
//! rounds = 150
//! local_updates = 10
//! stepsize = 1e-3             # alpha/beta for must (default: stepsize)
//! batch_size = 32
//! seeds = [1, 2, 3]
//! eval_every = 5              # default 1 (synthetic) or 5 (mnist)
//!
//! [topology]
//! kind = "random"             # random | line | complete | file
//! agents = 20
//! edge_probability = 0.3
//!
//! [data]
//! source = "mnist"            # mnist | synthetic
//! partition = "noniid"        # iid | noniid | hybrid
//! train_images = "data/mnist/train-images-idx3-ubyte"
//! ...
//!
//! [model]
//! kind = "mlp"                # mlp | logistic | quadratic
//!
//! [output]
//! csv = "out/run.csv"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::CouplingUpdate;
use crate::problems::SyntheticSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Lsgt,
    Gt,
    Dsgd,
    D2,
    Centralized,
    Must,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lsgt => "lsgt",
            Self::Gt => "gt",
            Self::Dsgd => "dsgd",
            Self::D2 => "d2",
            Self::Centralized => "centralized",
            Self::Must => "must",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Random,
    Line,
    Complete,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Mnist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    Noniid,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Logistic,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    #[default]
    Tracking,
    MixedAnchor,
}

impl From<CouplingMode> for CouplingUpdate {
    fn from(m: CouplingMode) -> Self {
        match m {
            CouplingMode::Tracking => CouplingUpdate::Tracking,
            CouplingMode::MixedAnchor => CouplingUpdate::MixedAnchor,
        }
    }
}

fn one() -> usize {
    1
}

fn default_thresholds() -> Vec<f64> {
    vec![0.85, 0.90, 0.95]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: AlgorithmKind,
    pub rounds: usize,
    #[serde(default = "one")]
    pub local_updates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stepsize: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    #[serde(default = "default_thresholds")]
    pub accuracy_thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_threshold: Option<f64>,
    #[serde(default)]
    pub coupling_update: CouplingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub kind: TopologyKind,
    pub agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Graph seed; the graph stays fixed across trials.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    pub partition: PartitionMode,
    #[serde(default = "two")]
    pub shards_per_agent: usize,
    #[serde(default = "two")]
    pub patches: usize,
    /// Seed of the synthetic generator (data stay fixed across trials).
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Extra synthetic samples drawn from the same clusters for testing.
    #[serde(default)]
    pub test_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
    /// Standardize MNIST pixels with the usual mean 0.1307 and std 0.3081.
    #[serde(default)]
    pub normalize: bool,
}

fn two() -> usize {
    2
}

fn thirty() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default = "thirty")]
    pub hidden: usize,
    /// Weight of the non-convex penalty `sum w^2/(1+w^2)` (logistic only).
    #[serde(default)]
    pub penalty: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden: thirty(),
            penalty: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub per_trial: bool,
    /// Write a checkpoint every this many rounds (0 disables).
    #[serde(default)]
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub topology: TopologySection,
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Read, resolve relative paths against the file's directory, validate.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// TOML text that reproduces this configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.topology.path);
        fix(&mut self.data.train_images);
        fix(&mut self.data.train_labels);
        fix(&mut self.data.test_images);
        fix(&mut self.data.test_labels);
        fix(&mut self.output.csv);
    }

    pub fn eval_every(&self) -> usize {
        self.run.eval_every.unwrap_or(match self.data.source {
            DataSource::Synthetic => 1,
            DataSource::Mnist => 5,
        })
    }

    /// `(alpha, beta)` for MUST.
    pub fn must_stepsizes(&self) -> (f64, f64) {
        let s = self.run.stepsize.unwrap_or(f64::NAN);
        (self.run.alpha.unwrap_or(s), self.run.beta.unwrap_or(s))
    }

    /// Cross-field checks; every error names the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let run = &self.run;
        if run.seeds.is_empty() {
            return Err(invalid("run.seeds", "at least one seed is required"));
        }
        if run.local_updates == 0 {
            return Err(invalid("run.local_updates", "must be at least 1"));
        }
        if run.batch_size == 0 {
            return Err(invalid("run.batch_size", "must be at least 1"));
        }
        if run.eval_every == Some(0) {
            return Err(invalid("run.eval_every", "must be at least 1"));
        }
        let positive = |field: &'static str, v: Option<f64>| match v {
            Some(x) if x > 0.0 && x.is_finite() => Ok(()),
            Some(x) => Err(invalid(
                field,
                format!("{x} is not a positive finite number"),
            )),
            None => Err(invalid(field, "missing")),
        };
        if run.algorithm == AlgorithmKind::Must {
            let (a, b) = self.must_stepsizes();
            positive("run.alpha", Some(a).filter(|v| !v.is_nan()))?;
            positive("run.beta", Some(b).filter(|v| !v.is_nan()))?;
        } else {
            positive("run.stepsize", run.stepsize)?;
        }
        for t in &run.accuracy_thresholds {
            if !(0.0..=1.0).contains(t) {
                return Err(invalid(
                    "run.accuracy_thresholds",
                    format!("{t} not in [0, 1]"),
                ));
            }
        }
        if let Some(g) = run.gap_threshold {
            positive("run.gap_threshold", Some(g))?;
        }

        let topo = &self.topology;
        if topo.agents == 0 {
            return Err(invalid("topology.agents", "must be at least 1"));
        }
        match topo.kind {
            TopologyKind::Random => {
                let p = topo.edge_probability.ok_or_else(|| {
                    invalid("topology.edge_probability", "required for random graphs")
                })?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(invalid(
                        "topology.edge_probability",
                        format!("{p} not in (0, 1]"),
                    ));
                }
            }
            TopologyKind::File => {
                let path = topo
                    .path
                    .as_ref()
                    .ok_or_else(|| invalid("topology.path", "required for file topologies"))?;
                if !path.is_file() {
                    return Err(invalid(
                        "topology.path",
                        format!("{} not found", path.display()),
                    ));
                }
            }
            TopologyKind::Line | TopologyKind::Complete => {}
        }

        let data = &self.data;
        let hybrid = data.partition == PartitionMode::Hybrid;
        if hybrid != (run.algorithm == AlgorithmKind::Must) {
            return Err(invalid(
                "data.partition",
                "the hybrid partition is used by, and only by, algorithm = \"must\"",
            ));
        }
        if hybrid && data.patches == 0 {
            return Err(invalid("data.patches", "must be at least 1"));
        }
        if data.partition == PartitionMode::Noniid && data.shards_per_agent == 0 {
            return Err(invalid("data.shards_per_agent", "must be at least 1"));
        }
        match data.source {
            DataSource::Synthetic => {
                let spec = data
                    .synthetic
                    .ok_or_else(|| invalid("data.synthetic", "required for synthetic data"))?;
                if spec.samples == 0 || spec.features == 0 || spec.classes == 0 {
                    return Err(invalid(
                        "data.synthetic",
                        "samples, features and classes must be positive",
                    ));
                }
            }
            DataSource::Mnist => {
                for (field, p) in [
                    ("data.train_images", &data.train_images),
                    ("data.train_labels", &data.train_labels),
                ] {
                    let p = p
                        .as_ref()
                        .ok_or_else(|| invalid(field, "required for mnist"))?;
                    if !p.is_file() {
                        return Err(invalid(field, format!("{} not found", p.display())));
                    }
                }
                match (&data.test_images, &data.test_labels) {
                    (None, None) => {}
                    (Some(i), Some(l)) => {
                        for (field, p) in [("data.test_images", i), ("data.test_labels", l)] {
                            if !p.is_file() {
                                return Err(invalid(field, format!("{} not found", p.display())));
                            }
                        }
                    }
                    _ => {
                        return Err(invalid(
                            "data.test_images",
                            "test images and labels must be given together",
                        ))
                    }
                }
            }
        }

        let model = &self.model;
        if model.hidden == 0 {
            return Err(invalid("model.hidden", "must be at least 1"));
        }
        if !(model.penalty >= 0.0 && model.penalty.is_finite()) {
            return Err(invalid("model.penalty", "must be non-negative"));
        }
        if hybrid && model.kind == ModelKind::Logistic {
            return Err(invalid("model.kind", "hybrid runs need mlp or quadratic"));
        }
        Ok(())
    }

    /// Apply a sweep axis value.
    pub fn with_axis(&self, axis: SweepAxis, value: &str) -> Result<Self, ConfigError> {
        let mut cfg = self.clone();
        match axis {
            SweepAxis::E => {
                cfg.run.local_updates = value.parse().map_err(|_| {
                    invalid("run.local_updates", format!("`{value}` is not an integer"))
                })?;
            }
            SweepAxis::Gamma => {
                let g: f64 = value
                    .parse()
                    .map_err(|_| invalid("run.stepsize", format!("`{value}` is not a number")))?;
                cfg.run.stepsize = Some(g);
                if cfg.run.algorithm == AlgorithmKind::Must {
                    cfg.run.alpha = Some(g);
                    cfg.run.beta = Some(g);
                }
            }
            SweepAxis::Topology => {
                cfg.topology.kind = parse_enum(value, "topology.kind")?;
                if cfg.topology.kind == TopologyKind::Random
                    && cfg.topology.edge_probability.is_none()
                {
                    return Err(invalid(
                        "topology.edge_probability",
                        "required for random graphs",
                    ));
                }
            }
            SweepAxis::Partition => {
                cfg.data.partition = parse_enum(value, "data.partition")?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_enum<T: for<'de> Deserialize<'de>>(
    value: &str,
    field: &'static str,
) -> Result<T, ConfigError> {
    T::deserialize(toml::Value::String(value.to_string()))
        .map_err(|_| invalid(field, format!("unknown value `{value}`")))
}

/// Axes a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    E,
    Gamma,
    Topology,
    Partition,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "e" | "local_updates" => Ok(Self::E),
            "gamma" | "stepsize" => Ok(Self::Gamma),
            "topology" => Ok(Self::Topology),
            "partition" => Ok(Self::Partition),
            _ => Err(format!(
                "unknown axis `{s}` (expected e, gamma, topology or partition)"
            )),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::E => "e",
            Self::Gamma => "gamma",
            Self::Topology => "topology",
            Self::Partition => "partition",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[run]
algorithm = "lsgt"
rounds = 10
local_updates = 2
stepsize = 0.01
batch_size = 4
seeds = [1]

[topology]
kind = "random"
agents = 4
edge_probability = 0.5

[data]
source = "synthetic"
partition = "iid"
synthetic = { samples = 40, features = 3, classes = 2, separation = 2.0 }

[model]
kind = "logistic"
"#;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml_str(text, Path::new("."))
    }

    fn field_of(err: ConfigError) -> &'static str {
        match err {
            ConfigError::Invalid { field, .. } => field,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn base_parses_with_defaults() {
        let cfg = parse(BASE).unwrap();
        assert_eq!(cfg.eval_every(), 1);
        assert_eq!(cfg.run.accuracy_thresholds, vec![0.85, 0.90, 0.95]);
        assert_eq!(cfg.data.shards_per_agent, 2);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = BASE.replace("batch_size = 4", "batch_size = 4\nbatchsize = 4");
        assert!(matches!(parse(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn errors_name_fields() {
        let cases = [
            ("stepsize = 0.01", "stepsize = -1.0", "run.stepsize"),
            ("seeds = [1]", "seeds = []", "run.seeds"),
            (
                "edge_probability = 0.5",
                "edge_probability = 1.5",
                "topology.edge_probability",
            ),
            (
                "algorithm = \"lsgt\"",
                "algorithm = \"must\"",
                "data.partition",
            ),
            (
                "partition = \"iid\"",
                "partition = \"hybrid\"",
                "data.partition",
            ),
        ];
        for (from, to, field) in cases {
            let err = parse(&BASE.replace(from, to)).unwrap_err();
            assert_eq!(field_of(err), field, "{to}");
        }
    }

    #[test]
    fn must_needs_stepsizes() {
        let text = BASE
            .replace("algorithm = \"lsgt\"", "algorithm = \"must\"")
            .replace("partition = \"iid\"", "partition = \"hybrid\"")
            .replace("kind = \"logistic\"", "kind = \"quadratic\"")
            .replace("stepsize = 0.01\n", "");
        assert_eq!(field_of(parse(&text).unwrap_err()), "run.alpha");
        let ok = text.replace("batch_size = 4", "batch_size = 4\nalpha = 0.1\nbeta = 0.2");
        assert_eq!(parse(&ok).unwrap().must_stepsizes(), (0.1, 0.2));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse(BASE).unwrap();
        assert_eq!(parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn missing_mnist_file_is_reported() {
        let text = BASE.replace(
            "source = \"synthetic\"",
            "source = \"mnist\"\ntrain_images = \"nope\"\ntrain_labels = \"nope\"",
        );
        assert_eq!(field_of(parse(&text).unwrap_err()), "data.train_images");
    }

    #[test]
    fn axis_overrides() {
        let cfg = parse(BASE).unwrap();
        assert_eq!(
            cfg.with_axis(SweepAxis::E, "5").unwrap().run.local_updates,
            5
        );
        assert_eq!(
            cfg.with_axis(SweepAxis::Topology, "line")
                .unwrap()
                .topology
                .kind,
            TopologyKind::Line
        );
        assert!(cfg.with_axis(SweepAxis::Topology, "torus").is_err());
        assert!(cfg.with_axis(SweepAxis::Partition, "hybrid").is_err());
        assert_eq!("gamma".parse::<SweepAxis>().unwrap(), SweepAxis::Gamma);
    }
}
