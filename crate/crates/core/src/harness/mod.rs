//! Configured experiment runs, CSV output and parameter sweeps.

pub mod config;
mod csv;
mod run;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

use crate::algorithms::AlgorithmError;
use crate::problems::ProblemError;
use crate::topology::TopologyError;

pub use config::{ConfigError, ExperimentConfig, SweepAxis};
pub use csv::{
    config_echo_path, csv_header, parse_csv, records_to_csv, trial_csv_path, write_outputs,
};
pub use run::{
    average_trials, build_hybrid, build_mixing, build_model, build_partition, checkpoint_path,
    eval_rounds, first_crossing, load_data, run_experiment, RunOutput, Threshold, ThresholdMetric,
};
pub use sweep::{comparison_table, run_sweep, SweepPoint};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Mismatch(String),
    /// The run blew up; `partial` holds every record produced before that.
    #[error("{source}")]
    Diverged {
        partial: Box<RunOutput>,
        #[source]
        source: AlgorithmError,
    },
}
