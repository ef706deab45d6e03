//! Local objectives, datasets, partitions and gradient oracles.
//!
//! Two problem classes are supported:
//!
//! - the classic consensus problem `min_y (1/N) sum_n f_n(y)` where
//!   `f_n` is the mean per-sample loss over agent `n`'s partition
//!   ([`LossModel`], [`LocalProblem`]);
//! - the hybrid problem `min_{x,theta} (1/(N S)) sum_i f_i(B_i x, theta)`
//!   where every agent sees only a block of each sample's features through
//!   `B_{n,i}` with `sum_n B_{n,i} = B_i` ([`hybrid`]).

mod dataset;
pub mod hybrid;
mod idx;
mod local;
mod models;
mod oracle;
mod partition;

use std::path::PathBuf;

use thiserror::Error;

pub use dataset::{Dataset, SyntheticSpec};
pub use hybrid::{
    partition_hybrid, HybridAssignment, HybridProblem, MlpHead, PatchCoupling, QuadraticHead,
    SampleHead,
};
pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use local::LocalProblem;
pub use models::{LossModel, Mlp, Quadratic, SoftmaxRegression};
pub use oracle::{
    full_gradient, loss_accuracy, loss_and_gradient, sample_batch, stochastic_gradient, Batch,
};
pub use partition::{partition_iid, partition_noniid_shards, Partition};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error(
        "{path}: truncated file, header promises {expected} payload bytes but {found} are present"
    )]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("index set is empty")]
    EmptyIndexSet,
    #[error("batch of {batch} requested but only {available} samples are local")]
    BatchTooLarge { batch: usize, available: usize },
    #[error("{agents} agents cannot share {samples} samples")]
    TooManyAgents { agents: usize, samples: usize },
    #[error("divisibility violated: {0}")]
    Divisibility(String),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model does not produce class predictions")]
    NotAClassifier,
}
