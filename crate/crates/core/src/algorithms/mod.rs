//! Round-level state machines.
//!
//! Every round reads an immutable snapshot of all agent states, mixes with
//! the neighbours' values, runs the agent-local steps and returns the new
//! states. Agents are processed in parallel; randomness comes from the
//! `(agent, round, step)` streams of a [`SeedTree`], so the result does not
//! depend on scheduling.

mod baselines;
pub mod checkpoint;
mod lsgt;
mod must;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::problems::{LocalProblem, ProblemError};
use crate::rng::SeedTree;
use crate::topology::{MixingMatrix, TopologyError};

pub use baselines::{
    centralized_sgd_step, d2_round, dsgd_round, gt_round, validate_d2_mixing, D2State, DsgdState,
};
pub use lsgt::{lsgt_init, lsgt_round, AgentState};
pub use must::{must_init, must_round, CouplingUpdate, MustAgentState, MustConfig};

/// Any coordinate above this magnitude counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("iterate of agent {agent} diverged in round {round}")]
    Diverged { round: usize, agent: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Stepsize `gamma` and number of local updates `E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmConfig {
    pub stepsize: f64,
    pub local_updates: usize,
}

impl AlgorithmConfig {
    pub fn new(stepsize: f64, local_updates: usize) -> Self {
        Self {
            stepsize,
            local_updates,
        }
    }

    fn validate(&self) -> Result<(), AlgorithmError> {
        if !(self.stepsize >= 0.0 && self.stepsize.is_finite()) {
            return Err(AlgorithmError::InvalidConfig(format!(
                "stepsize {} must be finite and non-negative",
                self.stepsize
            )));
        }
        if self.local_updates == 0 {
            return Err(AlgorithmError::InvalidConfig(
                "local_updates must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Communication accounting for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundReport {
    /// 1-based index of the completed round.
    pub round: usize,
    /// Vectors sent over all directed links.
    pub messages_sent: u64,
    /// Scalars sent over all directed links.
    pub floats_sent: u64,
}

impl RoundReport {
    fn new(round: usize, w: &MixingMatrix, vectors_per_link: u64, floats_per_link: u64) -> Self {
        let links = w.directed_links() as u64;
        Self {
            round: round + 1,
            messages_sent: links * vectors_per_link,
            floats_sent: links * floats_per_link,
        }
    }
}

/// Mini-batch and full-batch gradients of each agent's local objective.
pub trait GradientOracle: Sync {
    fn n_agents(&self) -> usize;
    fn dim(&self) -> usize;
    fn stochastic_gradient(
        &self,
        agent: usize,
        params: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>, ProblemError>;
    fn full_gradient(&self, agent: usize, params: &[f64]) -> Result<Vec<f64>, ProblemError>;
}

impl GradientOracle for LocalProblem {
    fn n_agents(&self) -> usize {
        LocalProblem::n_agents(self)
    }

    fn dim(&self) -> usize {
        LocalProblem::dim(self)
    }

    fn stochastic_gradient(
        &self,
        agent: usize,
        params: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>, ProblemError> {
        LocalProblem::stochastic_gradient(self, agent, params, rng).map(|(g, _)| g)
    }

    fn full_gradient(&self, agent: usize, params: &[f64]) -> Result<Vec<f64>, ProblemError> {
        LocalProblem::full_gradient(self, agent, params)
    }
}

/// Reject non-finite or exploding iterates.
pub fn guard(round: usize, agent: usize, values: &[f64]) -> Result<(), AlgorithmError> {
    if values
        .iter()
        .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
    {
        return Err(AlgorithmError::Diverged { round, agent });
    }
    Ok(())
}

fn check_agents(w: &MixingMatrix, states: usize) -> Result<(), AlgorithmError> {
    if w.n_agents() != states {
        return Err(AlgorithmError::Dimension {
            what: "agents in mixing matrix",
            expected: states,
            got: w.n_agents(),
        });
    }
    Ok(())
}

fn check_oracle<O: GradientOracle + ?Sized>(
    oracle: &O,
    agents: usize,
    dim: usize,
) -> Result<(), AlgorithmError> {
    if oracle.n_agents() != agents {
        return Err(AlgorithmError::Dimension {
            what: "agents in problem",
            expected: agents,
            got: oracle.n_agents(),
        });
    }
    if oracle.dim() != dim {
        return Err(AlgorithmError::Dimension {
            what: "parameters",
            expected: oracle.dim(),
            got: dim,
        });
    }
    Ok(())
}

/// Stream for local step `step` (1-based) of `agent` in round `round`.
fn step_stream(seeds: &SeedTree, agent: usize, round: usize, step: usize) -> ChaCha8Rng {
    seeds.stream(agent as u64, round as u64, step as u64)
}

fn init_stream(seeds: &SeedTree, agent: usize) -> ChaCha8Rng {
    seeds.stream(agent as u64, 0, crate::rng::INIT_STEP)
}
