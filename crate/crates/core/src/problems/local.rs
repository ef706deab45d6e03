use std::sync::Arc;

use rand::Rng;

use super::{
    full_gradient, loss_accuracy, loss_and_gradient, stochastic_gradient, Batch, Dataset,
    LossModel, Partition, ProblemError,
};

/// A model, the training data and its split across agents: everything an
/// agent needs to evaluate `f_n` and its mini-batch gradients.
#[derive(Debug, Clone)]
pub struct LocalProblem {
    pub model: Arc<dyn LossModel>,
    pub data: Arc<Dataset>,
    pub partition: Partition,
    pub batch_size: usize,
}

impl LocalProblem {
    pub fn new(
        model: Arc<dyn LossModel>,
        data: Arc<Dataset>,
        partition: Partition,
        batch_size: usize,
    ) -> Result<Self, ProblemError> {
        if partition.n_samples() != data.n_samples() {
            return Err(ProblemError::InvalidPartition(format!(
                "partition covers {} samples, dataset has {}",
                partition.n_samples(),
                data.n_samples()
            )));
        }
        let smallest = partition
            .assignments()
            .iter()
            .map(Vec::len)
            .min()
            .unwrap_or(0);
        if batch_size == 0 || batch_size > smallest {
            return Err(ProblemError::BatchTooLarge {
                batch: batch_size,
                available: smallest,
            });
        }
        Ok(Self {
            model,
            data,
            partition,
            batch_size,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.partition.n_agents()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        agent: usize,
        params: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<f64>, Batch), ProblemError> {
        stochastic_gradient(
            self.model.as_ref(),
            &self.data,
            params,
            self.partition.agent(agent),
            self.batch_size,
            rng,
        )
    }

    /// `grad f_n(params)` over the agent's whole partition.
    pub fn full_gradient(&self, agent: usize, params: &[f64]) -> Result<Vec<f64>, ProblemError> {
        full_gradient(
            self.model.as_ref(),
            &self.data,
            params,
            self.partition.agent(agent),
        )
    }

    pub fn local_loss_gradient(
        &self,
        agent: usize,
        params: &[f64],
    ) -> Result<(f64, Vec<f64>), ProblemError> {
        loss_and_gradient(
            self.model.as_ref(),
            &self.data,
            params,
            self.partition.agent(agent),
        )
    }

    /// Mean loss and accuracy of `params` on an arbitrary dataset.
    pub fn evaluate(&self, data: &Dataset, params: &[f64]) -> Result<(f64, f64), ProblemError> {
        let all: Vec<usize> = (0..data.n_samples()).collect();
        loss_accuracy(self.model.as_ref(), data, params, &all)
    }
}
