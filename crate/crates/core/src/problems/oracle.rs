//! Full-batch and mini-batch gradient oracles.

use rand::Rng;

use super::{Dataset, LossModel, ProblemError};

/// Sample indices of one mini-batch, in the order their gradients were summed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

fn check_dim(model: &dyn LossModel, params: &[f64]) -> Result<(), ProblemError> {
    if params.len() != model.dim() {
        return Err(ProblemError::DimensionMismatch {
            what: "parameters",
            expected: model.dim(),
            got: params.len(),
        });
    }
    Ok(())
}

/// Mean loss and mean gradient over `indices` (penalty included once).
pub fn loss_and_gradient(
    model: &dyn LossModel,
    data: &Dataset,
    params: &[f64],
    indices: &[usize],
) -> Result<(f64, Vec<f64>), ProblemError> {
    if indices.is_empty() {
        return Err(ProblemError::EmptyIndexSet);
    }
    check_dim(model, params)?;
    let mut grad = vec![0.0; model.dim()];
    let mut loss = 0.0;
    for &i in indices {
        loss += model.sample_loss_grad(params, data.features(i), data.label(i), &mut grad);
    }
    let inv = 1.0 / indices.len() as f64;
    crate::linalg::scale(&mut grad, inv);
    loss *= inv;
    loss += model.penalty(params, Some(&mut grad));
    Ok((loss, grad))
}

/// `(1/|indices|) sum_i grad l(params; xi_i)`.
pub fn full_gradient(
    model: &dyn LossModel,
    data: &Dataset,
    params: &[f64],
    indices: &[usize],
) -> Result<Vec<f64>, ProblemError> {
    loss_and_gradient(model, data, params, indices).map(|(_, g)| g)
}

/// Draw `batch_size` distinct entries of `pool` uniformly at random.
///
/// The chosen positions are sorted so that a full batch visits samples in
/// pool order and reproduces [`full_gradient`] bit for bit.
pub fn sample_batch<R: Rng + ?Sized>(
    pool: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch, ProblemError> {
    if batch_size == 0 {
        return Err(ProblemError::EmptyIndexSet);
    }
    if batch_size > pool.len() {
        return Err(ProblemError::BatchTooLarge {
            batch: batch_size,
            available: pool.len(),
        });
    }
    let mut pos = rand::seq::index::sample(rng, pool.len(), batch_size).into_vec();
    pos.sort_unstable();
    Ok(Batch {
        indices: pos.into_iter().map(|p| pool[p]).collect(),
    })
}

/// Mini-batch gradient from the agent's local sample pool.
pub fn stochastic_gradient<R: Rng + ?Sized>(
    model: &dyn LossModel,
    data: &Dataset,
    params: &[f64],
    pool: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Batch), ProblemError> {
    let batch = sample_batch(pool, batch_size, rng)?;
    let grad = full_gradient(model, data, params, &batch.indices)?;
    Ok((grad, batch))
}

/// Mean loss (penalty included) and top-1 accuracy over `indices`.
pub fn loss_accuracy(
    model: &dyn LossModel,
    data: &Dataset,
    params: &[f64],
    indices: &[usize],
) -> Result<(f64, f64), ProblemError> {
    if indices.is_empty() {
        return Err(ProblemError::EmptyIndexSet);
    }
    check_dim(model, params)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in indices {
        let x = data.features(i);
        loss += model.sample_loss(params, x, data.label(i));
        let pred = model
            .predict(params, x)
            .ok_or(ProblemError::NotAClassifier)?;
        correct += usize::from(pred == data.label(i));
    }
    let n = indices.len() as f64;
    Ok((loss / n + model.penalty(params, None), correct as f64 / n))
}
