//! Empirical lower estimates of `L` and `sigma^2` for a concrete problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{norm, norm_sq, sub};
use crate::problems::{full_gradient, sample_batch, LocalProblem, ProblemError};

/// Batches are enumerated exhaustively when there are at most this many;
/// otherwise the same number is drawn at random.
pub const ENUMERATION_LIMIT: u64 = 256;

/// Lower-bound estimates; true constants can only be larger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimates {
    pub l_hat: f64,
    pub sigma2_hat: f64,
}

/// Probe `n_probes` points `center + radius * U(-1, 1)^p`.
///
/// `l_hat` is the largest `|grad f_n(a) - grad f_n(b)| / |a - b|` over agents
/// and probe pairs. `sigma2_hat` is the largest
/// `|I| * mean |g_batch - grad f_n|^2` over agents and probes.
pub fn estimate_constants(
    problem: &LocalProblem,
    center: &[f64],
    n_probes: usize,
    radius: f64,
    seed: u64,
) -> Result<ConstantEstimates, ProblemError> {
    if n_probes < 2 {
        return Err(ProblemError::InvalidDataset(
            "at least two probes are required".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Vec<f64>> = (0..n_probes)
        .map(|_| {
            center
                .iter()
                .map(|c| c + radius * rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let model = problem.model.as_ref();
    let data = problem.data.as_ref();
    let b = problem.batch_size;

    let mut l_hat: Option<f64> = None;
    let mut sigma2_hat: f64 = 0.0;
    for agent in 0..problem.n_agents() {
        let pool = problem.partition.agent(agent);
        let grads = probes
            .iter()
            .map(|p| full_gradient(model, data, p, pool))
            .collect::<Result<Vec<_>, _>>()?;
        for i in 0..n_probes {
            for j in i + 1..n_probes {
                let dist = norm(&sub(&probes[i], &probes[j]));
                if dist == 0.0 {
                    continue;
                }
                let ratio = norm(&sub(&grads[i], &grads[j])) / dist;
                l_hat = Some(l_hat.map_or(ratio, |l| l.max(ratio)));
            }
        }
        for (p, g_full) in probes.iter().zip(&grads) {
            let batches = batches_for(pool, b, &mut rng)?;
            let mut acc = 0.0;
            for batch in &batches {
                acc += norm_sq(&sub(&full_gradient(model, data, p, batch)?, g_full));
            }
            sigma2_hat = sigma2_hat.max(b as f64 * acc / batches.len() as f64);
        }
    }
    let l_hat =
        l_hat.ok_or_else(|| ProblemError::InvalidDataset("all probe pairs coincide".into()))?;
    Ok(ConstantEstimates { l_hat, sigma2_hat })
}

fn batches_for(
    pool: &[usize],
    b: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>, ProblemError> {
    if binomial(pool.len() as u64, b as u64) <= ENUMERATION_LIMIT {
        return Ok(combinations(pool, b));
    }
    (0..ENUMERATION_LIMIT)
        .map(|_| sample_batch(pool, b, rng).map(|batch| batch.indices))
        .collect()
}

/// `C(n, k)`, saturating.
fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u64::MAX,
        };
    }
    acc
}

/// All `k`-subsets of `pool` in lexicographic position order.
fn combinations(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = pool.len();
    if k > n {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut out = Vec::new();
    loop {
        out.push(idx.iter().map(|&i| pool[i]).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
