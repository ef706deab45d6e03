//! Convergence diagnostics and evaluators for the theoretical rate bounds.

mod bounds;
mod estimate;

use rayon::prelude::*;

use crate::algorithms::{AgentState, GradientOracle, MustAgentState};
use crate::linalg::{axpy, mean_rows, norm_sq};
use crate::problems::{HybridProblem, ProblemError};

pub use bounds::{
    corollary1_rhs, theorem1_rhs, theorem2_rhs, BoundError, BoundValue, HybridTheoryConstants,
    Theorem2Value, TheoryConstants,
};
pub use estimate::{estimate_constants, ConstantEstimates, ENUMERATION_LIMIT};

/// Consensus errors of the four hybrid blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HybridPhi {
    pub theta: f64,
    pub x: f64,
    pub z: f64,
    pub u: f64,
}

/// Diagnostics recorded after a round.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub round: usize,
    /// Vectors sent since the start of the run.
    pub comm_messages: u64,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    pub stat_gap: f64,
    pub phi_y: f64,
    pub phi_v: f64,
    pub hybrid: Option<HybridPhi>,
}

/// `sum_n |row_n - mean|^2`, the squared Frobenius distance of the stacked
/// rows from their average.
pub fn consensus_error(rows: &[&[f64]]) -> f64 {
    let Some(first) = rows.first() else {
        return 0.0;
    };
    let mean = mean_rows(rows.iter().copied(), first.len());
    rows.iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .map(|(a, m)| (a - m) * (a - m))
                .sum::<f64>()
        })
        .sum()
}

/// `(phi_y, phi_v)` for one realization.
pub fn consensus_errors(states: &[AgentState]) -> (f64, f64) {
    let ys: Vec<&[f64]> = states.iter().map(|s| s.y.as_slice()).collect();
    let vs: Vec<&[f64]> = states.iter().map(|s| s.v.as_slice()).collect();
    (consensus_error(&ys), consensus_error(&vs))
}

pub fn must_consensus_errors(states: &[MustAgentState]) -> HybridPhi {
    let pick = |f: fn(&MustAgentState) -> &[f64]| {
        let rows: Vec<&[f64]> = states.iter().map(f).collect();
        consensus_error(&rows)
    };
    HybridPhi {
        theta: pick(|s| &s.theta),
        x: pick(|s| &s.x),
        z: pick(|s| &s.z),
        u: pick(|s| &s.u),
    }
}

/// `|(1/N) sum_n grad f_n(y_n)|^2` with full local gradients.
pub fn stationarity_gap<O: GradientOracle + ?Sized>(
    ys: &[&[f64]],
    oracle: &O,
) -> Result<f64, ProblemError> {
    if ys.is_empty() {
        return Ok(0.0);
    }
    let grads = (0..ys.len())
        .into_par_iter()
        .map(|n| oracle.full_gradient(n, ys[n]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(norm_sq(&mean_rows(
        grads.iter().map(Vec::as_slice),
        ys[0].len(),
    )))
}

/// `(1/N) sum_n (|grad_theta F(theta_n, x_n)|^2 + |grad_x F(theta_n, x_n)|^2)`.
pub fn must_stationarity_gap(hp: &HybridProblem, states: &[MustAgentState]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let total: f64 = states
        .par_iter()
        .map(|s| {
            let (_, gt, gx) = hp.full_gradients(&s.theta, &s.x);
            norm_sq(&gt) + norm_sq(&gx)
        })
        .sum();
    total / states.len() as f64
}

/// Network average of the rows.
pub fn average(rows: &[&[f64]]) -> Vec<f64> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut out = vec![0.0; dim];
    for r in rows {
        axpy(&mut out, 1.0 / rows.len() as f64, r);
    }
    out
}
