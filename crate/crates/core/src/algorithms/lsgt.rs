use rayon::prelude::*;

use super::{
    check_agents, check_oracle, guard, init_stream, step_stream, AlgorithmConfig, AlgorithmError,
    GradientOracle, RoundReport,
};
use crate::linalg::axpy;
use crate::rng::SeedTree;
use crate::topology::MixingMatrix;

/// Iterate `y`, tracking variable `v` and last stochastic gradient of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub g_last: Vec<f64>,
}

/// Common start `y0` for every agent; `v = g_last` from one fresh batch each.
pub fn lsgt_init<O: GradientOracle + ?Sized>(
    oracle: &O,
    y0: &[f64],
    seeds: &SeedTree,
) -> Result<Vec<AgentState>, AlgorithmError> {
    check_oracle(oracle, oracle.n_agents(), y0.len())?;
    (0..oracle.n_agents())
        .into_par_iter()
        .map(|n| {
            let g = oracle.stochastic_gradient(n, y0, &mut init_stream(seeds, n))?;
            Ok(AgentState {
                y: y0.to_vec(),
                v: g.clone(),
                g_last: g,
            })
        })
        .collect()
}

/// One communication round followed by `E` local tracking steps.
///
/// `round` is the 0-based index of the round being executed; local step `q`
/// of agent `n` draws its batch from stream `(n, round, q)`.
pub fn lsgt_round<O: GradientOracle + ?Sized>(
    states: &[AgentState],
    w: &MixingMatrix,
    cfg: &AlgorithmConfig,
    oracle: &O,
    seeds: &SeedTree,
    round: usize,
) -> Result<(Vec<AgentState>, RoundReport), AlgorithmError> {
    cfg.validate()?;
    check_agents(w, states.len())?;
    let dim = states.first().map_or(0, |s| s.y.len());
    check_oracle(oracle, states.len(), dim)?;
    let ys: Vec<&[f64]> = states.iter().map(|s| s.y.as_slice()).collect();
    let vs: Vec<&[f64]> = states.iter().map(|s| s.v.as_slice()).collect();

    let next = (0..states.len())
        .into_par_iter()
        .map(|n| {
            let mut y = w.mix(n, &ys);
            let mut v = w.mix(n, &vs);
            let mut g = states[n].g_last.clone();
            for q in 1..=cfg.local_updates {
                axpy(&mut y, -cfg.stepsize, &v);
                let g_new =
                    oracle.stochastic_gradient(n, &y, &mut step_stream(seeds, n, round, q))?;
                for ((vk, gn), go) in v.iter_mut().zip(&g_new).zip(&g) {
                    *vk += gn - go;
                }
                g = g_new;
            }
            guard(round, n, &y)?;
            guard(round, n, &v)?;
            Ok(AgentState { y, v, g_last: g })
        })
        .collect::<Result<Vec<_>, AlgorithmError>>()?;
    Ok((next, RoundReport::new(round, w, 2, 2 * dim as u64)))
}
