use rayon::prelude::*;

use super::{check_agents, guard, init_stream, step_stream, AlgorithmError, RoundReport};
use crate::linalg::axpy;
use crate::problems::HybridProblem;
use crate::rng::SeedTree;
use crate::topology::MixingMatrix;

/// Per-agent variables of the hybrid method.
#[derive(Debug, Clone, PartialEq)]
pub struct MustAgentState {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    /// `S x M` row-major: the agent's estimate `z_{n,i}` of `N sum_m B_{m,i} x_m`.
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub g_theta: Vec<f64>,
    pub g_x: Vec<f64>,
}

/// How `z` follows the change of `x` caused by mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingUpdate {
    /// Add `N B_n ((W x)_n - x_n)` to the mixed `z`, so that the network
    /// average of `z_{.,i}` equals `sum_n B_{n,i} x_n` after every round.
    #[default]
    Tracking,
    /// Mix `z` only. The average then drifts from `sum_n B_{n,i} x_n`
    /// whenever the agents' `x` disagree.
    MixedAnchor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MustConfig {
    pub alpha: f64,
    pub beta: f64,
    pub local_updates: usize,
    pub coupling_update: CouplingUpdate,
}

impl MustConfig {
    pub fn new(alpha: f64, beta: f64, local_updates: usize) -> Self {
        Self {
            alpha,
            beta,
            local_updates,
            coupling_update: CouplingUpdate::default(),
        }
    }

    fn validate(&self) -> Result<(), AlgorithmError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(AlgorithmError::InvalidConfig(format!(
                    "{name} {v} must be finite and non-negative"
                )));
            }
        }
        if self.local_updates == 0 {
            return Err(AlgorithmError::InvalidConfig(
                "local_updates must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Common `(theta0, x0)`; `z_{n,i} = N B_{n,i} x0`; gradients from one
/// fresh batch per agent; `u = g_x`.
pub fn must_init(
    hp: &HybridProblem,
    theta0: &[f64],
    x0: &[f64],
    seeds: &SeedTree,
) -> Result<Vec<MustAgentState>, AlgorithmError> {
    check_len("theta", hp.dim_theta(), theta0.len())?;
    check_len("x", hp.dim_x(), x0.len())?;
    (0..hp.n_agents())
        .into_par_iter()
        .map(|n| {
            let z = hp.init_tracking(n, x0);
            let batch = hp.sample_batch(&mut init_stream(seeds, n))?;
            let (g_theta, g_x) = hp.hybrid_gradients(n, theta0, &z, &batch)?;
            Ok(MustAgentState {
                theta: theta0.to_vec(),
                x: x0.to_vec(),
                z,
                u: g_x.clone(),
                g_theta,
                g_x,
            })
        })
        .collect()
}

/// One communication round of `(theta, x, z, u)` followed by `E` local steps.
pub fn must_round(
    states: &[MustAgentState],
    w: &MixingMatrix,
    cfg: &MustConfig,
    hp: &HybridProblem,
    seeds: &SeedTree,
    round: usize,
) -> Result<(Vec<MustAgentState>, RoundReport), AlgorithmError> {
    cfg.validate()?;
    check_agents(w, states.len())?;
    if states.len() != hp.n_agents() {
        return Err(AlgorithmError::Dimension {
            what: "agents in problem",
            expected: states.len(),
            got: hp.n_agents(),
        });
    }
    let big_n = hp.n_agents() as f64;
    let thetas: Vec<&[f64]> = states.iter().map(|s| s.theta.as_slice()).collect();
    let xs: Vec<&[f64]> = states.iter().map(|s| s.x.as_slice()).collect();
    let zs: Vec<&[f64]> = states.iter().map(|s| s.z.as_slice()).collect();
    let us: Vec<&[f64]> = states.iter().map(|s| s.u.as_slice()).collect();

    let next = (0..states.len())
        .into_par_iter()
        .map(|n| {
            let mut theta = w.mix(n, &thetas);
            let mut x = w.mix(n, &xs);
            let mut z = w.mix(n, &zs);
            let mut u = w.mix(n, &us);
            if cfg.coupling_update == CouplingUpdate::Tracking {
                let shift: Vec<f64> = x.iter().zip(&states[n].x).map(|(a, b)| a - b).collect();
                hp.coupling.add_to_tracking(n, &shift, big_n, &mut z);
            }
            let mut g_theta = states[n].g_theta.clone();
            let mut g_x = states[n].g_x.clone();
            for q in 1..=cfg.local_updates {
                axpy(&mut theta, -cfg.alpha, &g_theta);
                let step: Vec<f64> = u.iter().map(|uk| -cfg.beta * uk).collect();
                axpy(&mut x, 1.0, &step);
                hp.coupling.add_to_tracking(n, &step, big_n, &mut z);
                let batch = hp.sample_batch(&mut step_stream(seeds, n, round, q))?;
                let (gt_new, gx_new) = hp.hybrid_gradients(n, &theta, &z, &batch)?;
                for ((uk, gn), go) in u.iter_mut().zip(&gx_new).zip(&g_x) {
                    *uk += gn - go;
                }
                g_theta = gt_new;
                g_x = gx_new;
            }
            for v in [&theta, &x, &z, &u] {
                guard(round, n, v)?;
            }
            Ok(MustAgentState {
                theta,
                x,
                z,
                u,
                g_theta,
                g_x,
            })
        })
        .collect::<Result<Vec<_>, AlgorithmError>>()?;
    let floats = hp.dim_theta() + 2 * hp.dim_x() + hp.n_samples() * hp.dim_z();
    Ok((next, RoundReport::new(round, w, 4, floats as u64)))
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), AlgorithmError> {
    if expected != got {
        return Err(AlgorithmError::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
