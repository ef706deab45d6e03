//! Reference methods: vanilla stochastic gradient tracking, DSGD, D² and
//! single-machine SGD. Each decentralized baseline evaluates one stochastic
//! gradient per agent per round, drawn from stream `(agent, round, 1)`;
//! `local_updates` in the config is ignored.

use rand::Rng;
use rayon::prelude::*;

use super::{
    check_agents, check_oracle, guard, step_stream, AgentState, AlgorithmConfig, AlgorithmError,
    GradientOracle, RoundReport,
};
use crate::linalg::axpy;
use crate::problems::{stochastic_gradient, Dataset, LossModel};
use crate::rng::SeedTree;
use crate::topology::MixingMatrix;

/// `y <- W y - gamma v`, then `v <- W v + g(y_new) - g_last`.
///
/// Initialize with [`super::lsgt_init`].
pub fn gt_round<O: GradientOracle + ?Sized>(
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
            axpy(&mut y, -cfg.stepsize, &states[n].v);
            let g = oracle.stochastic_gradient(n, &y, &mut step_stream(seeds, n, round, 1))?;
            let mut v = w.mix(n, &vs);
            for ((vk, gn), go) in v.iter_mut().zip(&g).zip(&states[n].g_last) {
                *vk += gn - go;
            }
            guard(round, n, &y)?;
            guard(round, n, &v)?;
            Ok(AgentState { y, v, g_last: g })
        })
        .collect::<Result<Vec<_>, AlgorithmError>>()?;
    Ok((next, RoundReport::new(round, w, 2, 2 * dim as u64)))
}

/// Agent iterates of DSGD.
#[derive(Debug, Clone, PartialEq)]
pub struct DsgdState {
    pub y: Vec<Vec<f64>>,
}

impl DsgdState {
    pub fn new(y0: &[f64], n_agents: usize) -> Self {
        Self {
            y: vec![y0.to_vec(); n_agents],
        }
    }
}

/// `y_n <- sum_m W[n][m] y_m - gamma g_n(y_n)`.
pub fn dsgd_round<O: GradientOracle + ?Sized>(
    state: &DsgdState,
    w: &MixingMatrix,
    cfg: &AlgorithmConfig,
    oracle: &O,
    seeds: &SeedTree,
    round: usize,
) -> Result<(DsgdState, RoundReport), AlgorithmError> {
    cfg.validate()?;
    check_agents(w, state.y.len())?;
    let dim = state.y.first().map_or(0, Vec::len);
    check_oracle(oracle, state.y.len(), dim)?;
    let ys: Vec<&[f64]> = state.y.iter().map(Vec::as_slice).collect();
    let y = (0..ys.len())
        .into_par_iter()
        .map(|n| {
            let g = oracle.stochastic_gradient(n, ys[n], &mut step_stream(seeds, n, round, 1))?;
            let mut y = w.mix(n, &ys);
            axpy(&mut y, -cfg.stepsize, &g);
            guard(round, n, &y)?;
            Ok(y)
        })
        .collect::<Result<Vec<_>, AlgorithmError>>()?;
    Ok((DsgdState { y }, RoundReport::new(round, w, 1, dim as u64)))
}

/// Lower end of the admissible spectrum for D².
pub const D2_MIN_EIGENVALUE: f64 = -1.0 / 3.0;

/// D² needs a symmetric W whose eigenvalues exceed -1/3.
pub fn validate_d2_mixing(w: &MixingMatrix) -> Result<(), AlgorithmError> {
    if !w.is_symmetric() {
        return Err(AlgorithmError::InvalidConfig(
            "D2 requires a symmetric mixing matrix".into(),
        ));
    }
    let lambda_min = w.min_eigenvalue().map_err(AlgorithmError::Topology)?;
    if lambda_min <= D2_MIN_EIGENVALUE {
        return Err(AlgorithmError::InvalidConfig(format!(
            "D2 requires eigenvalues of W above -1/3, smallest is {lambda_min}"
        )));
    }
    Ok(())
}

/// Previous iterate and gradient of every agent.
type D2History = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Current iterates plus the history needed by the next round.
#[derive(Debug, Clone, PartialEq)]
pub struct D2State {
    pub y: Vec<Vec<f64>>,
    prev: Option<D2History>,
}

impl D2State {
    /// Validates `w` once; later rounds only recheck symmetry.
    pub fn new(y: Vec<Vec<f64>>, w: &MixingMatrix) -> Result<Self, AlgorithmError> {
        check_agents(w, y.len())?;
        validate_d2_mixing(w)?;
        Ok(Self { y, prev: None })
    }

    pub fn from_common(y0: &[f64], w: &MixingMatrix) -> Result<Self, AlgorithmError> {
        Self::new(vec![y0.to_vec(); w.n_agents()], w)
    }
}

/// `Y^{r+1} = W(2Y^r - Y^{r-1} - gamma(G^r - G^{r-1}))`, with
/// `Y^1 = W(Y^0 - gamma G^0)` on the first call.
pub fn d2_round<O: GradientOracle + ?Sized>(
    state: &D2State,
    w: &MixingMatrix,
    cfg: &AlgorithmConfig,
    oracle: &O,
    seeds: &SeedTree,
    round: usize,
) -> Result<(D2State, RoundReport), AlgorithmError> {
    cfg.validate()?;
    check_agents(w, state.y.len())?;
    if !w.is_symmetric() {
        return Err(AlgorithmError::InvalidConfig(
            "D2 requires a symmetric mixing matrix".into(),
        ));
    }
    let dim = state.y.first().map_or(0, Vec::len);
    check_oracle(oracle, state.y.len(), dim)?;
    let gamma = cfg.stepsize;

    // Local half step.
    let (half, grads): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..state.y.len())
        .into_par_iter()
        .map(|n| {
            let y = &state.y[n];
            let g = oracle.stochastic_gradient(n, y, &mut step_stream(seeds, n, round, 1))?;
            let h = match &state.prev {
                None => y.iter().zip(&g).map(|(y, g)| y - gamma * g).collect(),
                Some((y_prev, g_prev)) => (0..dim)
                    .map(|k| 2.0 * y[k] - y_prev[n][k] - gamma * (g[k] - g_prev[n][k]))
                    .collect(),
            };
            Ok((h, g))
        })
        .collect::<Result<Vec<_>, AlgorithmError>>()?
        .into_iter()
        .unzip();

    let hs: Vec<&[f64]> = half.iter().map(Vec::as_slice).collect();
    let y = (0..hs.len())
        .map(|n| {
            let y = w.mix(n, &hs);
            guard(round, n, &y)?;
            Ok(y)
        })
        .collect::<Result<Vec<_>, AlgorithmError>>()?;
    let next = D2State {
        y,
        prev: Some((state.y.clone(), grads)),
    };
    Ok((next, RoundReport::new(round, w, 1, dim as u64)))
}

/// `params - gamma * (mini-batch gradient over the pooled data)`.
pub fn centralized_sgd_step<R: Rng + ?Sized>(
    params: &[f64],
    model: &dyn LossModel,
    data: &Dataset,
    pool: &[usize],
    batch_size: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<Vec<f64>, AlgorithmError> {
    let (g, _) = stochastic_gradient(model, data, params, pool, batch_size, rng)?;
    let mut next = params.to_vec();
    axpy(&mut next, -gamma, &g);
    guard(0, 0, &next)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::super::lsgt::tests::{two_agent_w, Quadratics};
    use super::*;
    use crate::problems::{Quadratic, SoftmaxRegression};
    use crate::topology::{max_degree_mixing, Graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64]) {
        assert!(crate::linalg::max_abs_diff(a, b) < 1e-12, "{a:?} vs {b:?}");
    }

    fn line3() -> MixingMatrix {
        max_degree_mixing(&Graph::line(3).unwrap()).unwrap()
    }

    #[test]
    fn gt_hand_trace_line_graph() {
        let oracle = Quadratics {
            a: vec![1.0; 3],
            b: vec![vec![1.0], vec![2.0], vec![3.0]],
        };
        let states: Vec<AgentState> = [(1.0, -1.0), (0.0, -2.0), (-1.0, -3.0)]
            .iter()
            .map(|&(y, v)| AgentState {
                y: vec![y],
                v: vec![v],
                g_last: vec![0.5],
            })
            .collect();
        let cfg = AlgorithmConfig::new(0.1, 1);
        let (next, report) =
            gt_round(&states, &line3(), &cfg, &oracle, &SeedTree::new(0), 0).unwrap();
        close(&next[0].y, &[23.0 / 30.0]);
        close(&next[1].y, &[0.2]);
        close(&next[2].y, &[-11.0 / 30.0]);
        close(&next[0].v, &[-31.0 / 15.0]);
        close(&next[1].v, &[-4.3]);
        close(&next[2].v, &[-98.0 / 15.0]);
        close(&next[1].g_last, &[-1.8]);
        assert_eq!(report.messages_sent, 8);
    }

    #[test]
    fn dsgd_hand_trace() {
        let oracle = Quadratics {
            a: vec![1.0, 2.0],
            b: vec![vec![1.0], vec![-1.0]],
        };
        let state = DsgdState {
            y: vec![vec![0.5], vec![-0.5]],
        };
        let (next, report) = dsgd_round(
            &state,
            &two_agent_w(),
            &AlgorithmConfig::new(0.1, 1),
            &oracle,
            &SeedTree::new(0),
            0,
        )
        .unwrap();
        close(&next.y[0], &[0.3]);
        close(&next.y[1], &[-0.35]);
        assert_eq!(report.messages_sent, 2);
    }

    #[test]
    fn d2_two_round_hand_trace() {
        let oracle = Quadratics {
            a: vec![1.0, 2.0],
            b: vec![vec![1.0], vec![-1.0]],
        };
        let w = two_agent_w();
        let cfg = AlgorithmConfig::new(0.1, 1);
        let seeds = SeedTree::new(0);
        let s0 = D2State::new(vec![vec![0.5], vec![-0.5]], &w).unwrap();
        let (s1, _) = d2_round(&s0, &w, &cfg, &oracle, &seeds, 0).unwrap();
        close(&s1.y[0], &[0.2625]);
        close(&s1.y[1], &[-0.3125]);
        let (s2, _) = d2_round(&s1, &w, &cfg, &oracle, &seeds, 1).unwrap();
        close(&s2.y[0], &[-0.0040625]);
        close(&s2.y[1], &[-0.1096875]);
    }

    #[test]
    fn d2_first_step_is_mixed_dsgd_step() {
        let oracle = Quadratics {
            a: vec![1.0, 2.0, 0.5],
            b: vec![vec![1.0, 0.0], vec![-1.0, 2.0], vec![0.5, 0.5]],
        };
        let w = line3();
        let cfg = AlgorithmConfig::new(0.2, 1);
        let seeds = SeedTree::new(0);
        let y0 = vec![0.3, -0.7];
        let (d2, _) = d2_round(
            &D2State::from_common(&y0, &w).unwrap(),
            &w,
            &cfg,
            &oracle,
            &seeds,
            0,
        )
        .unwrap();
        // With a common start, W(y0 - gamma g) = W y0 - gamma W g, and W y0 = y0.
        let steps: Vec<Vec<f64>> = (0..3)
            .map(|n| {
                let g = oracle.full_gradient(n, &y0).unwrap();
                y0.iter().zip(&g).map(|(y, g)| y - 0.2 * g).collect()
            })
            .collect();
        let refs: Vec<&[f64]> = steps.iter().map(Vec::as_slice).collect();
        for n in 0..3 {
            close(&d2.y[n], &w.mix(n, &refs));
        }
    }

    #[test]
    fn d2_rejects_bad_spectrum() {
        let swap = MixingMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            D2State::from_common(&[0.0], &swap),
            Err(AlgorithmError::InvalidConfig(_))
        ));
        let asym = MixingMatrix::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
        ])
        .unwrap();
        assert!(validate_d2_mixing(&asym).is_err());
        assert!(validate_d2_mixing(&line3()).is_ok());
    }

    #[test]
    fn zero_stepsize_is_pure_consensus() {
        let oracle = Quadratics {
            a: vec![1.0; 3],
            b: vec![vec![5.0], vec![5.0], vec![5.0]],
        };
        let w = line3();
        let cfg = AlgorithmConfig::new(0.0, 1);
        let seeds = SeedTree::new(0);
        let mut state = DsgdState {
            y: vec![vec![3.0], vec![0.0], vec![-3.0]],
        };
        let spread0 = 3.0;
        for r in 0..30 {
            state = dsgd_round(&state, &w, &cfg, &oracle, &seeds, r).unwrap().0;
            let spread = state.y.iter().map(|y| y[0].abs()).fold(0.0, f64::max);
            assert!(spread <= w.lambda_w().powi(r as i32 + 1) * spread0 + 1e-12);
        }
    }

    #[test]
    fn centralized_full_batch_is_gd_step() {
        let ds = Dataset::from_scalars(&[1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = centralized_sgd_step(
            &[0.0],
            &Quadratic::new(1),
            &ds,
            &[0, 1, 2],
            3,
            0.5,
            &mut rng,
        )
        .unwrap();
        assert_eq!(next, vec![1.0]);
        let same = centralized_sgd_step(
            &[0.7],
            &Quadratic::new(1),
            &ds,
            &[0, 1, 2],
            1,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(same, vec![0.7]);
    }

    #[test]
    fn centralized_matches_independent_logistic_loop() {
        let ds = Dataset::new(
            vec![0.5, -1.0, 1.5, 0.2, -0.3, 0.8],
            vec![0, 1, 1, 0, 1, 0],
            1,
            2,
        )
        .unwrap();
        let model = SoftmaxRegression::new(1, 2);
        let pool: Vec<usize> = (0..6).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = vec![0.1, -0.2, 0.05, 0.0];
        for _ in 0..10 {
            params = centralized_sgd_step(&params, &model, &ds, &pool, 6, 0.3, &mut rng).unwrap();
        }
        // Independent full-batch loop with hand-written softmax gradient.
        let mut p = [0.1, -0.2, 0.05, 0.0];
        for _ in 0..10 {
            let mut g = [0.0; 4];
            for i in 0..6 {
                let x = ds.features(i)[0];
                let l0 = p[0] * x + p[2];
                let l1 = p[1] * x + p[3];
                let m = l0.max(l1);
                let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
                let (q0, q1) = (e0 / (e0 + e1), e1 / (e0 + e1));
                let (t0, t1) = if ds.label(i) == 0 {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                };
                g[0] += (q0 - t0) * x / 6.0;
                g[1] += (q1 - t1) * x / 6.0;
                g[2] += (q0 - t0) / 6.0;
                g[3] += (q1 - t1) / 6.0;
            }
            for k in 0..4 {
                p[k] -= 0.3 * g[k];
            }
        }
        assert!(crate::linalg::max_abs_diff(&params, &p) < 1e-12);
    }
}
