use std::sync::Arc;

use localgt::algorithms::checkpoint::{AlgorithmTag, Checkpoint};
use localgt::algorithms::{lsgt_init, lsgt_round, AgentState, AlgorithmConfig};
use localgt::metrics::{
    consensus_error, consensus_errors, stationarity_gap, theorem1_rhs, TheoryConstants,
};
use localgt::problems::{
    full_gradient, loss_and_gradient, partition_iid, Dataset, LocalProblem, LossModel,
    SoftmaxRegression, SyntheticSpec,
};
use localgt::rng::SeedTree;
use localgt::topology::{gen_graph, max_degree_mixing, GraphKind};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind_strategy() -> impl Strategy<Value = GraphKind> {
    prop_oneof![
        Just(GraphKind::Line),
        Just(GraphKind::Complete),
        (0.2f64..0.9).prop_map(|p| GraphKind::Random { p }),
    ]
}

fn blobs(samples: usize, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        samples,
        features: 4,
        classes: 3,
        separation: 2.0,
    };
    Dataset::synthetic(&spec, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixing_is_doubly_stochastic_and_matches_svd(n in 2usize..30, kind in kind_strategy(), seed in 0u64..1000) {
        let w = max_degree_mixing(&gen_graph(kind, n, seed).unwrap()).unwrap();
        let rows = w.to_rows();
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j] - 1.0 / n as f64);
        for i in 0..n {
            prop_assert!((rows[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((rows.iter().map(|r| r[i]).sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(rows[i].iter().all(|&v| v >= 0.0));
        }
        let sigma = m.singular_values().max();
        prop_assert!((w.lambda_w() - sigma).abs() < 1e-6, "power {} svd {}", w.lambda_w(), sigma);
        prop_assert!(w.lambda_w() < 1.0);
    }

    #[test]
    fn consensus_error_is_permutation_invariant(
        rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 2..8),
        shift in 0usize..8,
    ) {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let mut perm = refs.clone();
        perm.rotate_left(shift % refs.len());
        perm.reverse();
        let (a, b) = (consensus_error(&refs), consensus_error(&perm));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        // brute-force double loop
        let n = rows.len() as f64;
        let mut brute = 0.0;
        for r in &rows {
            for (k, v) in r.iter().enumerate() {
                let mean = rows.iter().map(|q| q[k]).sum::<f64>() / n;
                brute += (v - mean).powi(2);
            }
        }
        prop_assert!((a - brute).abs() <= 1e-12 * brute.max(1.0));
        let same = vec![refs[0]; refs.len()];
        prop_assert!(consensus_error(&same) <= 1e-12);
    }

    #[test]
    fn batch_enumeration_is_unbiased(seed in 0u64..500, size in 1usize..4) {
        let ds = blobs(6, seed);
        let model = SoftmaxRegression::new(4, 3).with_nonconvex_penalty(0.1);
        let p = model.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
        let all: Vec<usize> = (0..6).collect();
        let full = full_gradient(&model, &ds, &p, &all).unwrap();
        let mut mean = vec![0.0; full.len()];
        let mut count = 0.0;
        let mut stack = vec![(Vec::<usize>::new(), 0usize)];
        while let Some((set, next)) = stack.pop() {
            if set.len() == size {
                let g = full_gradient(&model, &ds, &p, &set).unwrap();
                mean.iter_mut().zip(&g).for_each(|(m, v)| *m += v);
                count += 1.0;
                continue;
            }
            for i in next..6 {
                let mut s = set.clone();
                s.push(i);
                stack.push((s, i + 1));
            }
        }
        for (m, f) in mean.iter().zip(&full) {
            prop_assert!((m / count - f).abs() < 1e-12);
        }
    }

    #[test]
    fn theorem1_monotone_and_pure(
        batch in 1.0f64..64.0,
        lambda_w in 0.0f64..0.95,
        sigma2 in 0.0f64..5.0,
        l in 0.1f64..10.0,
        bump in 0.001f64..0.04,
    ) {
        let tc = TheoryConstants {
            l, sigma2, f0_minus_flb: 1.0, phi_v0: 2.0, lambda_w, n: 8.0, e: 4.0, t: 100.0, batch, gamma: 0.01,
        };
        let v = theorem1_rhs(&tc).unwrap();
        prop_assert_eq!(v.to_bits(), theorem1_rhs(&tc).unwrap().to_bits());
        let at = |t: TheoryConstants| theorem1_rhs(&t).unwrap();
        let bigger_batch = at(TheoryConstants { batch: batch + 1.0, ..tc });
        let worse_graph = at(TheoryConstants { lambda_w: lambda_w + bump, ..tc });
        let noisier = at(TheoryConstants { sigma2: sigma2 + bump, ..tc });
        let rougher = at(TheoryConstants { l: l + bump, ..tc });
        prop_assert!(bigger_batch <= v);
        prop_assert!(worse_graph >= v);
        prop_assert!(noisier >= v);
        prop_assert!(rougher >= v);
    }
}

fn run_lsgt(rounds: usize) -> (LocalProblem, Vec<AgentState>) {
    let ds = Arc::new(blobs(60, 3));
    let model: Arc<dyn LossModel> =
        Arc::new(SoftmaxRegression::new(4, 3).with_nonconvex_penalty(0.05));
    let partition = partition_iid(&ds, 5, 1).unwrap();
    let problem = LocalProblem::new(model.clone(), ds, partition, 3).unwrap();
    let w = max_degree_mixing(&gen_graph(GraphKind::Random { p: 0.5 }, 5, 2).unwrap()).unwrap();
    let seeds = SeedTree::new(4);
    let cfg = AlgorithmConfig::new(0.1, 4);
    let y0 = model.init_params(&mut ChaCha8Rng::seed_from_u64(1));
    let mut states = lsgt_init(&problem, &y0, &seeds).unwrap();
    for r in 0..rounds {
        states = lsgt_round(&states, &w, &cfg, &problem, &seeds, r)
            .unwrap()
            .0;
    }
    (problem, states)
}

#[test]
fn checkpoint_reload_preserves_metrics() {
    let (problem, states) = run_lsgt(7);
    let mut bytes = Vec::new();
    Checkpoint::from_lsgt(AlgorithmTag::Lsgt, 7, &states)
        .write_to(&mut bytes)
        .unwrap();
    let back = Checkpoint::read_from(bytes.as_slice())
        .unwrap()
        .to_lsgt()
        .unwrap();
    let gap = |s: &[AgentState]| {
        let ys: Vec<&[f64]> = s.iter().map(|a| a.y.as_slice()).collect();
        stationarity_gap(&ys, &problem).unwrap()
    };
    assert!((gap(&states) - gap(&back)).abs() <= 1e-12);
    assert_eq!(consensus_errors(&states), consensus_errors(&back));
}

#[test]
fn consensus_error_two_agent_example() {
    assert_eq!(consensus_error(&[&[0.0], &[2.0]]), 2.0);
}

#[test]
fn penalty_counted_once_per_batch() {
    let ds = blobs(4, 0);
    let model = SoftmaxRegression::new(4, 3).with_nonconvex_penalty(1.0);
    let p = vec![0.5; model.dim()];
    let (one, _) = loss_and_gradient(&model, &ds, &p, &[0]).unwrap();
    let (two, _) = loss_and_gradient(&model, &ds, &p, &[0, 0]).unwrap();
    assert!((one - two).abs() < 1e-15);
}
