mod common;

use common::*;
use gslim::greedy::{train_greedy, GreedyOptions, GreedyState};
use gslim::slim::{slim_loss, Trainer};
use gslim::{Execution, HyperParams, InteractionMatrix, SlimModel, SparseVec};
use proptest::prelude::*;

/// A matrix, hyperparameters, a partially filled model and one new row for an
/// empty index.
#[derive(Debug, Clone)]
struct Instance {
    x: InteractionMatrix,
    hp: HyperParams,
    model: SlimModel,
    target: usize,
    new_row: SparseVec,
}

fn arb_instance() -> impl Strategy<Value = Instance> {
    (arb_matrix(12, 8), arb_hyper())
        .prop_flat_map(|(x, hp)| {
            let n = x.num_items();
            let weight = prop::sample::select(vec![0.0, 0.0, 0.0, 0.1, 0.5, 1.0, 2.5]);
            (
                Just(x),
                Just(hp),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(weight.clone(), n * n),
                0..n,
                prop::collection::vec(weight, n),
            )
        })
        .prop_map(|(x, hp, filled, w, target, new)| {
            let n = x.num_items();
            let mut model = SlimModel::new(n, hp, Trainer::Greedy);
            for i in (0..n).filter(|&i| filled[i] && i != target) {
                let row: SparseVec = (0..n).filter(|&j| j != i).map(|j| (j, w[i * n + j])).collect();
                model.push_row(i, row).unwrap();
            }
            let new_row = (0..n).filter(|&j| j != target).map(|j| (j, new[j])).collect();
            Instance {
                x,
                hp,
                model,
                target,
                new_row,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // Filling an empty row changes the loss by the sum of elementwise changes.
    #[test]
    fn lemma_identity(inst in arb_instance()) {
        let Instance { x, hp, model, target: i, new_row } = inst;
        let xd = dense(&x);
        let w = dense_w(&model);
        let mut w2 = w.clone();
        for (j, v) in new_row.iter() {
            w2[i][j] = v;
        }
        let lhs = dense_loss(&xd, &w2, hp);

        let state = GreedyState::from_model(&x, &model, hp).unwrap();
        let base = slim_loss(&x, &model, hp).unwrap();
        let n = x.num_items();
        let sum: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| state.elementwise_loss(i, j, new_row.get(j)).unwrap() - state.elementwise_loss(i, j, 0.0).unwrap())
            .sum();
        prop_assert!(rel_err(lhs, base + sum) <= 1e-9, "lhs {lhs} rhs {}", base + sum);
        let delta = state.given_row_delta(i, &new_row).unwrap();
        prop_assert!(rel_err(lhs, base + delta) <= 1e-9);

        // elementwise losses agree with the dense definition
        let xhat = residual(&xd, &w);
        for j in (0..n).filter(|&j| j != i) {
            let v = new_row.get(j);
            prop_assert!(rel_err(state.elementwise_loss(i, j, v).unwrap(), dense_lij(&xd, &xhat, i, j, v, hp)) <= 1e-9);
        }
    }

    #[test]
    fn closed_form_is_optimal(inst in arb_instance(), j_pick in 0usize..8) {
        let Instance { x, hp, model, target: i, .. } = inst;
        let n = x.num_items();
        let j = (i + 1 + j_pick % (n - 1)) % n;
        let state = GreedyState::from_model(&x, &model, hp).unwrap();
        let ws = state.optimal_weight(i, j).unwrap();
        prop_assert!(ws >= 0.0);
        let at_opt = state.elementwise_loss(i, j, ws).unwrap();
        for k in 0..200 {
            let w = (2.0 * ws + 1.0) * k as f64 / 199.0;
            prop_assert!(at_opt <= state.elementwise_loss(i, j, w).unwrap() + 1e-12 * at_opt.abs().max(1.0));
        }
        let xhat = residual(&dense(&x), &dense_w(&model));
        prop_assert!((ws - dense_wstar(&dense(&x), &xhat, i, j, hp)).abs() <= 1e-9 * ws.max(1.0));
    }

    // Every round picks the candidate a full brute-force recomputation picks.
    #[test]
    fn greedy_step_matches_brute_force(x in arb_matrix(10, 6), hp in arb_hyper()) {
        let n = x.num_items();
        let (model, log) = train_greedy(&x, hp, n, GreedyOptions { execution: Execution::Sequential, ..Default::default() }).unwrap();
        let xd = dense(&x);
        let mut w = vec![vec![0.0; n]; n];
        let mut filled = Vec::new();
        let mut prev = frob_sq(&xd);
        for entry in &log {
            let cands = brute_force_candidates(&xd, &w, &filled, hp);
            let expect = first_argmin(&cands, 1e-12);
            prop_assert_eq!(entry.item, expect);
            let (_, loss, row) = cands.iter().find(|c| c.0 == expect).unwrap().clone();
            prop_assert!(rel_err(entry.loss, loss) <= 1e-9);
            prop_assert!(entry.delta <= 1e-12);
            prop_assert!(entry.loss <= prev + 1e-12 * prev.abs().max(1.0));
            prev = entry.loss;
            w[expect] = row;
            filled.push(expect);
        }
        prop_assert!(rel_err(slim_loss(&x, &model, hp).unwrap(), dense_loss(&xd, &w, hp)) <= 1e-9);
        // constraints
        for r in model.rows() {
            prop_assert!(r.weights.iter().all(|(j, v)| v > 0.0 && j != r.item));
        }
    }

    #[test]
    fn sequential_and_parallel_agree(x in arb_matrix(12, 8), hp in arb_hyper()) {
        let n = x.num_items();
        let seq = train_greedy(&x, hp, n, GreedyOptions { execution: Execution::Sequential, ..Default::default() }).unwrap();
        let par = train_greedy(&x, hp, n, GreedyOptions { execution: Execution::Parallel, ..Default::default() }).unwrap();
        prop_assert_eq!(seq.0, par.0);
    }
}

#[test]
fn incremental_residual_matches_scratch() {
    let x = gslim::synthetic::ratings(500, 200, 0.05, 11);
    let hp = HyperParams::new(4.0, 16.0).unwrap();
    let (trained, _) = train_greedy(&x, hp, 20, GreedyOptions::default()).unwrap();
    // replay the rows into a fresh state so every cached quantity is incremental
    let mut state = GreedyState::new(&x, hp);
    for row in trained.rows() {
        state.fill(row.item, row.weights.clone()).unwrap();
    }
    let oracle = residual(&dense(&x), &dense_w(&trained));
    let norm = frob_sq(&oracle).sqrt();
    let diff = |r: &Dense| -> f64 {
        r.iter().zip(&oracle).flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2))).sum::<f64>().sqrt()
    };
    assert!(diff(&state.residual_dense()) / norm <= 1e-8);
    assert!(diff(&state.residual_dense_from_scratch()) / norm <= 1e-8);
    for j in 0..x.num_items() {
        let col: f64 = oracle.iter().map(|r| r[j] * r[j]).sum();
        assert!(rel_err(state.residual_col_sq(j), col) <= 1e-8, "column {j}");
    }
    assert!(rel_err(state.loss(), dense_loss(&dense(&x), &dense_w(&trained), hp)) <= 1e-8);
}
