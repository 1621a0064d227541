mod common;

use common::*;
use gslim::slim::{
    predict_scores, read_model, slim_loss, top_n, train_coordinate_descent, write_model, CdOptions, Trainer,
};
use gslim::{Execution, ItemSet, SlimModel, SparseVec};
use proptest::prelude::*;

fn arb_model(n: usize) -> impl Strategy<Value = SlimModel> {
    let weight = prop::sample::select(vec![0.0, 0.0, 0.25, 0.5, 1.0, 1.75]);
    (prop::collection::vec(weight, n * n), Just(n)).prop_map(|(w, n)| {
        let mut m = SlimModel::new(n, Default::default(), Trainer::CoordinateDescent);
        for i in 0..n {
            let row: SparseVec = (0..n).filter(|&j| j != i).map(|j| (j, w[i * n + j])).collect();
            if !row.is_empty() {
                m.push_row(i, row).unwrap();
            }
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn loss_matches_dense(
        (x, model) in arb_matrix(20, 15).prop_flat_map(|x| { let n = x.num_items(); (Just(x), arb_model(n)) }),
        hp in arb_hyper(),
    ) {
        let oracle = dense_loss(&dense(&x), &dense_w(&model), hp);
        prop_assert!(rel_err(slim_loss(&x, &model, hp).unwrap(), oracle) <= 1e-9);
    }

    #[test]
    fn scores_are_linear(
        (a, b, model) in (2usize..12).prop_flat_map(|n| {
            let v = prop::collection::vec(prop::sample::select(vec![0.0, 0.0, 1.0, 2.0, 4.5, 5.0]), n);
            (v.clone(), v, arb_model(n))
        }),
    ) {
        let to_sparse = |v: &[f64]| -> SparseVec { v.iter().enumerate().filter(|p| *p.1 != 0.0).map(|(i, &r)| (i, r)).collect() };
        let sum: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        let sa = predict_scores(to_sparse(&a).view(), &model);
        let sb = predict_scores(to_sparse(&b).view(), &model);
        let ss = predict_scores(to_sparse(&sum).view(), &model);
        for k in 0..model.num_items() {
            prop_assert!((ss[k] - sa[k] - sb[k]).abs() <= 1e-12 * ss[k].abs().max(1.0));
        }
        // scores are x_u W
        let w = dense_w(&model);
        for (k, s) in sa.iter().enumerate() {
            let direct: f64 = a.iter().enumerate().map(|(i, r)| r * w[i][k]).sum();
            prop_assert!((s - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn top_n_is_sorted_filtered_prefix(
        (row, model, allowed, n) in (2usize..12).prop_flat_map(|k| {
            (
                prop::collection::vec(prop::sample::select(vec![0.0, 0.0, 3.0, 5.0]), k),
                arb_model(k),
                prop::collection::vec(any::<bool>(), k),
                0usize..14,
            )
        }),
    ) {
        let k = model.num_items();
        let x_u: SparseVec = row.iter().enumerate().filter(|p| *p.1 != 0.0).map(|(i, &r)| (i, r)).collect();
        let allowed = ItemSet::from_items(k, (0..k).filter(|&i| allowed[i]));
        let got = top_n(x_u.view(), &model, n, &allowed);
        let scores = predict_scores(x_u.view(), &model);
        let mut expect: Vec<usize> = (0..k).filter(|&i| allowed.contains(i) && x_u.get(i) == 0.0).collect();
        expect.sort_by(|&p, &q| scores[q].partial_cmp(&scores[p]).unwrap().then(p.cmp(&q)));
        expect.truncate(n);
        prop_assert_eq!(got, expect);
    }

    #[test]
    fn model_text_round_trip(model in (2usize..10).prop_flat_map(arb_model)) {
        let mut buf = Vec::new();
        write_model(&mut buf, &model, &[("k", "v")]).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn coordinate_descent_is_monotone(x in arb_matrix(12, 8), hp in arb_hyper()) {
        for execution in [Execution::Sequential, Execution::Parallel] {
            let (model, log) = train_coordinate_descent(&x, hp, CdOptions { execution, ..Default::default() }).unwrap();
            for w in log.sweep_losses.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{:?}", log.sweep_losses);
            }
            let final_loss = *log.sweep_losses.last().unwrap();
            prop_assert!(rel_err(final_loss, slim_loss(&x, &model, hp).unwrap()) <= 1e-9);
            prop_assert!(model.validate().is_ok());
            for r in model.rows() {
                prop_assert!(r.weights.iter().all(|(j, v)| v > 0.0 && j != r.item));
            }
        }
    }
}
