mod common;

use std::sync::Arc;

use common::metrics as oracle;
use gslim::elicitation::{q_gslim, q_pop, BanditQuestionnaire, BanditRecommender, GainRecommender, SlimRecommender};
use gslim::evaluation::{
    baseline_gain_report, ndcg_at, precision_recall_at, simulate_cold_start, write_per_user_csv, write_report_json,
    EvalConfig, EvalReport, Metric, Restriction,
};
use gslim::greedy::{train_greedy, GreedyOptions};
use gslim::interactions::{short_head_split, split_users, DatasetSplit, PopularitySplit};
use gslim::lfm::{train_pure_svd, SvdOptions};
use gslim::{Execution, HyperParams, InteractionMatrix, ItemSet, SparseVec};
use proptest::prelude::*;

/// Checks every per-user value of `report` against the independent metrics.
fn check_against_oracle(report: &EvalReport, split: &DatasetSplit, pop: &PopularitySplit) -> Result<(), TestCaseError> {
    let n_items = split.test.num_items();
    let restriction = |i: usize| match report.meta.restriction {
        Restriction::All => true,
        Restriction::LongTail => pop.long_tail.contains(&i),
    };
    for (u, res) in report.users.iter().enumerate() {
        let truth: Vec<(usize, f64)> = split.test.row(u).iter().collect();
        let trace = res.trace.as_ref().unwrap();
        for (c, _) in report.meta.checkpoints.iter().enumerate() {
            let k = res.questions[c];
            let asked = &trace.asked[..k];
            let recs = &trace.recommendations[c];
            for i in recs {
                prop_assert!(!asked.contains(i));
                prop_assert!(restriction(*i));
                prop_assert!(*i < n_items);
            }
            let pool = |i: usize| restriction(i) && !asked.contains(&i);
            let relevant: Vec<usize> = truth
                .iter()
                .map(|p| p.0)
                .filter(|i| report.meta.include_asked_in_relevants || !asked.contains(i))
                .collect();
            for (kn, &n) in report.meta.ns.iter().enumerate() {
                let ndcg = oracle::ndcg(&truth, recs, n, &pool);
                let (p, r) = oracle::precision_recall(&relevant, recs, n);
                let got = |m| res.values[report.value_index(c, m, kn)];
                prop_assert!((got(Metric::Ndcg) - ndcg).abs() <= 1e-12, "ndcg {} vs {ndcg}", got(Metric::Ndcg));
                prop_assert!((got(Metric::Precision) - p).abs() <= 1e-12);
                prop_assert!((got(Metric::Recall) - r).abs() <= 1e-12);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&ndcg));
                let returned = recs.len().min(n) as f64;
                let hits_p = got(Metric::Precision) * returned;
                let hits_r = got(Metric::Recall) * relevant.len() as f64;
                prop_assert!((hits_p - hits_p.round()).abs() <= 1e-9 && (hits_r - hits_r.round()).abs() <= 1e-9);
            }
        }
    }
    // means are arithmetic means of the per-user columns
    for a in &report.aggregates {
        let c = report.meta.checkpoints.iter().position(|&x| x == a.checkpoint).unwrap();
        let kn = report.meta.ns.iter().position(|&x| x == a.n).unwrap();
        let col: Vec<f64> = report.users.iter().map(|r| r.values[report.value_index(c, a.metric, kn)]).collect();
        let mean = if col.is_empty() { 0.0 } else { col.iter().sum::<f64>() / col.len() as f64 };
        prop_assert!((a.mean - mean).abs() <= 1e-12);
    }
    Ok(())
}

fn arb_setup() -> impl Strategy<Value = (InteractionMatrix, u64, bool, bool)> {
    (4usize..30, 3usize..12, 0.15f64..0.7, any::<u64>(), any::<bool>(), any::<bool>()).prop_map(
        |(m, n, density, seed, long_tail, include_asked)| {
            (gslim::synthetic::ratings(m, n, density, seed), seed, long_tail, include_asked)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn harness_matches_oracle((x, seed, long_tail, include_asked) in arb_setup()) {
        prop_assume!(x.nnz() > 0);
        let split = split_users(&x, 0.3, seed).unwrap();
        prop_assume!(split.train.nnz() > 0);
        let pop = short_head_split(&split.train, 0.33).unwrap();
        let cfg = EvalConfig {
            checkpoints: vec![0, 1, 3, 5],
            ns: vec![1, 3, 5],
            restriction: if long_tail { Restriction::LongTail } else { Restriction::All },
            seed,
            include_asked_in_relevants: include_asked,
            execution: Execution::Sequential,
        };
        let hp = HyperParams::new(1.0, 2.0).unwrap();
        let n = x.num_items();
        let (model, _) = train_greedy(&split.train, hp, n.min(5), GreedyOptions::default()).unwrap();
        let q = q_gslim(&model, n.min(5)).unwrap();
        let r = SlimRecommender::new("r_gslim", Arc::new(model));
        let report = simulate_cold_start(Some(&q), &r, &split, &cfg, &pop).unwrap();
        check_against_oracle(&report, &split, &pop)?;

        let base = baseline_gain_report(&split, &cfg, &pop).unwrap();
        check_against_oracle(&base, &split, &pop)?;

        let qp = q_pop(&split.train);
        let g = GainRecommender::new(&split.train);
        let report = simulate_cold_start(Some(&qp), &g, &split, &cfg, &pop).unwrap();
        check_against_oracle(&report, &split, &pop)?;
        // checkpoint 0 is the questionnaire-free baseline
        for m in Metric::ALL {
            for &nn in &cfg.ns {
                prop_assert_eq!(report.mean(0, m, nn), base.mean(0, m, nn));
            }
        }
    }

    #[test]
    fn ndcg_bounds(
        ratings in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0, 3.0, 4.5, 5.0]), 1..15),
        perm_seed in any::<u64>(),
        n in 1usize..15,
    ) {
        let k = ratings.len();
        let row: SparseVec = ratings.iter().enumerate().filter(|p| *p.1 > 0.0).map(|(i, &r)| (i, r)).collect();
        let all = ItemSet::full(k);
        let mut ranked: Vec<usize> = (0..k).collect();
        // deterministic shuffle
        let mut s = perm_seed;
        for i in (1..k).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ranked.swap(i, (s >> 33) as usize % (i + 1));
        }
        let v = ndcg_at(row.view(), &ranked, n, &all);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        let mut ideal: Vec<usize> = (0..k).collect();
        ideal.sort_by(|&a, &b| ratings[b].partial_cmp(&ratings[a]).unwrap().then(a.cmp(&b)));
        let best = ndcg_at(row.view(), &ideal, n, &all);
        if row.is_empty() {
            prop_assert_eq!(best, 0.0);
        } else {
            prop_assert!((best - 1.0).abs() <= 1e-12);
        }
        let relevant: Vec<usize> = row.indices().to_vec();
        let (p, r) = precision_recall_at(&relevant, &ranked, n);
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
    }
}

fn render(report: &EvalReport) -> (Vec<u8>, Vec<u8>) {
    let mut json = Vec::new();
    write_report_json(&mut json, report).unwrap();
    let mut csv = Vec::new();
    write_per_user_csv(&mut csv, report).unwrap();
    (json, csv)
}

#[test]
fn reports_are_deterministic_across_execution_modes() {
    let x = gslim::synthetic::MovieLensLike {
        num_users: 120,
        num_items: 60,
        mean_ratings_per_user: 15.0,
        min_ratings_per_user: 5,
        latent_dim: 4,
        seed: 2,
    }
    .generate();
    let split = split_users(&x, 0.25, 4).unwrap();
    let pop = short_head_split(&split.train, 0.33).unwrap();
    let lfm = Arc::new(train_pure_svd(&split.train, 8, 3, SvdOptions::default()).unwrap());
    let q = BanditQuestionnaire::new(lfm.clone(), 1.0).unwrap();
    let r = BanditRecommender::new(lfm);
    let run = |execution| {
        let cfg = EvalConfig { seed: 17, execution, ..Default::default() };
        render(&simulate_cold_start(Some(&q), &r, &split, &cfg, &pop).unwrap())
    };
    let a = run(Execution::Sequential);
    assert_eq!(a, run(Execution::Parallel));
    assert_eq!(a, run(Execution::Parallel));
    let cfg = EvalConfig { seed: 18, ..Default::default() };
    let other = render(&simulate_cold_start(Some(&q), &r, &split, &cfg, &pop).unwrap());
    assert_ne!(a.1, other.1, "a different seed should change the bandit sessions");
}
