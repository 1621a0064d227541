//! Sequential versus parallel execution of the data-parallel kernels.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gslim::elicitation::{q_gslim, SlimRecommender};
use gslim::evaluation::{simulate_cold_start, EvalConfig};
use gslim::greedy::{train_greedy, GreedyOptions};
use gslim::interactions::{short_head_split, split_users};
use gslim::slim::{train_coordinate_descent, CdOptions};
use gslim::slim::slim_loss_with;
use gslim::synthetic::MovieLensLike;
use gslim::{Execution, HyperParams};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn data() -> gslim::InteractionMatrix {
    MovieLensLike {
        num_users: 600,
        num_items: 800,
        mean_ratings_per_user: 60.0,
        min_ratings_per_user: 20,
        latent_dim: 8,
        seed: 7,
    }
    .generate()
}

fn greedy_scan(c: &mut Criterion) {
    let x = data();
    let hp = HyperParams::new(64.0, 256.0).unwrap();
    let mut g = c.benchmark_group("greedy_5_rows");
    g.sample_size(10);
    for (name, execution) in MODES {
        let opts = GreedyOptions { execution, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train_greedy(&x, hp, 5, opts).unwrap())
        });
    }
    g.finish();
}

fn loss_and_cd(c: &mut Criterion) {
    let x = data();
    let hp = HyperParams::new(64.0, 256.0).unwrap();
    let (model, _) = train_greedy(&x, hp, 20, GreedyOptions::default()).unwrap();
    let mut g = c.benchmark_group("slim_loss");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| slim_loss_with(&x, &model, hp, exec).unwrap())
        });
    }
    g.finish();

    let small = MovieLensLike { num_users: 300, num_items: 200, mean_ratings_per_user: 30.0, min_ratings_per_user: 10, latent_dim: 4, seed: 3 }.generate();
    let mut g = c.benchmark_group("coordinate_descent");
    g.sample_size(10);
    for (name, execution) in MODES {
        let opts = CdOptions { max_sweeps: 5, execution, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train_coordinate_descent(&small, hp, opts).unwrap())
        });
    }
    g.finish();
}

fn harness(c: &mut Criterion) {
    let x = data();
    let split = split_users(&x, 0.2, 1).unwrap();
    let pop = short_head_split(&split.train, 0.33).unwrap();
    let hp = HyperParams::new(64.0, 256.0).unwrap();
    let (model, _) = train_greedy(&split.train, hp, 10, GreedyOptions::default()).unwrap();
    let q = q_gslim(&model, 10).unwrap();
    let r = SlimRecommender::new("r_gslim", Arc::new(model));
    let mut g = c.benchmark_group("cold_start_harness");
    g.sample_size(10);
    for (name, execution) in MODES {
        let cfg = EvalConfig { checkpoints: vec![5, 10], execution, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_cold_start(Some(&q), &r, &split, &cfg, &pop).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, greedy_scan, loss_and_cd, harness);
criterion_main!(benches);
