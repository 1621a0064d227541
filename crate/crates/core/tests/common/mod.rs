//! Dense brute-force oracles and proptest generators shared by the
//! integration tests. Nothing here calls into the code under test except to
//! read inputs back out.
#![allow(dead_code)]

use gslim::{HyperParams, InteractionMatrix, SlimModel};
use proptest::prelude::*;

pub type Dense = Vec<Vec<f64>>;

pub fn dense(x: &InteractionMatrix) -> Dense {
    let mut d = vec![vec![0.0; x.num_items()]; x.num_users()];
    for (u, i, r) in x.triplets() {
        d[u][i] = r;
    }
    d
}

/// `n x n` weight matrix of a model.
pub fn dense_w(model: &SlimModel) -> Dense {
    let n = model.num_items();
    let mut w = vec![vec![0.0; n]; n];
    for row in model.rows() {
        for (j, v) in row.weights.iter() {
            w[row.item][j] = v;
        }
    }
    w
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (m, k) = (a.len(), b.len());
    let n = if k == 0 { 0 } else { b[0].len() };
    let mut c = vec![vec![0.0; n]; m];
    for r in 0..m {
        for t in 0..k {
            let av = a[r][t];
            if av != 0.0 {
                for col in 0..n {
                    c[r][col] += av * b[t][col];
                }
            }
        }
    }
    c
}

pub fn residual(x: &Dense, w: &Dense) -> Dense {
    let xw = matmul(x, w);
    x.iter()
        .zip(&xw)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
        .collect()
}

pub fn frob_sq(a: &Dense) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

/// `|X - XW|^2 + lambda_F |W|^2 + lambda_1 |W|_1`, written out term by term.
pub fn dense_loss(x: &Dense, w: &Dense, hp: HyperParams) -> f64 {
    let fit = frob_sq(&residual(x, w));
    let l2: f64 = w.iter().flatten().map(|v| v * v).sum();
    let l1: f64 = w.iter().flatten().map(|v| v.abs()).sum();
    fit + hp.lambda_f * l2 + hp.lambda_1 * l1
}

/// `l_ij(w)` against an explicit residual.
pub fn dense_lij(x: &Dense, xhat: &Dense, i: usize, j: usize, w: f64, hp: HyperParams) -> f64 {
    let fit: f64 = x.iter().zip(xhat).map(|(xu, ru)| (ru[j] - xu[i] * w).powi(2)).sum();
    hp.lambda_1 * w + hp.lambda_f * w * w + fit
}

/// Minimiser of the 1-D quadratic `l_ij` on `w >= 0`, by completing the square.
pub fn dense_wstar(x: &Dense, xhat: &Dense, i: usize, j: usize, hp: HyperParams) -> f64 {
    let a: f64 = x.iter().zip(xhat).map(|(xu, ru)| xu[i] * ru[j]).sum();
    let s: f64 = x.iter().map(|xu| xu[i] * xu[i]).sum();
    let curvature = hp.lambda_f + s;
    if curvature <= 0.0 {
        return 0.0;
    }
    // l(w) = curvature w^2 - (2a - lambda_1) w + const
    ((2.0 * a - hp.lambda_1) / (2.0 * curvature)).max(0.0)
}

/// Every empty row filled optimally in turn; returns `(item, full loss)` per candidate.
pub fn brute_force_candidates(x: &Dense, w: &Dense, filled: &[usize], hp: HyperParams) -> Vec<(usize, f64, Vec<f64>)> {
    let n = w.len();
    let xhat = residual(x, w);
    (0..n)
        .filter(|i| !filled.contains(i))
        .map(|i| {
            let mut w2 = w.clone();
            let row: Vec<f64> = (0..n)
                .map(|j| if j == i { 0.0 } else { dense_wstar(x, &xhat, i, j, hp) })
                .collect();
            w2[i] = row.clone();
            (i, dense_loss(x, &w2, hp), row)
        })
        .collect()
}

/// First candidate whose loss is within `rtol` of the best.
pub fn first_argmin(cands: &[(usize, f64, Vec<f64>)], rtol: f64) -> usize {
    let best = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let bound = best + rtol * best.abs().max(1.0);
    cands.iter().find(|c| c.1 <= bound).unwrap().0
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Random integer ratings 0..=5 where 0 means missing.
pub fn arb_matrix(max_m: usize, max_n: usize) -> impl Strategy<Value = InteractionMatrix> {
    (1..=max_m, 2..=max_n)
        .prop_flat_map(|(m, n)| (Just(m), Just(n), prop::collection::vec(0u8..=5, m * n)))
        .prop_map(|(m, n, vals)| {
            let trip = vals
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0)
                .map(|(k, &v)| (k / n, k % n, v as f64));
            InteractionMatrix::from_triplets(m, n, trip).unwrap()
        })
}

pub fn arb_hyper() -> impl Strategy<Value = HyperParams> {
    (
        prop::sample::select(vec![0.0, 0.5, 1.0, 3.0, 8.0]),
        prop::sample::select(vec![0.0, 0.25, 1.0, 4.0]),
    )
        .prop_map(|(l1, lf)| HyperParams::new(l1, lf).unwrap())
}

/// Independent ranking metrics written from their definitions.
pub mod metrics {
    pub fn gain(r: f64) -> f64 {
        2f64.powf(r) - 1.0
    }

    pub fn dcg(ratings: &dyn Fn(usize) -> f64, ranked: &[usize]) -> f64 {
        let mut total = 0.0;
        for (pos, &i) in ranked.iter().enumerate() {
            let j = (pos + 1) as f64;
            total += gain(ratings(i)) / (j + 1.0).log2();
        }
        total
    }

    /// Ideal DCG by trying the user's rated items of `pool` sorted by rating.
    pub fn ndcg(user: &[(usize, f64)], ranked: &[usize], n: usize, pool: &dyn Fn(usize) -> bool) -> f64 {
        let rating = |i: usize| user.iter().find(|p| p.0 == i).map_or(0.0, |p| p.1);
        let mut ideal: Vec<(usize, f64)> = user.iter().copied().filter(|p| pool(p.0) && p.1 > 0.0).collect();
        ideal.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let ideal: Vec<usize> = ideal.into_iter().take(n).map(|p| p.0).collect();
        let best = dcg(&rating, &ideal);
        if best == 0.0 {
            return 0.0;
        }
        let cut: Vec<usize> = ranked.iter().take(n).copied().collect();
        dcg(&rating, &cut) / best
    }

    pub fn precision_recall(relevant: &[usize], recs: &[usize], n: usize) -> (f64, f64) {
        let cut: Vec<usize> = recs.iter().take(n).copied().collect();
        let hits = cut.iter().filter(|i| relevant.contains(i)).count();
        let p = if cut.is_empty() { 0.0 } else { hits as f64 / cut.len() as f64 };
        let r = if relevant.is_empty() { 0.0 } else { hits as f64 / relevant.len() as f64 };
        (p, r)
    }
}
