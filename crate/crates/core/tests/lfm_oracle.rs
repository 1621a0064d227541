mod common;

use common::*;
use gslim::lfm::{train_pure_svd, LfmModel, SvdMethod, SvdOptions};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn to_dmatrix(d: &Dense, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d.len(), n, |u, i| d[u][i])
}

/// Sum of the eigenvalues of `X^T X` beyond the top `f`: the best possible
/// rank-`f` reconstruction error.
fn optimal_tail(x: &DMatrix<f64>, f: usize) -> f64 {
    let mut ev: Vec<f64> = SymmetricEigen::new(x.transpose() * x).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev.iter().skip(f).map(|v| v.max(0.0)).sum()
}

fn reconstruction_error(x: &DMatrix<f64>, lfm: &LfmModel) -> f64 {
    let q = lfm.item_factors();
    (x - x * q * q.transpose()).norm_squared()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn matches_dense_oracle(
        x in arb_matrix(20, 15),
        f_pick in 1usize..15,
        seed in any::<u64>(),
        randomized in any::<bool>(),
    ) {
        let (m, n) = (x.num_users(), x.num_items());
        let f = 1 + (f_pick - 1) % m.min(n);
        let method = if randomized { SvdMethod::Randomized } else { SvdMethod::Dense };
        let lfm = train_pure_svd(&x, f, seed, SvdOptions { method, ..Default::default() }).unwrap();
        prop_assert!(lfm.orthonormality_error() <= 1e-8, "orthonormality {}", lfm.orthonormality_error());

        let xd = to_dmatrix(&dense(&x), n);
        let best = optimal_tail(&xd, f);
        let got = reconstruction_error(&xd, &lfm);
        let scale = xd.norm_squared().max(1.0);
        prop_assert!(got >= best - 1e-9 * scale);
        prop_assert!((got - best) <= 1e-3 * best.max(1e-9 * scale), "got {got} best {best}");

        // fold-in user factors are X Q
        let p = &xd * lfm.item_factors();
        prop_assert!((p - lfm.user_factors()).amax() <= 1e-9 * scale.sqrt());

        // predictions do not depend on the sign of any factor column
        let mut q = lfm.item_factors().clone();
        let mut pu = lfm.user_factors().clone();
        for k in (0..f).step_by(2) {
            q.column_mut(k).neg_mut();
            pu.column_mut(k).neg_mut();
        }
        let flipped = LfmModel::from_parts(q, pu, 0).unwrap();
        for u in 0..m {
            for i in 0..n {
                prop_assert!((flipped.predict_rating(u, i) - lfm.predict_rating(u, i)).abs() <= 1e-9 * scale.sqrt());
            }
        }
    }
}

#[test]
fn randomized_and_dense_agree_on_predictions() {
    let x = gslim::synthetic::ratings(60, 40, 0.3, 5);
    let dense_model = train_pure_svd(&x, 5, 1, SvdOptions { method: SvdMethod::Dense, ..Default::default() }).unwrap();
    let rand_model = train_pure_svd(&x, 5, 1, SvdOptions { method: SvdMethod::Randomized, ..Default::default() }).unwrap();
    let xd = to_dmatrix(&dense(&x), 40);
    let a = reconstruction_error(&xd, &dense_model);
    let b = reconstruction_error(&xd, &rand_model);
    assert!((a - b).abs() <= 1e-3 * a, "{a} vs {b}");
}
