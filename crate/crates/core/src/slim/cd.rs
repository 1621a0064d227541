use serde::Serialize;

use super::{HyperParams, SlimModel, Trainer};
use crate::{Error, Execution, InteractionMatrix, Result, SparseVec};

#[derive(Clone, Copy, Debug)]
pub struct CdOptions {
    pub max_sweeps: usize,
    /// Relative loss change below which a column stops.
    pub tol: f64,
    pub execution: Execution,
}

impl Default for CdOptions {
    fn default() -> Self {
        CdOptions {
            max_sweeps: 50,
            tol: 1e-4,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CdLog {
    /// Total objective before the first sweep, then after each sweep.
    pub sweep_losses: Vec<f64>,
    /// Sweeps run by each column.
    pub column_sweeps: Vec<usize>,
}

struct ColumnFit {
    weights: Vec<(usize, f64)>,
    /// Loss of this column before any sweep, then after each sweep.
    losses: Vec<f64>,
}

/// Cyclic coordinate descent, one independent problem per target column `j`:
/// `min |x_j - X w_j|^2 + lambda_F |w_j|^2 + lambda_1 |w_j|_1` with
/// `w_j >= 0` and `w_jj = 0`.
///
/// Only items co-rated with `j` are visited: starting from zero, a coordinate
/// without co-ratings has a non-positive soft-threshold numerator forever.
/// Each column stops on its own once a sweep changes its loss by less than
/// `tol` (relative). A sweep that would increase the loss through rounding is
/// discarded, so every column's loss sequence is non-increasing.
pub fn train_coordinate_descent(x: &InteractionMatrix, hp: HyperParams, opts: CdOptions) -> Result<(SlimModel, CdLog)> {
    hp.validate()?;
    if opts.max_sweeps == 0 || !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("max_sweeps must be >= 1 and tol > 0".into()));
    }
    let n = x.num_items();
    let m = x.num_users();
    let sq_norms = x.col_sq_norms();

    let fits = opts.execution.map_init(
        n,
        || (vec![false; n], vec![0.0; m]),
        |(mark, residual), j| fit_column(x, j, hp, &opts, &sq_norms, mark, residual),
    );

    let mut log = CdLog::default();
    let longest = fits.iter().map(|f| f.losses.len()).max().unwrap_or(1);
    for s in 0..longest {
        let total: f64 = fits.iter().map(|f| f.losses[s.min(f.losses.len() - 1)]).sum();
        log.sweep_losses.push(total);
    }
    log.column_sweeps = fits.iter().map(|f| f.losses.len() - 1).collect();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (j, fit) in fits.into_iter().enumerate() {
        for (i, w) in fit.weights {
            rows[i].push((j, w));
        }
    }
    let mut model = SlimModel::new(n, hp, Trainer::CoordinateDescent);
    for (i, row) in rows.into_iter().enumerate() {
        if !row.is_empty() {
            model.push_row(i, SparseVec::from_pairs(row))?;
        }
    }
    Ok((model, log))
}

fn fit_column(
    x: &InteractionMatrix,
    j: usize,
    hp: HyperParams,
    opts: &CdOptions,
    sq_norms: &[f64],
    mark: &mut [bool],
    residual: &mut [f64],
) -> ColumnFit {
    let target = x.col(j);
    let mut candidates = Vec::new();
    for (u, _) in target.iter() {
        for &i in x.row(u).indices() {
            if i != j && !mark[i] {
                mark[i] = true;
                candidates.push(i);
            }
        }
    }
    for &i in &candidates {
        mark[i] = false;
    }
    candidates.sort_unstable();

    residual.iter_mut().for_each(|r| *r = 0.0);
    for (u, v) in target.iter() {
        residual[u] = v;
    }
    let mut w = vec![0.0; candidates.len()];
    let mut losses = vec![target.sq_norm()];
    if candidates.is_empty() {
        return ColumnFit { weights: Vec::new(), losses };
    }

    let mut saved_w = w.clone();
    let mut saved_residual: Vec<(usize, f64)> = Vec::new();
    for _ in 0..opts.max_sweeps {
        saved_w.copy_from_slice(&w);
        saved_residual.clear();
        for (c, &i) in candidates.iter().enumerate() {
            let col = x.col(i);
            let old = w[c];
            let dot: f64 = col.iter().map(|(u, v)| v * residual[u]).sum();
            let denom = sq_norms[i] + hp.lambda_f;
            let rho = dot + sq_norms[i] * old;
            let new = if denom > 0.0 {
                ((rho - hp.lambda_1 / 2.0) / denom).max(0.0)
            } else {
                0.0
            };
            if new != old {
                let step = new - old;
                for (u, v) in col.iter() {
                    saved_residual.push((u, residual[u]));
                    residual[u] -= v * step;
                }
                w[c] = new;
            }
        }
        let loss = column_loss(residual, &w, hp);
        let prev = *losses.last().unwrap();
        if loss > prev {
            w.copy_from_slice(&saved_w);
            for &(u, r) in saved_residual.iter().rev() {
                residual[u] = r;
            }
            break;
        }
        losses.push(loss);
        if prev == 0.0 || (prev - loss) / prev < opts.tol {
            break;
        }
    }

    let weights = candidates
        .into_iter()
        .zip(w)
        .filter(|&(_, v)| v > 0.0)
        .collect();
    ColumnFit { weights, losses }
}

fn column_loss(residual: &[f64], w: &[f64], hp: HyperParams) -> f64 {
    let fit: f64 = residual.iter().map(|r| r * r).sum();
    let penalty: f64 = w.iter().map(|&v| hp.lambda_1 * v + hp.lambda_f * v * v).sum();
    fit + penalty
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slim::slim_loss;

    #[test]
    fn two_items_one_user_interpolates() {
        let x = InteractionMatrix::from_triplets(1, 2, [(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let hp = HyperParams::new(0.0, 0.0).unwrap();
        let (w, _) = train_coordinate_descent(&x, hp, CdOptions::default()).unwrap();
        assert_eq!(w.row(0).unwrap().get(1), 1.0);
        assert_eq!(w.row(1).unwrap().get(0), 1.0);
        assert_eq!(slim_loss(&x, &w, hp).unwrap(), 0.0);
    }

    #[test]
    fn huge_l1_kills_everything() {
        let x = InteractionMatrix::from_triplets(
            3,
            3,
            [(0, 0, 5.0), (0, 1, 4.0), (1, 1, 3.0), (1, 2, 5.0), (2, 0, 2.0), (2, 2, 1.0)],
        )
        .unwrap();
        // 2 * max co-occurrence = 2 * 20
        let hp = HyperParams::new(40.0, 1.0).unwrap();
        let (w, log) = train_coordinate_descent(&x, hp, CdOptions::default()).unwrap();
        assert_eq!(w.nnz(), 0);
        assert_eq!(log.sweep_losses[0], x.frobenius_sq());
    }

    #[test]
    fn loss_trajectory_matches_model_and_never_increases() {
        let x = crate::synthetic::ratings(30, 12, 0.4, 11);
        let hp = HyperParams::default();
        let (w, log) = train_coordinate_descent(&x, hp, CdOptions::default()).unwrap();
        for pair in log.sweep_losses.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        let direct = slim_loss(&x, &w, hp).unwrap();
        let last = *log.sweep_losses.last().unwrap();
        assert!((direct - last).abs() <= 1e-9 * direct.max(1.0));
        w.validate().unwrap();
    }

    #[test]
    fn rejects_bad_options() {
        let x = InteractionMatrix::from_triplets(1, 2, [(0, 0, 1.0)]).unwrap();
        let bad = CdOptions { max_sweeps: 0, ..CdOptions::default() };
        assert!(train_coordinate_descent(&x, HyperParams::default(), bad).is_err());
    }
}
