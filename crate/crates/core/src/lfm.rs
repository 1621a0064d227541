//! PureSVD latent factors.
//!
//! Item factors are the top-`f` right singular vectors of the zero-filled
//! rating matrix; user factors are folded in as `p_u = Q^T x_u`, so
//! `p_u . q_i = (X Q Q^T)_ui`.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::slim::io::fmt_real;
use crate::{Error, Execution, InteractionMatrix, Result, SparseView};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvdMethod {
    /// Dense SVD for small inputs, randomized otherwise.
    Auto,
    Dense,
    Randomized,
}

#[derive(Clone, Copy, Debug)]
pub struct SvdOptions {
    pub method: SvdMethod,
    pub oversampling: usize,
    pub power_iterations: usize,
    /// `Auto` uses the dense path up to this many matrix entries.
    pub dense_limit: usize,
    pub execution: Execution,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            method: SvdMethod::Auto,
            oversampling: 10,
            power_iterations: 4,
            dense_limit: 250_000,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LfmModel {
    /// `n x f`, orthonormal columns.
    item_factors: DMatrix<f64>,
    /// `m x f`.
    user_factors: DMatrix<f64>,
    seed: u64,
}

impl LfmModel {
    pub fn from_parts(item_factors: DMatrix<f64>, user_factors: DMatrix<f64>, seed: u64) -> Result<Self> {
        if item_factors.ncols() != user_factors.ncols() {
            return Err(Error::Dimension(format!(
                "item factors have rank {}, user factors {}",
                item_factors.ncols(),
                user_factors.ncols()
            )));
        }
        Ok(LfmModel {
            item_factors,
            user_factors,
            seed,
        })
    }

    pub fn rank(&self) -> usize {
        self.item_factors.ncols()
    }

    pub fn num_items(&self) -> usize {
        self.item_factors.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.user_factors.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn item_factors(&self) -> &DMatrix<f64> {
        &self.item_factors
    }

    pub fn user_factors(&self) -> &DMatrix<f64> {
        &self.user_factors
    }

    pub fn predict_rating(&self, user: usize, item: usize) -> f64 {
        (0..self.rank())
            .map(|k| self.user_factors[(user, k)] * self.item_factors[(item, k)])
            .sum()
    }

    /// `Q v` for a factor-space vector `v`: one score per item.
    pub fn item_scores(&self, v: &[f64]) -> Vec<f64> {
        (0..self.num_items())
            .map(|i| (0..self.rank()).map(|k| self.item_factors[(i, k)] * v[k]).sum())
            .collect()
    }

    pub fn user_factor(&self, user: usize) -> Vec<f64> {
        self.user_factors.row(user).iter().copied().collect()
    }

    /// `Q^T x` for a sparse rating row.
    pub fn fold_in(&self, row: SparseView<'_>) -> Vec<f64> {
        let mut p = vec![0.0; self.rank()];
        for (i, v) in row.iter() {
            for (k, pk) in p.iter_mut().enumerate() {
                *pk += v * self.item_factors[(i, k)];
            }
        }
        p
    }

    /// Largest absolute entry of `Q^T Q - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.item_factors.transpose() * &self.item_factors;
        let f = self.rank();
        (gram - DMatrix::<f64>::identity(f, f)).amax()
    }
}

/// Truncated SVD of the zero-filled ratings with fold-in user factors.
pub fn train_pure_svd(x: &InteractionMatrix, rank: usize, seed: u64, opts: SvdOptions) -> Result<LfmModel> {
    let (m, n) = (x.num_users(), x.num_items());
    if rank == 0 || rank > m.min(n) {
        return Err(Error::InvalidArgument(format!("rank {rank} must be in 1..={}", m.min(n))));
    }
    let dense = match opts.method {
        SvdMethod::Dense => true,
        SvdMethod::Randomized => false,
        SvdMethod::Auto => m * n <= opts.dense_limit || rank + opts.oversampling >= m.min(n),
    };
    let mut q = if dense {
        dense_right_vectors(x, rank)?
    } else {
        randomized_right_vectors(x, rank, seed, &opts)?
    };
    normalise_signs(&mut q);
    let p = mul_sparse_dense(x, &q, opts.execution);
    LfmModel::from_parts(q, p, seed)
}

fn to_dense(x: &InteractionMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(x.num_users(), x.num_items());
    for (u, i, r) in x.triplets() {
        d[(u, i)] = r;
    }
    d
}

/// Columns of `v`, ordered by descending singular value, first `rank` kept.
fn leading_columns(vectors: &DMatrix<f64>, singular: &[f64], rank: usize) -> DMatrix<f64> {
    let mut order: Vec<usize> = (0..singular.len()).collect();
    order.sort_by(|&a, &b| singular[b].total_cmp(&singular[a]).then(a.cmp(&b)));
    DMatrix::from_fn(vectors.nrows(), rank, |r, c| vectors[(r, order[c])])
}

fn dense_right_vectors(x: &InteractionMatrix, rank: usize) -> Result<DMatrix<f64>> {
    // SVD of X^T: its left singular vectors are X's right singular vectors
    let xt = to_dense(x).transpose();
    let svd = xt.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::InvalidArgument("SVD did not converge".into()))?;
    Ok(leading_columns(&u, svd.singular_values.as_slice(), rank))
}

fn randomized_right_vectors(x: &InteractionMatrix, rank: usize, seed: u64, opts: &SvdOptions) -> Result<DMatrix<f64>> {
    let (m, n) = (x.num_users(), x.num_items());
    let width = (rank + opts.oversampling).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(n, width, |_, _| StandardNormal.sample(&mut rng));

    let mut range = mul_sparse_dense(x, &omega, opts.execution).qr().q();
    for _ in 0..opts.power_iterations {
        let back = mul_sparse_t_dense(x, &range).qr().q();
        range = mul_sparse_dense(x, &back, opts.execution).qr().q();
    }
    // B^T = X^T range (n x width); left singular vectors of B^T span the row space
    let bt = mul_sparse_t_dense(x, &range);
    let svd = bt.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::InvalidArgument("SVD did not converge".into()))?;
    Ok(leading_columns(&u, svd.singular_values.as_slice(), rank))
}

/// Flips each column so its largest-magnitude entry is positive.
fn normalise_signs(q: &mut DMatrix<f64>) {
    for mut col in q.column_iter_mut() {
        let mut best = 0;
        for (r, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// `X d` for a dense `n x k` matrix.
fn mul_sparse_dense(x: &InteractionMatrix, d: &DMatrix<f64>, exec: Execution) -> DMatrix<f64> {
    let k = d.ncols();
    let rows = exec.map(x.num_users(), |u| {
        let mut out = vec![0.0; k];
        for (i, v) in x.row(u).iter() {
            for (c, o) in out.iter_mut().enumerate() {
                *o += v * d[(i, c)];
            }
        }
        out
    });
    DMatrix::from_fn(x.num_users(), k, |u, c| rows[u][c])
}

/// `X^T d` for a dense `m x k` matrix.
fn mul_sparse_t_dense(x: &InteractionMatrix, d: &DMatrix<f64>) -> DMatrix<f64> {
    let k = d.ncols();
    let mut out = DMatrix::zeros(x.num_items(), k);
    for i in 0..x.num_items() {
        for (u, v) in x.col(i).iter() {
            for c in 0..k {
                out[(i, c)] += v * d[(u, c)];
            }
        }
    }
    out
}

/// Text dump: header `LFM v1 <m> <n> <f> <seed>`, then `n` item-factor rows
/// and `m` user-factor rows of `f` reals each.
pub fn write_lfm<W: Write>(out: W, model: &LfmModel) -> Result<()> {
    write_lfm_with_meta(out, model, &[])
}

/// [`write_lfm`] with `# key=value` lines after the header, which
/// [`read_lfm`] skips.
pub fn write_lfm_with_meta<W: Write>(mut out: W, model: &LfmModel, meta: &[(&str, &str)]) -> Result<()> {
    writeln!(
        out,
        "LFM v1 {} {} {} {}",
        model.num_users(),
        model.num_items(),
        model.rank(),
        model.seed
    )?;
    for (k, v) in meta {
        writeln!(out, "# {k}={v}")?;
    }
    for mat in [&model.item_factors, &model.user_factors] {
        for r in 0..mat.nrows() {
            let line: Vec<String> = mat.row(r).iter().map(|&v| fmt_real(v)).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

pub fn read_lfm<R: BufRead>(source: R) -> Result<LfmModel> {
    let bad = |msg: String| Error::Format(format!("LFM file: {msg}"));
    let mut lines = source
        .lines()
        .filter(|l| !matches!(l, Ok(l) if l.starts_with('#') || l.trim().is_empty()));
    let header = lines.next().ok_or_else(|| bad("empty".into()))??;
    let t: Vec<&str> = header.split_whitespace().collect();
    if t.len() != 6 || t[0] != "LFM" || t[1] != "v1" {
        return Err(bad(format!("bad header {header:?}")));
    }
    let num = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad number {s:?}")));
    let (m, n, f, seed) = (num(t[2])? as usize, num(t[3])? as usize, num(t[4])? as usize, num(t[5])?);
    let mut read_matrix = |rows: usize| -> Result<DMatrix<f64>> {
        let mut mat = DMatrix::zeros(rows, f);
        for r in 0..rows {
            let line = lines.next().ok_or_else(|| bad("truncated".into()))??;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad real {s:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != f {
                return Err(bad(format!("row has {} values, expected {f}", vals.len())));
            }
            for (c, v) in vals.into_iter().enumerate() {
                mat[(r, c)] = v;
            }
        }
        Ok(mat)
    };
    let q = read_matrix(n)?;
    let p = read_matrix(m)?;
    LfmModel::from_parts(q, p, seed)
}
