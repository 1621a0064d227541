//! Sparse linear item-item model.
//!
//! A [`SlimModel`] stores the filled rows of a non-negative `n x n` weight
//! matrix `W` with zero diagonal. Scores for a user row `x_u` are `x_u W`.

mod cd;
pub(crate) mod io;

pub use cd::{train_coordinate_descent, CdLog, CdOptions};
pub use io::{read_model, write_model};

use serde::{Deserialize, Serialize};

use crate::par::pairwise_sum;
use crate::{Error, Execution, InteractionMatrix, ItemSet, Result, SparseVec, SparseView};

/// Regularisation weights of the SLIM objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda_1: f64,
    pub lambda_f: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda_1: 1.0,
            lambda_f: 1.0,
        }
    }
}

impl HyperParams {
    pub fn new(lambda_1: f64, lambda_f: f64) -> Result<Self> {
        let hp = HyperParams { lambda_1, lambda_f };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_1 >= 0.0 && self.lambda_f >= 0.0 && self.lambda_1.is_finite() && self.lambda_f.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "regularisation must be finite and >= 0, got lambda1={} lambdaF={}",
                self.lambda_1, self.lambda_f
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    #[serde(rename = "cd")]
    CoordinateDescent,
    Greedy,
}

impl Trainer {
    pub fn as_str(&self) -> &'static str {
        match self {
            Trainer::CoordinateDescent => "cd",
            Trainer::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for Trainer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cd" => Ok(Trainer::CoordinateDescent),
            "greedy" => Ok(Trainer::Greedy),
            other => Err(Error::Format(format!("unknown trainer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlimRow {
    pub item: usize,
    pub weights: SparseVec,
}

/// Filled rows of `W`, in the order they were added.
#[derive(Clone, Debug, PartialEq)]
pub struct SlimModel {
    num_items: usize,
    rows: Vec<SlimRow>,
    position: Vec<Option<usize>>,
    hyper: HyperParams,
    trainer: Trainer,
}

impl SlimModel {
    pub fn new(num_items: usize, hyper: HyperParams, trainer: Trainer) -> Self {
        SlimModel {
            num_items,
            rows: Vec::new(),
            position: vec![None; num_items],
            hyper,
            trainer,
        }
    }

    /// Appends row `item`. Weights must be finite, non-negative, off-diagonal
    /// and inside the item range; zero weights are dropped.
    pub fn push_row(&mut self, item: usize, weights: SparseVec) -> Result<()> {
        if item >= self.num_items {
            return Err(Error::Dimension(format!("row {item} outside {} items", self.num_items)));
        }
        if self.position[item].is_some() {
            return Err(Error::InvalidArgument(format!("row {item} already filled")));
        }
        for (j, w) in weights.iter() {
            if j >= self.num_items {
                return Err(Error::Dimension(format!("weight column {j} outside {} items", self.num_items)));
            }
            if j == item {
                return Err(Error::InvalidArgument(format!("diagonal weight in row {item}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("weight {w} at ({item}, {j}) must be finite and >= 0")));
            }
        }
        let weights = if weights.values().iter().any(|&w| w == 0.0) {
            weights.iter().filter(|&(_, w)| w > 0.0).collect()
        } else {
            weights
        };
        self.position[item] = Some(self.rows.len());
        self.rows.push(SlimRow { item, weights });
        Ok(())
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn hyper(&self) -> HyperParams {
        self.hyper
    }

    pub fn trainer(&self) -> Trainer {
        self.trainer
    }

    pub fn rows(&self) -> &[SlimRow] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Filled row items in insertion order.
    pub fn order(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.item).collect()
    }

    pub fn row(&self, item: usize) -> Option<&SparseVec> {
        self.position
            .get(item)
            .copied()
            .flatten()
            .map(|p| &self.rows[p].weights)
    }

    pub fn is_filled(&self, item: usize) -> bool {
        self.row(item).is_some()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.weights.nnz()).sum()
    }

    /// `lambda_1 * |W|_1 + lambda_F * |W|_F^2`.
    pub fn penalty(&self, hp: HyperParams) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.weights.values())
            .map(|&w| hp.lambda_1 * w + hp.lambda_f * w * w)
            .sum()
    }

    /// Re-checks the model invariants.
    pub fn validate(&self) -> Result<()> {
        let mut copy = SlimModel::new(self.num_items, self.hyper, self.trainer);
        for r in &self.rows {
            copy.push_row(r.item, r.weights.clone())?;
        }
        Ok(())
    }
}

/// Scratch for computing one residual row `x_u - x_u W`.
pub(crate) struct RowScratch {
    acc: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl RowScratch {
    pub(crate) fn new(num_items: usize) -> Self {
        RowScratch {
            acc: vec![0.0; num_items],
            seen: vec![false; num_items],
            touched: Vec::new(),
        }
    }

    fn touch(&mut self, j: usize) {
        if !self.seen[j] {
            self.seen[j] = true;
            self.touched.push(j);
        }
    }

    /// Calls `visit(j, x_uj - (x_u W)_j)` for every column where either term
    /// is non-zero, then resets.
    pub(crate) fn residual_row(&mut self, x_u: SparseView<'_>, model: &SlimModel, mut visit: impl FnMut(usize, f64)) {
        for (j, v) in x_u.iter() {
            self.touch(j);
            self.acc[j] += v;
        }
        for (k, x_uk) in x_u.iter() {
            if let Some(row) = model.row(k) {
                for (j, w) in row.iter() {
                    self.touch(j);
                    self.acc[j] -= x_uk * w;
                }
            }
        }
        for &j in &self.touched {
            visit(j, self.acc[j]);
            self.acc[j] = 0.0;
            self.seen[j] = false;
        }
        self.touched.clear();
    }
}

fn check_dims(x: &InteractionMatrix, model: &SlimModel) -> Result<()> {
    if x.num_items() != model.num_items() {
        return Err(Error::Dimension(format!(
            "matrix has {} items, model {}",
            x.num_items(),
            model.num_items()
        )));
    }
    Ok(())
}

/// `|X - XW|_F^2 + lambda_F |W|_F^2 + lambda_1 |W|_1`, without materialising `XW`.
pub fn slim_loss(x: &InteractionMatrix, model: &SlimModel, hp: HyperParams) -> Result<f64> {
    slim_loss_with(x, model, hp, Execution::default())
}

pub fn slim_loss_with(x: &InteractionMatrix, model: &SlimModel, hp: HyperParams, exec: Execution) -> Result<f64> {
    check_dims(x, model)?;
    let n = x.num_items();
    let per_user = exec.map_init(
        x.num_users(),
        || RowScratch::new(n),
        |scratch, u| {
            let mut sq = 0.0;
            scratch.residual_row(x.row(u), model, |_, r| sq += r * r);
            sq
        },
    );
    Ok(pairwise_sum(&per_user) + model.penalty(hp))
}

/// Dense relevance scores `x_u W`; only filled rows contribute.
pub fn predict_scores(x_u: SparseView<'_>, model: &SlimModel) -> Vec<f64> {
    let mut scores = vec![0.0; model.num_items()];
    for (k, x_uk) in x_u.iter() {
        if let Some(row) = model.row(k) {
            for (j, w) in row.iter() {
                scores[j] += x_uk * w;
            }
        }
    }
    scores
}

/// The `n` best `candidates` by descending score, ties by ascending index.
pub fn rank_top_n(scores: &[f64], n: usize, candidates: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut pool: Vec<usize> = candidates.collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if pool.len() > n && n > 0 {
        pool.select_nth_unstable_by(n - 1, cmp);
        pool.truncate(n);
    }
    pool.sort_unstable_by(cmp);
    pool.truncate(n);
    pool
}

/// Top-`n` unrated items from `allowed` for the user row `x_u`.
pub fn top_n(x_u: SparseView<'_>, model: &SlimModel, n: usize, allowed: &ItemSet) -> Vec<usize> {
    let scores = predict_scores(x_u, model);
    rank_top_n(&scores, n, allowed.iter().filter(|&i| x_u.get(i) == 0.0))
}
