//! Greedy row-by-row SLIM training.
//!
//! Starting from `W = 0`, every round fills the empty row whose closed-form
//! optimal weights decrease the SLIM loss the most. Filling row `i` with
//! weights `w` changes the loss by
//!
//! ```text
//! sum_{j != i} l_ij(w_ij) - l_ij(0),
//! l_ij(w) = lambda_1 w + lambda_F w^2 + sum_u (xhat_uj - x_ui w)^2
//! ```
//!
//! where `Xhat = X - XW` is the current residual. Each `l_ij` is a 1-D
//! quadratic, so the best non-negative weight is
//! `max(0, (a_ij - lambda_1 / 2) / (lambda_F + s_i))` with `a_ij = x_i . xhat_j`
//! and `s_i = |x_i|^2`, and the optimal row decreases the loss by
//! `sum_j (a_ij - lambda_1 / 2)^+^2 / (lambda_F + s_i)`.
//!
//! The residual is never materialised. It is kept as `X` minus one rank-one
//! term per filled row, together with the Gram vectors `x_k . x_t` of every
//! filled item `k`. That gives
//!
//! ```text
//! a_ij = x_i . x_j - sum_k (x_k . x_i) w_kj
//! ```
//!
//! so scoring a candidate costs one co-occurrence pass over its raters plus
//! the support of the filled rows.

use std::time::Instant;

use serde::Serialize;

use crate::slim::{HyperParams, RowScratch, SlimModel, Trainer};
use crate::{Error, Execution, InteractionMatrix, ItemSet, Result, SparseVec};

/// Relative gap in the resulting loss under which two candidates count as tied.
pub const TIE_RTOL: f64 = 1e-12;

/// Users per partial sum when recomputing residual column norms.
const RECOMPUTE_CHUNK: usize = 256;

/// Dense accumulator over items with a touched list for cheap resets.
pub(crate) struct Scratch {
    acc: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl Scratch {
    pub(crate) fn new(num_items: usize) -> Self {
        Scratch {
            acc: vec![0.0; num_items],
            seen: vec![false; num_items],
            touched: Vec::new(),
        }
    }

    #[inline]
    fn add(&mut self, j: usize, v: f64) {
        if !self.seen[j] {
            self.seen[j] = true;
            self.touched.push(j);
        }
        self.acc[j] += v;
    }

    fn get(&self, j: usize) -> f64 {
        self.acc[j]
    }

    fn sorted_touched(&mut self) -> &[usize] {
        self.touched.sort_unstable();
        &self.touched
    }

    fn reset(&mut self) {
        for &j in &self.touched {
            self.acc[j] = 0.0;
            self.seen[j] = false;
        }
        self.touched.clear();
    }
}

/// Index of the smallest loss change; candidates whose resulting losses
/// `loss + delta` lie within [`TIE_RTOL`] of the best one tie, and the first
/// one wins.
pub(crate) fn argmin_first(deltas: &[f64], loss: f64) -> Option<usize> {
    let min = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let bound = min + TIE_RTOL * (loss + min).abs().max(min.abs());
    deltas.iter().position(|&v| v <= bound)
}

/// Residual bookkeeping for a partially filled `W`.
#[derive(Clone, Debug)]
pub struct GreedyState<'a> {
    x: &'a InteractionMatrix,
    hyper: HyperParams,
    col_sq_norms: Vec<f64>,
    residual_col_sq: Vec<f64>,
    model: SlimModel,
    /// `grams[k][t] = x_k . x_t` for the k-th filled row.
    grams: Vec<Vec<f64>>,
    empty: ItemSet,
    penalty: f64,
    loss: f64,
}

impl<'a> GreedyState<'a> {
    /// State for `W = 0`.
    pub fn new(x: &'a InteractionMatrix, hyper: HyperParams) -> Self {
        let n = x.num_items();
        let col_sq_norms = x.col_sq_norms();
        GreedyState {
            x,
            hyper,
            residual_col_sq: col_sq_norms.clone(),
            col_sq_norms,
            model: SlimModel::new(n, hyper, Trainer::Greedy),
            grams: Vec::new(),
            empty: ItemSet::full(n),
            penalty: 0.0,
            loss: x.frobenius_sq(),
        }
    }

    /// State for an arbitrary partially filled model.
    pub fn from_model(x: &'a InteractionMatrix, model: &SlimModel, hyper: HyperParams) -> Result<Self> {
        if model.num_items() != x.num_items() {
            return Err(Error::Dimension(format!(
                "matrix has {} items, model {}",
                x.num_items(),
                model.num_items()
            )));
        }
        let mut state = GreedyState::new(x, hyper);
        let mut scratch = Scratch::new(x.num_items());
        for row in model.rows() {
            state.push_filled(row.item, row.weights.clone(), &mut scratch)?;
        }
        state.recompute();
        Ok(state)
    }

    pub fn matrix(&self) -> &InteractionMatrix {
        self.x
    }

    pub fn hyper(&self) -> HyperParams {
        self.hyper
    }

    pub fn model(&self) -> &SlimModel {
        &self.model
    }

    pub fn into_model(self) -> SlimModel {
        self.model
    }

    pub fn filled(&self) -> Vec<usize> {
        self.model.order()
    }

    pub fn empty_rows(&self) -> &ItemSet {
        &self.empty
    }

    /// Current `l_SLIM(W)`, maintained incrementally.
    pub fn loss(&self) -> f64 {
        self.loss
    }

    /// Cached `|xhat_j|^2`.
    pub fn residual_col_sq(&self, j: usize) -> f64 {
        self.residual_col_sq[j]
    }

    /// `x_i . xhat_j`, computed directly for one pair.
    pub fn cross(&self, i: usize, j: usize) -> f64 {
        let mut a = self.x.col(i).dot(&self.x.col(j));
        for (row, gram) in self.model.rows().iter().zip(&self.grams) {
            let g = gram[i];
            if g != 0.0 {
                a -= g * row.weights.get(j);
            }
        }
        a
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        let n = self.x.num_items();
        if i >= n || j >= n {
            return Err(Error::Dimension(format!("item pair ({i}, {j}) outside {n} items")));
        }
        if i == j {
            return Err(Error::InvalidArgument(format!("l_ij needs i != j, got i = j = {i}")));
        }
        Ok(())
    }

    /// `l_ij(w) = lambda_1 w + lambda_F w^2 + sum_u (xhat_uj - x_ui w)^2`.
    pub fn elementwise_loss(&self, i: usize, j: usize, w: f64) -> Result<f64> {
        self.check_pair(i, j)?;
        let hp = self.hyper;
        let a = self.cross(i, j);
        Ok(hp.lambda_1 * w + hp.lambda_f * w * w + self.residual_col_sq[j] - 2.0 * w * a
            + w * w * self.col_sq_norms[i])
    }

    /// Non-negative minimiser of `l_ij`; 0 when the quadratic is degenerate.
    pub fn optimal_weight(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(self.closed_form(i, self.cross(i, j)))
    }

    fn closed_form(&self, i: usize, a: f64) -> f64 {
        let denom = self.hyper.lambda_f + self.col_sq_norms[i];
        if denom > 0.0 {
            ((a - self.hyper.lambda_1 / 2.0) / denom).max(0.0)
        } else {
            0.0
        }
    }

    fn accumulate_cooccurrence(&self, i: usize, s: &mut Scratch) {
        for (u, x_ui) in self.x.col(i).iter() {
            for (j, x_uj) in self.x.row(u).iter() {
                s.add(j, x_ui * x_uj);
            }
        }
    }

    fn apply_corrections(&self, i: usize, s: &mut Scratch) {
        for (row, gram) in self.model.rows().iter().zip(&self.grams) {
            let g = gram[i];
            if g != 0.0 {
                for (j, w) in row.weights.iter() {
                    s.add(j, -g * w);
                }
            }
        }
    }

    /// Leaves `a_ij` in the scratch for every `j` that can be non-zero.
    fn accumulate_cross(&self, i: usize, s: &mut Scratch) {
        self.accumulate_cooccurrence(i, s);
        self.apply_corrections(i, s);
    }

    fn check_empty(&self, i: usize) -> Result<()> {
        if i >= self.x.num_items() {
            return Err(Error::Dimension(format!("item {i} outside {} items", self.x.num_items())));
        }
        if !self.empty.contains(i) {
            return Err(Error::InvalidArgument(format!("row {i} is already filled")));
        }
        Ok(())
    }

    fn optimal_row_in(&self, i: usize, s: &mut Scratch, keep_row: bool) -> (f64, SparseVec) {
        self.accumulate_cross(i, s);
        let half_l1 = self.hyper.lambda_1 / 2.0;
        let mut delta = 0.0;
        let mut pairs = Vec::new();
        let touched: Vec<usize> = s.sorted_touched().to_vec();
        for j in touched {
            if j == i {
                continue;
            }
            let a = s.get(j);
            let w = self.closed_form(i, a);
            if w > 0.0 {
                delta -= (a - half_l1) * w;
                if keep_row {
                    pairs.push((j, w));
                }
            }
        }
        s.reset();
        (delta, SparseVec::from_pairs(pairs))
    }

    /// Loss change of filling empty row `i` optimally, and that row.
    pub fn row_delta(&self, i: usize) -> Result<(f64, SparseVec)> {
        self.check_empty(i)?;
        Ok(self.optimal_row_in(i, &mut Scratch::new(self.x.num_items()), true))
    }

    pub(crate) fn given_row_delta_in(&self, i: usize, row: &SparseVec, s: &mut Scratch) -> f64 {
        if row.is_empty() {
            return 0.0;
        }
        self.accumulate_cross(i, s);
        let hp = self.hyper;
        let s_i = self.col_sq_norms[i];
        let delta = row
            .iter()
            .map(|(j, w)| {
                let a = if s.seen[j] { s.get(j) } else { 0.0 };
                hp.lambda_1 * w + hp.lambda_f * w * w - 2.0 * w * a + w * w * s_i
            })
            .sum();
        s.reset();
        delta
    }

    /// Loss change of filling empty row `i` with the given weights.
    pub fn given_row_delta(&self, i: usize, row: &SparseVec) -> Result<f64> {
        self.check_empty(i)?;
        Ok(self.given_row_delta_in(i, row, &mut Scratch::new(self.x.num_items())))
    }

    /// Fills row `i` and updates residual norms, penalty and loss.
    /// Returns the loss change.
    pub fn fill(&mut self, i: usize, row: SparseVec) -> Result<f64> {
        self.check_empty(i)?;
        let mut s = Scratch::new(self.x.num_items());
        let delta = self.given_row_delta_in(i, &row, &mut s);
        self.push_filled(i, row, &mut s)?;
        self.loss += delta;
        Ok(delta)
    }

    /// Fills row `i` with its closed-form optimum; returns `(delta, row)`.
    pub fn fill_optimal(&mut self, i: usize) -> Result<(f64, SparseVec)> {
        self.check_empty(i)?;
        let mut s = Scratch::new(self.x.num_items());
        let (delta, row) = self.optimal_row_in(i, &mut s, true);
        self.push_filled(i, row.clone(), &mut s)?;
        self.loss += delta;
        Ok((delta, row))
    }

    /// Adds row `i`, updating everything except `loss`.
    fn push_filled(&mut self, i: usize, row: SparseVec, s: &mut Scratch) -> Result<()> {
        let n = self.x.num_items();
        self.accumulate_cooccurrence(i, s);
        let mut gram = vec![0.0; n];
        for &t in &s.touched {
            gram[t] = s.acc[t];
        }
        self.apply_corrections(i, s);
        let updates: Vec<(usize, f64, f64)> = row
            .iter()
            .map(|(j, w)| (j, w, if s.seen[j] { s.get(j) } else { 0.0 }))
            .collect();
        s.reset();
        self.model.push_row(i, row)?;

        let hp = self.hyper;
        let s_i = self.col_sq_norms[i];
        for (j, w, a) in updates {
            self.residual_col_sq[j] += w * w * s_i - 2.0 * w * a;
            self.penalty += hp.lambda_1 * w + hp.lambda_f * w * w;
        }
        self.grams.push(gram);
        self.empty.remove(i);
        Ok(())
    }

    /// Recomputes residual column norms and the loss from `X - XW`.
    pub fn recompute(&mut self) {
        self.recompute_with(Execution::default());
    }

    pub fn recompute_with(&mut self, exec: Execution) {
        let n = self.x.num_items();
        let m = self.x.num_users();
        let chunks = m.div_ceil(RECOMPUTE_CHUNK);
        let partials = exec.map_init(
            chunks,
            || RowScratch::new(n),
            |scratch, c| {
                let mut sums = vec![0.0; n];
                for u in c * RECOMPUTE_CHUNK..((c + 1) * RECOMPUTE_CHUNK).min(m) {
                    scratch.residual_row(self.x.row(u), &self.model, |j, r| sums[j] += r * r);
                }
                sums
            },
        );
        let mut col = vec![0.0; n];
        for p in partials {
            for (c, v) in col.iter_mut().zip(p) {
                *c += v;
            }
        }
        self.residual_col_sq = col;
        self.penalty = self.model.penalty(self.hyper);
        self.loss = self.residual_col_sq.iter().sum::<f64>() + self.penalty;
    }

    /// Dense residual built as `X - sum_k x_k w_k^T` over the filled rows.
    pub fn residual_dense(&self) -> Vec<Vec<f64>> {
        let (m, n) = (self.x.num_users(), self.x.num_items());
        let mut r = vec![vec![0.0; n]; m];
        for (u, i, v) in self.x.triplets() {
            r[u][i] = v;
        }
        for row in self.model.rows() {
            for (u, x_uk) in self.x.col(row.item).iter() {
                for (j, w) in row.weights.iter() {
                    r[u][j] -= x_uk * w;
                }
            }
        }
        r
    }

    /// Dense residual built row by row as `x_u - x_u W`.
    pub fn residual_dense_from_scratch(&self) -> Vec<Vec<f64>> {
        let n = self.x.num_items();
        let mut scratch = RowScratch::new(n);
        (0..self.x.num_users())
            .map(|u| {
                let mut dense = vec![0.0; n];
                scratch.residual_row(self.x.row(u), &self.model, |j, v| dense[j] = v);
                dense
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GreedyOptions {
    /// Only items with at least this many ratings are candidates.
    pub min_item_ratings: usize,
    /// Full residual recompute every this many rounds; 0 disables it.
    pub recompute_every: usize,
    pub execution: Execution,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions {
            min_item_ratings: 0,
            recompute_every: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundLog {
    pub round: usize,
    pub item: usize,
    pub delta: f64,
    pub loss: f64,
    pub seconds: f64,
}

/// Fills `num_rows` rows greedily; model rows come out in selection order.
pub fn train_greedy(
    x: &InteractionMatrix,
    hp: HyperParams,
    num_rows: usize,
    opts: GreedyOptions,
) -> Result<(SlimModel, Vec<RoundLog>)> {
    hp.validate()?;
    let n = x.num_items();
    if num_rows == 0 || num_rows > n {
        return Err(Error::InvalidArgument(format!("num_rows {num_rows} must be in 1..={n}")));
    }
    let eligible = (0..n).filter(|&i| x.item_count(i) >= opts.min_item_ratings).count();
    if num_rows > eligible {
        return Err(Error::InvalidArgument(format!(
            "num_rows {num_rows} exceeds the {eligible} items with >= {} ratings",
            opts.min_item_ratings
        )));
    }

    let mut state = GreedyState::new(x, hp);
    let mut log = Vec::with_capacity(num_rows);
    let started = Instant::now();
    for round in 1..=num_rows {
        let candidates: Vec<usize> = state
            .empty
            .iter()
            .filter(|&i| x.item_count(i) >= opts.min_item_ratings)
            .collect();
        let deltas = opts.execution.map_init(
            candidates.len(),
            || Scratch::new(n),
            |s, k| state.optimal_row_in(candidates[k], s, false).0,
        );
        let pick = candidates[argmin_first(&deltas, state.loss).expect("candidates are non-empty")];
        let (delta, _) = state.fill_optimal(pick)?;
        if opts.recompute_every > 0 && round % opts.recompute_every == 0 {
            state.recompute_with(opts.execution);
        }
        log::debug!("round {round}: item {pick} delta {delta:.6e}");
        log.push(RoundLog {
            round,
            item: pick,
            delta,
            loss: state.loss,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((state.into_model(), log))
}

/// Writes the training log as `round,item,delta,loss,seconds`.
pub fn write_round_log<W: std::io::Write>(mut out: W, log: &[RoundLog]) -> Result<()> {
    writeln!(out, "round,item,delta,loss,seconds")?;
    for r in log {
        writeln!(out, "{},{},{:e},{:e},{:.3}", r.round, r.item, r.delta, r.loss, r.seconds)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slim::slim_loss;

    fn two_by_two() -> InteractionMatrix {
        InteractionMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]).unwrap()
    }

    #[test]
    fn elementwise_loss_by_hand() {
        let x = InteractionMatrix::from_triplets(1, 2, [(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let st = GreedyState::new(&x, HyperParams::default());
        assert_eq!(st.elementwise_loss(0, 1, 0.25).unwrap(), 0.875);
        assert_eq!(st.elementwise_loss(0, 1, 0.0).unwrap(), 1.0);
        assert!(st.elementwise_loss(1, 1, 0.0).is_err());
    }

    #[test]
    fn optimal_weight_by_hand() {
        let x = InteractionMatrix::from_triplets(1, 2, [(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let plain = GreedyState::new(&x, HyperParams::new(0.0, 0.0).unwrap());
        assert_eq!(plain.optimal_weight(0, 1).unwrap(), 1.0);
        let reg = GreedyState::new(&x, HyperParams::default());
        assert_eq!(reg.optimal_weight(0, 1).unwrap(), 0.25);
        let clamp = GreedyState::new(&x, HyperParams::new(2.0, 0.0).unwrap());
        assert_eq!(clamp.optimal_weight(0, 1).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_denominator_is_zero() {
        let x = InteractionMatrix::from_triplets(1, 2, [(0, 1, 3.0)]).unwrap();
        let st = GreedyState::new(&x, HyperParams::new(0.0, 0.0).unwrap());
        assert_eq!(st.optimal_weight(0, 1).unwrap(), 0.0);
        let (delta, row) = st.row_delta(0).unwrap();
        assert_eq!(delta, 0.0);
        assert!(row.is_empty());
    }

    #[test]
    fn row_delta_by_hand() {
        let x = two_by_two();
        let st = GreedyState::new(&x, HyperParams::new(0.0, 0.0).unwrap());
        let (d0, r0) = st.row_delta(0).unwrap();
        assert_eq!(d0, -1.0);
        assert_eq!(r0, SparseVec::from_pairs([(1, 1.0)]));
        let (d1, r1) = st.row_delta(1).unwrap();
        assert_eq!(d1, -0.5);
        assert_eq!(r1, SparseVec::from_pairs([(0, 0.5)]));
    }

    #[test]
    fn train_one_row_by_hand() {
        let x = two_by_two();
        let hp = HyperParams::new(0.0, 0.0).unwrap();
        let (w, log) = train_greedy(&x, hp, 1, GreedyOptions::default()).unwrap();
        assert_eq!(w.order(), vec![0]);
        assert_eq!(log[0].loss, 2.0);
        assert_eq!(slim_loss(&x, &w, hp).unwrap(), 2.0);
    }

    #[test]
    fn filled_row_is_rejected() {
        let x = two_by_two();
        let mut st = GreedyState::new(&x, HyperParams::default());
        st.fill_optimal(0).unwrap();
        assert!(st.row_delta(0).is_err());
        assert!(st.fill(0, SparseVec::new()).is_err());
    }

    #[test]
    fn num_rows_bounds() {
        let x = two_by_two();
        let hp = HyperParams::default();
        assert!(train_greedy(&x, hp, 3, GreedyOptions::default()).is_err());
        assert!(train_greedy(&x, hp, 0, GreedyOptions::default()).is_err());
        let opts = GreedyOptions { min_item_ratings: 2, ..GreedyOptions::default() };
        assert!(train_greedy(&x, hp, 2, opts).is_err());
        let (w, _) = train_greedy(&x, hp, 1, opts).unwrap();
        assert_eq!(w.order(), vec![1]);
    }

    #[test]
    fn full_training_is_a_permutation() {
        let x = crate::synthetic::ratings(25, 9, 0.4, 3);
        let (w, log) = train_greedy(&x, HyperParams::default(), 9, GreedyOptions::default()).unwrap();
        let mut order = w.order();
        order.sort_unstable();
        assert_eq!(order, (0..9).collect::<Vec<_>>());
        assert_eq!(log.len(), 9);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let x = crate::synthetic::ratings(60, 20, 0.3, 5);
        let hp = HyperParams::new(2.0, 4.0).unwrap();
        let seq = GreedyOptions { execution: Execution::Sequential, ..GreedyOptions::default() };
        let par = GreedyOptions { execution: Execution::Parallel, ..GreedyOptions::default() };
        let (a, la) = train_greedy(&x, hp, 8, seq).unwrap();
        let (b, lb) = train_greedy(&x, hp, 8, par).unwrap();
        assert_eq!(a, b);
        let strip = |l: &[RoundLog]| l.iter().map(|r| (r.item, r.delta, r.loss)).collect::<Vec<_>>();
        assert_eq!(strip(&la), strip(&lb));
    }

    #[test]
    fn argmin_prefers_first_of_ties() {
        assert_eq!(argmin_first(&[0.0, -1.0, -1.0], 2.0), Some(1));
        assert_eq!(argmin_first(&[-1.0, -1.0 - 1e-14, -0.5], 2.0), Some(0));
        assert_eq!(argmin_first(&[-1.0, -1.0 - 1e-9, -0.5], 2.0), Some(1));
        assert_eq!(argmin_first(&[0.0, 0.0], 0.0), Some(0));
        // gaps far below the resolution of the loss are ties
        assert_eq!(argmin_first(&[1e-30, 0.0], 1.5), Some(0));
        assert_eq!(argmin_first(&[], 1.0), None);
    }
}
