//! Thompson-sampling style questionnaire over PureSVD users.
//!
//! The session keeps a probability weight per training user. A question draws
//! one user from those weights and asks the item that user is predicted to
//! like most; an answer reweights every user by a Gaussian likelihood of the
//! answer given that user's prediction.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::lfm::LfmModel;
use crate::par::pairwise_sum;
use crate::slim::rank_top_n;
use crate::{ItemSet, Result};

use super::{Questionnaire, Recommender, SessionEvent, SessionState};

fn uniform(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

fn weights_or_uniform<'s>(state: &'s mut SessionState, lfm: &LfmModel) -> &'s mut Vec<f64> {
    let m = lfm.num_users();
    if state.bandit_weights.as_ref().map(Vec::len) != Some(m) {
        state.bandit_weights = Some(uniform(m));
    }
    state.bandit_weights.as_mut().unwrap()
}

/// Inverse-CDF draw; only users with positive weight can be drawn.
fn draw_user(weights: &[f64], r: f64) -> usize {
    let target = r * pairwise_sum(weights);
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (u, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            cumulative += w;
            last_positive = u;
            if cumulative > target {
                return u;
            }
        }
    }
    last_positive
}

/// Draws a training user from the session weights and returns that user's
/// best-predicted item among those not yet asked.
pub fn bandit_next_question(state: &mut SessionState, lfm: &LfmModel) -> Option<usize> {
    next_question_where(state, lfm, |_| true)
}

/// Like [`bandit_next_question`], asking only items in `pool`.
pub fn bandit_next_question_in(state: &mut SessionState, lfm: &LfmModel, pool: &ItemSet) -> Option<usize> {
    next_question_where(state, lfm, |i| pool.contains(i))
}

fn next_question_where(state: &mut SessionState, lfm: &LfmModel, eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let open = |s: &SessionState, i: usize| !s.is_asked(i) && eligible(i);
    if lfm.num_users() == 0 || !(0..lfm.num_items()).any(|i| open(state, i)) {
        return None;
    }
    let r: f64 = state.rng.random();
    let user = draw_user(weights_or_uniform(state, lfm), r);
    let predicted = lfm.item_scores(&lfm.user_factor(user));
    rank_top_n(&predicted, 1, (0..lfm.num_items()).filter(|&i| open(state, i)))
        .first()
        .copied()
}

/// Records the answer and, for a real rating, multiplies each user's weight
/// by `exp(-(rating - prediction)^2 / (2 sigma^2))` before renormalising.
/// A "don't know" (0) leaves the weights alone.
pub fn bandit_observe(state: &mut SessionState, item: usize, rating: f64, lfm: &LfmModel, sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(crate::Error::InvalidArgument(format!("sigma {sigma} must be positive")));
    }
    if item >= lfm.num_items() {
        return Err(crate::Error::Dimension(format!("item {item} outside {} items", lfm.num_items())));
    }
    state.record_answer(item, rating)?;
    let weights = weights_or_uniform(state, lfm);
    if rating == 0.0 {
        return Ok(());
    }
    let q_i = DVector::from_iterator(lfm.rank(), lfm.item_factors().row(item).iter().copied());
    let predictions = lfm.user_factors() * q_i;
    let scale = 2.0 * sigma * sigma;
    for (w, p) in weights.iter_mut().zip(predictions.iter()) {
        let d = rating - p;
        *w *= (-d * d / scale).exp();
    }
    let total = pairwise_sum(weights);
    if total > 0.0 && total.is_finite() {
        for w in weights.iter_mut() {
            *w /= total;
        }
    } else {
        log::warn!("bandit weights underflowed after item {item}; resetting to uniform");
        *weights = uniform(weights.len());
        state.push_event(SessionEvent::WeightsReset { after_item: item });
    }
    Ok(())
}

/// Scores items with the weight-averaged user factor and returns the top `n`
/// of `allowed` that were neither asked nor rated.
pub fn bandit_recommend(state: &SessionState, lfm: &LfmModel, n: usize, allowed: &ItemSet) -> Vec<usize> {
    let m = lfm.num_users();
    let w = match state.bandit_weights() {
        Some(w) if w.len() == m => DVector::from_column_slice(w),
        _ => DVector::from_element(m, 1.0 / m as f64),
    };
    let p = lfm.user_factors().tr_mul(&w);
    let scores = lfm.item_scores(p.as_slice());
    rank_top_n(&scores, n, state.candidates(allowed).iter())
}

#[derive(Clone, Debug)]
pub struct BanditQuestionnaire {
    lfm: Arc<LfmModel>,
    sigma: f64,
    pool: Option<ItemSet>,
}

impl BanditQuestionnaire {
    pub fn new(lfm: Arc<LfmModel>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(crate::Error::InvalidArgument(format!("sigma {sigma} must be positive")));
        }
        Ok(BanditQuestionnaire { lfm, sigma, pool: None })
    }

    /// Restricts questions to `pool`.
    pub fn with_pool(mut self, pool: ItemSet) -> Self {
        self.pool = Some(pool);
        self
    }

    pub fn lfm(&self) -> &Arc<LfmModel> {
        &self.lfm
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Questionnaire for BanditQuestionnaire {
    fn name(&self) -> &str {
        "q_bandit"
    }

    fn start(&self, state: &mut SessionState) {
        state.bandit_weights = Some(uniform(self.lfm.num_users()));
    }

    fn next_question(&self, state: &mut SessionState) -> Option<usize> {
        match &self.pool {
            Some(pool) => bandit_next_question_in(state, &self.lfm, pool),
            None => bandit_next_question(state, &self.lfm),
        }
    }

    fn observe(&self, state: &mut SessionState, item: usize, rating: f64) -> Result<()> {
        bandit_observe(state, item, rating, &self.lfm, self.sigma)
    }
}

#[derive(Clone, Debug)]
pub struct BanditRecommender {
    lfm: Arc<LfmModel>,
}

impl BanditRecommender {
    pub fn new(lfm: Arc<LfmModel>) -> Self {
        BanditRecommender { lfm }
    }
}

impl Recommender for BanditRecommender {
    fn name(&self) -> &str {
        "r_bandit"
    }

    fn recommend(&self, state: &SessionState, n: usize, allowed: &ItemSet) -> Vec<usize> {
        bandit_recommend(state, &self.lfm, n, allowed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    /// Rank-2 model whose predictions equal `ratings` (users x items) when
    /// there are two items: Q = I, P = ratings.
    fn two_item_model(ratings: &[[f64; 2]]) -> LfmModel {
        let q = DMatrix::identity(2, 2);
        let p = DMatrix::from_fn(ratings.len(), 2, |u, k| ratings[u][k]);
        LfmModel::from_parts(q, p, 0).unwrap()
    }

    #[test]
    fn degenerate_weights_pick_best_item() {
        let lfm = two_item_model(&[[5.0, 3.0], [1.0, 4.0]]);
        let mut s = SessionState::new(2, 3);
        s.bandit_weights = Some(vec![1.0, 0.0]);
        for _ in 0..5 {
            let mut t = s.clone();
            assert_eq!(bandit_next_question(&mut t, &lfm), Some(0));
        }
        s.bandit_weights = Some(vec![0.0, 1.0]);
        assert_eq!(bandit_next_question(&mut s, &lfm), Some(1));
        s.record_answer(1, 4.0).unwrap();
        assert_eq!(bandit_next_question(&mut s, &lfm), Some(0));
        s.record_answer(0, 4.0).unwrap();
        assert_eq!(bandit_next_question(&mut s, &lfm), None);
    }

    #[test]
    fn seeded_questions_reproduce() {
        let lfm = two_item_model(&[[5.0, 3.0], [1.0, 4.0]]);
        let run = || {
            let q = BanditQuestionnaire::new(Arc::new(lfm.clone()), 1.0).unwrap();
            let mut s = SessionState::new(2, 42);
            q.start(&mut s);
            q.next_question(&mut s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gaussian_update() {
        let lfm = two_item_model(&[[5.0, 0.0], [3.0, 0.0]]);
        let mut s = SessionState::new(2, 0);
        s.bandit_weights = Some(vec![0.5, 0.5]);
        bandit_observe(&mut s, 0, 5.0, &lfm, 1.0).unwrap();
        let w = s.bandit_weights().unwrap();
        let e = (-2.0f64).exp();
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((w[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((w[0] - 0.8808).abs() < 1e-4 && (w[1] - 0.1192).abs() < 1e-4);

        let before = w.to_vec();
        bandit_observe(&mut s, 1, 0.0, &lfm, 1.0).unwrap();
        assert_eq!(s.bandit_weights().unwrap(), before.as_slice());
        assert_eq!(s.answers(), &[5.0, 0.0]);
    }

    #[test]
    fn equal_likelihood_keeps_weights() {
        let lfm = two_item_model(&[[4.0, 0.0], [4.0, 0.0]]);
        let mut s = SessionState::new(2, 0);
        s.bandit_weights = Some(vec![0.25, 0.75]);
        bandit_observe(&mut s, 0, 2.0, &lfm, 1.0).unwrap();
        let w = s.bandit_weights().unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn underflow_resets() {
        let lfm = two_item_model(&[[100.0, 0.0], [-100.0, 0.0]]);
        let mut s = SessionState::new(2, 0);
        bandit_observe(&mut s, 0, 5.0, &lfm, 0.01).unwrap();
        assert_eq!(s.bandit_weights().unwrap(), &[0.5, 0.5]);
        assert_eq!(s.events(), &[SessionEvent::WeightsReset { after_item: 0 }]);
    }

    #[test]
    fn weighted_recommendation() {
        // three users, two factors, three items with Q rows e1, e2, (e1+e2)/sqrt2
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let q = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, r, r]);
        let p = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let lfm = LfmModel::from_parts(q, p, 0).unwrap();
        let mut s = SessionState::new(3, 0);
        s.bandit_weights = Some(vec![0.5, 0.25, 0.25]);
        // p~ = (1.25, 0.5): scores 1.25, 0.5, 1.75 r = 1.237
        assert_eq!(bandit_recommend(&s, &lfm, 3, &ItemSet::full(3)), vec![0, 2, 1]);
        s.bandit_weights = Some(vec![0.0, 1.0, 0.0]);
        assert_eq!(bandit_recommend(&s, &lfm, 2, &ItemSet::full(3)), vec![1, 2]);
        s.record_answer(1, 0.0).unwrap();
        assert_eq!(bandit_recommend(&s, &lfm, 3, &ItemSet::full(3)), vec![2, 0]);
        // no weights: uniform, p~ = (1, 2/3)
        let fresh = SessionState::new(3, 0);
        assert_eq!(bandit_recommend(&fresh, &lfm, 3, &ItemSet::full(3)), vec![2, 0, 1]);
    }

    #[test]
    fn pool_limits_questions() {
        let lfm = Arc::new(two_item_model(&[[5.0, 3.0], [4.0, 1.0]]));
        let q = BanditQuestionnaire::new(lfm, 1.0).unwrap().with_pool(ItemSet::from_items(2, [1]));
        let mut s = SessionState::new(2, 9);
        q.start(&mut s);
        assert_eq!(q.next_question(&mut s), Some(1));
        q.observe(&mut s, 1, 3.0).unwrap();
        assert_eq!(q.next_question(&mut s), None);
    }
}
