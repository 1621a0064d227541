//! Questionnaires and recommenders for new users.
//!
//! A [`SessionState`] holds what is known about one new user: the ratings
//! revealed so far, the order in which items were asked, bandit weights when
//! a bandit questionnaire drives the session, and a seeded RNG. A
//! [`Questionnaire`] picks the next item to ask; a [`Recommender`] turns the
//! state into a ranked list.

mod bandit;
mod questionnaires;

pub use bandit::{
    bandit_next_question, bandit_next_question_in, bandit_observe, bandit_recommend, BanditQuestionnaire,
    BanditRecommender,
};
pub use questionnaires::{q_greedy, q_gslim, q_pop, q_var, write_questionnaire_csv, StaticQuestionnaire};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::interactions::item_stats;
use crate::slim::{rank_top_n, top_n};
use crate::{Error, InteractionMatrix, ItemSet, Result, SlimModel, SparseVec};

#[derive(Clone, Debug, PartialEq)]
pub enum SessionEvent {
    /// Every bandit weight underflowed and the weights were reset to uniform.
    WeightsReset { after_item: usize },
}

#[derive(Clone, Debug)]
pub struct SessionState {
    num_items: usize,
    row: SparseVec,
    asked: Vec<usize>,
    answers: Vec<f64>,
    pub(crate) bandit_weights: Option<Vec<f64>>,
    pub(crate) rng: ChaCha8Rng,
    events: Vec<SessionEvent>,
}

impl SessionState {
    pub fn new(num_items: usize, seed: u64) -> Self {
        SessionState {
            num_items,
            row: SparseVec::new(),
            asked: Vec::new(),
            answers: Vec::new(),
            bandit_weights: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            events: Vec::new(),
        }
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Known ratings of the new user.
    pub fn row(&self) -> &SparseVec {
        &self.row
    }

    pub fn asked(&self) -> &[usize] {
        &self.asked
    }

    pub fn answers(&self) -> &[f64] {
        &self.answers
    }

    pub fn is_asked(&self, item: usize) -> bool {
        self.asked.contains(&item)
    }

    pub fn bandit_weights(&self) -> Option<&[f64]> {
        self.bandit_weights.as_deref()
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub(crate) fn push_event(&mut self, e: SessionEvent) {
        self.events.push(e);
    }

    /// Records an answer; 0 means "don't know" and reveals nothing.
    pub fn record_answer(&mut self, item: usize, rating: f64) -> Result<()> {
        if item >= self.num_items {
            return Err(Error::Dimension(format!("item {item} outside {} items", self.num_items)));
        }
        if self.is_asked(item) {
            return Err(Error::InvalidArgument(format!("item {item} was already answered")));
        }
        if !(0.0..=5.0).contains(&rating) {
            return Err(Error::InvalidArgument(format!("rating {rating} outside [0, 5]")));
        }
        self.asked.push(item);
        self.answers.push(rating);
        if rating > 0.0 {
            self.row.set(item, rating);
        }
        Ok(())
    }

    /// Items neither asked nor rated, restricted to `base`.
    pub fn candidates(&self, base: &ItemSet) -> ItemSet {
        let mut allowed = base.clone();
        for &i in &self.asked {
            allowed.remove(i);
        }
        for &i in self.row.indices() {
            allowed.remove(i);
        }
        allowed
    }
}

pub trait Questionnaire: Send + Sync {
    fn name(&self) -> &str;

    /// Prepares a fresh session (bandit questionnaires set uniform weights).
    fn start(&self, _state: &mut SessionState) {}

    /// Next item to ask, never one already asked; `None` when exhausted.
    fn next_question(&self, state: &mut SessionState) -> Option<usize>;

    fn observe(&self, state: &mut SessionState, item: usize, rating: f64) -> Result<()> {
        state.record_answer(item, rating)
    }

    /// Static questionnaires ask the same sequence regardless of answers.
    fn is_static(&self) -> bool {
        false
    }
}

pub trait Recommender: Send + Sync {
    fn name(&self) -> &str;

    /// Up to `n` items from `allowed`, best first.
    fn recommend(&self, state: &SessionState, n: usize, allowed: &ItemSet) -> Vec<usize>;
}

/// SLIM top-N on the session's known ratings.
#[derive(Clone, Debug)]
pub struct SlimRecommender {
    name: String,
    model: Arc<SlimModel>,
}

impl SlimRecommender {
    pub fn new(name: impl Into<String>, model: Arc<SlimModel>) -> Self {
        SlimRecommender {
            name: name.into(),
            model,
        }
    }
}

impl Recommender for SlimRecommender {
    fn name(&self) -> &str {
        &self.name
    }

    fn recommend(&self, state: &SessionState, n: usize, allowed: &ItemSet) -> Vec<usize> {
        let allowed = state.candidates(allowed);
        top_n(state.row().view(), &self.model, n, &allowed)
    }
}

/// Static list of items by total gain over the training users.
#[derive(Clone, Debug)]
pub struct GainRecommender {
    gains: Vec<f64>,
}

impl GainRecommender {
    pub fn new(x_train: &InteractionMatrix) -> Self {
        GainRecommender {
            gains: item_stats(x_train).iter().map(|s| s.gain_sum).collect(),
        }
    }
}

impl Recommender for GainRecommender {
    fn name(&self) -> &str {
        "r_gain"
    }

    fn recommend(&self, state: &SessionState, n: usize, allowed: &ItemSet) -> Vec<usize> {
        let allowed = state.candidates(allowed);
        rank_top_n(&self.gains, n, allowed.iter())
    }
}

/// The `n` items in `allowed` with the largest gain sum.
pub fn r_gain(x_train: &InteractionMatrix, n: usize, allowed: &ItemSet) -> Vec<usize> {
    let gains: Vec<f64> = item_stats(x_train).iter().map(|s| s.gain_sum).collect();
    rank_top_n(&gains, n, allowed.iter())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_are_recorded() {
        let mut s = SessionState::new(4, 0);
        s.record_answer(2, 4.0).unwrap();
        s.record_answer(1, 0.0).unwrap();
        assert_eq!(s.asked(), &[2, 1]);
        assert_eq!(s.answers(), &[4.0, 0.0]);
        assert_eq!(s.row().indices(), &[2]);
        assert!(s.record_answer(2, 3.0).is_err());
        assert!(s.record_answer(3, 6.0).is_err());
        assert!(s.record_answer(9, 3.0).is_err());
        assert_eq!(s.candidates(&ItemSet::full(4)).iter().collect::<Vec<_>>(), vec![0, 3]);
    }

    #[test]
    fn gain_examples() {
        // gains per item: 62, 31, 0
        let x = InteractionMatrix::from_triplets(2, 3, [(0, 0, 5.0), (1, 0, 5.0), (0, 1, 5.0)]).unwrap();
        assert_eq!(r_gain(&x, 2, &ItemSet::full(3)), vec![0, 1]);
        assert_eq!(r_gain(&x, 5, &ItemSet::from_items(3, [1, 2])), vec![1, 2]);
        let rec = GainRecommender::new(&x);
        let mut s = SessionState::new(3, 0);
        s.record_answer(0, 0.0).unwrap();
        assert_eq!(rec.recommend(&s, 2, &ItemSet::full(3)), vec![1, 2]);
    }
}
