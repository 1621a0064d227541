//! Onboarding sessions: a fixed number of questions, then one list of
//! long-tail recommendations, then feedback on each recommended item.

use std::sync::Arc;

use gslim::elicitation::{
    q_gslim, BanditQuestionnaire, BanditRecommender, GainRecommender, Questionnaire, Recommender, SlimRecommender,
    StaticQuestionnaire,
};
use gslim::interactions::short_head_split;
use gslim::lfm::LfmModel;
use gslim::slim::Trainer;
use gslim::{InteractionMatrix, ItemSet, SessionState, SlimModel};
use serde::{Deserialize, Serialize};

use crate::transcript::TranscriptEvent;
use crate::{Catalog, ServiceError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gslim,
    Bandit,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Gslim => "gslim",
            Method::Bandit => "bandit",
        }
    }

    /// `gslim`, `bandit` or `random` (a fair coin).
    pub fn choose(name: &str) -> Result<Method, ServiceError> {
        match name {
            "random" => Ok(if rand::random::<bool>() { Method::Gslim } else { Method::Bandit }),
            other => other.parse(),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gslim" => Ok(Method::Gslim),
            "bandit" => Ok(Method::Bandit),
            other => Err(ServiceError::BadRequest(format!("unknown method {other:?}"))),
        }
    }
}

/// Which list a recommended item came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    QGslim,
    QBandit,
    RGain,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::QGslim => "q_gslim",
            Source::QBandit => "q_bandit",
            Source::RGain => "r_gain",
        }
    }

    fn of(method: Method) -> Source {
        match method {
            Method::Gslim => Source::QGslim,
            Method::Bandit => Source::QBandit,
        }
    }
}

impl std::str::FromStr for Source {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "q_gslim" => Ok(Source::QGslim),
            "q_bandit" => Ok(Source::QBandit),
            "r_gain" => Ok(Source::RGain),
            other => Err(ServiceError::Validation(format!("unknown source {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Questioning,
    Recommending,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bad,
    Good,
    VeryGood,
    DontKnow,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Bad => "bad",
            Verdict::Good => "good",
            Verdict::VeryGood => "very_good",
            Verdict::DontKnow => "dont_know",
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Verdict::Good | Verdict::VeryGood)
    }
}

impl std::str::FromStr for Verdict {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bad" => Ok(Verdict::Bad),
            "good" => Ok(Verdict::Good),
            "very_good" => Ok(Verdict::VeryGood),
            "dont_know" => Ok(Verdict::DontKnow),
            other => Err(ServiceError::Validation(format!("unknown verdict {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommended {
    pub item: usize,
    pub source: Source,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub item: usize,
    pub source: Source,
    pub verdict: Verdict,
    pub known: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub num_questions: usize,
    pub num_recs: usize,
    /// Slots of every recommendation list filled by the static gain list;
    /// 0 shows only the session's own method.
    pub gain_recs: usize,
    pub sigma: f64,
    /// Short-head coverage used to derive the long tail.
    pub coverage: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            num_questions: 10,
            num_recs: 10,
            gain_recs: 0,
            sigma: 1.0,
            coverage: 0.33,
        }
    }
}

/// Per-session parameters chosen at creation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionParams {
    pub method: Method,
    pub seed: u64,
    pub num_questions: usize,
    pub num_recs: usize,
    pub gain_recs: usize,
}

/// Shared read-only models plus the per-method questionnaires.
pub struct Engine {
    catalog: Catalog,
    config: ServiceConfig,
    gslim_q: StaticQuestionnaire,
    bandit_q: BanditQuestionnaire,
    gslim_r: SlimRecommender,
    bandit_r: BanditRecommender,
    gain_r: GainRecommender,
    /// Items that may be asked.
    pool: ItemSet,
    /// Items that may be recommended: long tail within the pool.
    rec_pool: ItemSet,
}

impl Engine {
    /// `x_train` supplies the long tail and the gain list; `pool` limits
    /// every item the service shows.
    pub fn new(
        x_train: &InteractionMatrix,
        gslim: Arc<SlimModel>,
        lfm: Arc<LfmModel>,
        catalog: Catalog,
        pool: ItemSet,
        config: ServiceConfig,
    ) -> Result<Engine, ServiceError> {
        let n = x_train.num_items();
        for (what, k) in [
            ("greedy model", gslim.num_items()),
            ("latent factor model", lfm.num_items()),
            ("catalog", catalog.num_items()),
            ("item pool", pool.universe()),
        ] {
            if k != n {
                return Err(ServiceError::Setup(format!("{what} has {k} items, training data {n}")));
            }
        }
        if lfm.num_users() != x_train.num_users() {
            return Err(ServiceError::Setup(format!(
                "latent factor model has {} users, training data {}",
                lfm.num_users(),
                x_train.num_users()
            )));
        }
        if gslim.trainer() != Trainer::Greedy {
            return Err(ServiceError::Setup("the gslim model must come from the greedy trainer".into()));
        }
        if config.num_recs == 0 || config.gain_recs > config.num_recs {
            return Err(ServiceError::Setup(format!(
                "num_recs {} and gain_recs {} are inconsistent",
                config.num_recs, config.gain_recs
            )));
        }
        let order = q_gslim(&gslim, gslim.num_rows())?
            .order()
            .iter()
            .copied()
            .filter(|&i| pool.contains(i))
            .collect();
        let gslim_q = StaticQuestionnaire::new("q_gslim", n, order)?;
        let bandit_q = BanditQuestionnaire::new(lfm.clone(), config.sigma)?.with_pool(pool.clone());
        let long_tail = short_head_split(x_train, config.coverage)?.long_tail_set(n);
        let rec_pool = long_tail.intersection(&pool);
        log::info!(
            "engine ready: {} items, {} askable, {} recommendable, {} greedy questions",
            n,
            pool.len(),
            rec_pool.len(),
            gslim_q.len()
        );
        Ok(Engine {
            catalog,
            config,
            gslim_q,
            bandit_q,
            gslim_r: SlimRecommender::new("r_gslim", gslim),
            bandit_r: BanditRecommender::new(lfm),
            gain_r: GainRecommender::new(x_train),
            pool,
            rec_pool,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn pool(&self) -> &ItemSet {
        &self.pool
    }

    pub fn recommendable(&self) -> &ItemSet {
        &self.rec_pool
    }

    /// Greedy questions in the order they are asked.
    pub fn gslim_order(&self) -> &[usize] {
        self.gslim_q.order()
    }

    fn questionnaire(&self, m: Method) -> &dyn Questionnaire {
        match m {
            Method::Gslim => &self.gslim_q,
            Method::Bandit => &self.bandit_q,
        }
    }

    fn recommender(&self, m: Method) -> &dyn Recommender {
        match m {
            Method::Gslim => &self.gslim_r,
            Method::Bandit => &self.bandit_r,
        }
    }

    /// Fills unset parameters from the service defaults.
    pub fn params(
        &self,
        method: Method,
        seed: u64,
        num_questions: Option<usize>,
        num_recs: Option<usize>,
    ) -> Result<SessionParams, ServiceError> {
        let p = SessionParams {
            method,
            seed,
            num_questions: num_questions.unwrap_or(self.config.num_questions),
            num_recs: num_recs.unwrap_or(self.config.num_recs),
            gain_recs: self.config.gain_recs,
        };
        if p.num_questions == 0 || p.num_questions > self.pool.len() {
            return Err(ServiceError::Validation(format!(
                "num_questions must be in 1..={}",
                self.pool.len()
            )));
        }
        if p.method == Method::Gslim && p.num_questions > self.gslim_q.len() {
            return Err(ServiceError::Validation(format!(
                "the greedy questionnaire has only {} questions",
                self.gslim_q.len()
            )));
        }
        if p.num_recs == 0 || p.num_recs > 100 || p.gain_recs > p.num_recs {
            return Err(ServiceError::Validation("num_recs must be in 1..=100".into()));
        }
        Ok(p)
    }

    /// Starts a session and asks its first question.
    pub fn start(&self, id: String, params: SessionParams, created_at_ms: u64) -> Result<Session, ServiceError> {
        let q = self.questionnaire(params.method);
        let mut state = SessionState::new(self.catalog.num_items(), params.seed);
        q.start(&mut state);
        let pending = q.next_question(&mut state);
        let Some(first) = pending else {
            return Err(ServiceError::Setup("no askable items".into()));
        };
        let mut s = Session {
            id: id.clone(),
            params,
            created_at_ms,
            state,
            phase: Phase::Questioning,
            pending,
            recommendations: None,
            feedback: Vec::new(),
            log: Vec::new(),
        };
        s.log.push(TranscriptEvent::Created {
            session: id.clone(),
            params,
            at_ms: created_at_ms,
        });
        s.log.push(TranscriptEvent::Question { session: id, item: first });
        Ok(s)
    }

    /// Records the answer to the pending question and advances the session.
    pub fn answer(&self, s: &mut Session, item: usize, rating: f64) -> Result<(), ServiceError> {
        let rating = validate_rating(rating)?;
        if s.phase != Phase::Questioning {
            return Err(ServiceError::Conflict("the questionnaire is already complete".into()));
        }
        if s.pending != Some(item) {
            return Err(ServiceError::Conflict(format!(
                "item {item} is not the pending question {}",
                s.pending.map_or("(none)".to_string(), |p| p.to_string())
            )));
        }
        let q = self.questionnaire(s.params.method);
        q.observe(&mut s.state, item, rating)?;
        s.log.push(TranscriptEvent::Answer {
            session: s.id.clone(),
            item,
            rating,
        });
        s.pending = None;
        if s.state.asked().len() < s.params.num_questions {
            s.pending = q.next_question(&mut s.state);
        }
        match s.pending {
            Some(next) => s.log.push(TranscriptEvent::Question {
                session: s.id.clone(),
                item: next,
            }),
            None => {
                if s.state.asked().len() < s.params.num_questions {
                    log::warn!("session {} ran out of questions after {}", s.id, s.state.asked().len());
                }
                self.finish_questions(s);
            }
        }
        Ok(())
    }

    fn finish_questions(&self, s: &mut Session) {
        let recs = self.recommend(&s.state, s.params);
        s.log.push(TranscriptEvent::Recommendations {
            session: s.id.clone(),
            items: recs.iter().map(|r| r.item).collect(),
            sources: recs.iter().map(|r| r.source).collect(),
        });
        s.recommendations = Some(recs);
        s.phase = Phase::Recommending;
    }

    /// The session's method list, with `gain_recs` slots interleaved from
    /// the gain list. Every item is long tail, unasked and unrated.
    fn recommend(&self, state: &SessionState, p: SessionParams) -> Vec<Recommended> {
        let own = self
            .recommender(p.method)
            .recommend(state, p.num_recs - p.gain_recs, &self.rec_pool);
        let mut rest = self.rec_pool.clone();
        for &i in &own {
            rest.remove(i);
        }
        let gain = self.gain_r.recommend(state, p.gain_recs, &rest);
        let mut out = Vec::with_capacity(own.len() + gain.len());
        let (mut a, mut b) = (own.into_iter(), gain.into_iter());
        loop {
            let x = a.next().map(|item| Recommended { item, source: Source::of(p.method) });
            let y = b.next().map(|item| Recommended { item, source: Source::RGain });
            if x.is_none() && y.is_none() {
                break;
            }
            out.extend(x);
            out.extend(y);
        }
        out
    }

    pub fn feedback(&self, s: &mut Session, item: usize, verdict: Verdict, known: Option<bool>) -> Result<FeedbackEntry, ServiceError> {
        let Some(recs) = &s.recommendations else {
            return Err(ServiceError::Conflict("no recommendations yet".into()));
        };
        let Some(rec) = recs.iter().find(|r| r.item == item) else {
            return Err(ServiceError::Validation(format!("item {item} was not recommended in this session")));
        };
        if s.feedback.iter().any(|f| f.item == item) {
            return Err(ServiceError::Conflict(format!("feedback for item {item} was already recorded")));
        }
        let entry = FeedbackEntry {
            item,
            source: rec.source,
            verdict,
            known,
        };
        s.feedback.push(entry.clone());
        s.log.push(TranscriptEvent::Feedback {
            session: s.id.clone(),
            item,
            verdict,
            known,
        });
        if s.feedback.len() == recs.len() {
            s.phase = Phase::Done;
        }
        Ok(entry)
    }
}

/// Ratings are whole stars 1..=5, or 0 for "don't know".
pub fn validate_rating(rating: f64) -> Result<f64, ServiceError> {
    if rating.fract() == 0.0 && (0.0..=5.0).contains(&rating) {
        Ok(rating)
    } else {
        Err(ServiceError::Validation(format!("rating {rating} is not one of 0, 1, 2, 3, 4, 5")))
    }
}

pub struct Session {
    id: String,
    params: SessionParams,
    created_at_ms: u64,
    state: SessionState,
    phase: Phase,
    pending: Option<usize>,
    recommendations: Option<Vec<Recommended>>,
    feedback: Vec<FeedbackEntry>,
    log: Vec<TranscriptEvent>,
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> SessionParams {
        self.params
    }

    pub fn created_at_ms(&self) -> u64 {
        self.created_at_ms
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn pending(&self) -> Option<usize> {
        self.pending
    }

    pub fn answered(&self) -> usize {
        self.state.asked().len()
    }

    pub fn recommendations(&self) -> Option<&[Recommended]> {
        self.recommendations.as_deref()
    }

    pub fn feedback(&self) -> &[FeedbackEntry] {
        &self.feedback
    }

    /// Every event so far, oldest first.
    pub fn transcript(&self) -> &[TranscriptEvent] {
        &self.log
    }
}
