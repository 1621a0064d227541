//! Offline cold-start simulation.
//!
//! Every test user starts as an empty row. The questionnaire asks one item at
//! a time and the user's true test rating (0 when absent) is revealed. At each
//! checkpoint the recommender ranks items from the restriction set minus the
//! asked items, and the list is scored against the user's test ratings.

use serde::{Deserialize, Serialize};

use crate::elicitation::{GainRecommender, Questionnaire, Recommender};
use crate::interactions::{DatasetSplit, PopularitySplit};
use crate::par::pairwise_sum;
use crate::{Error, Execution, ItemSet, Result, SessionState};

use super::metrics::{ndcg_with, precision_recall_at};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    #[default]
    All,
    LongTail,
}

impl Restriction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Restriction::All => "all",
            Restriction::LongTail => "long_tail",
        }
    }
}

impl std::str::FromStr for Restriction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Restriction::All),
            "long_tail" | "long-tail" | "longtail" => Ok(Restriction::LongTail),
            other => Err(Error::InvalidArgument(format!("unknown item restriction '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ndcg,
    Precision,
    Recall,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Ndcg, Metric::Precision, Metric::Recall];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Ndcg => "ndcg",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Question counts at which recommendations are scored, ascending.
    pub checkpoints: Vec<usize>,
    /// List lengths scored at every checkpoint.
    pub ns: Vec<usize>,
    pub restriction: Restriction,
    pub seed: u64,
    /// Count asked items as relevant for precision and recall.
    pub include_asked_in_relevants: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            checkpoints: vec![5, 10, 15, 20],
            ns: vec![5, 10],
            restriction: Restriction::All,
            seed: 0,
            include_asked_in_relevants: false,
            execution: Execution::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoints.is_empty() || self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "checkpoints {:?} must be non-empty and strictly ascending",
                self.checkpoints
            )));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(Error::InvalidArgument(format!("list lengths {:?} must be non-empty and >= 1", self.ns)));
        }
        Ok(())
    }

    fn max_n(&self) -> usize {
        self.ns.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub checkpoint: usize,
    pub metric: Metric,
    pub n: usize,
    pub mean: f64,
}

/// What happened to one test user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserTrace {
    pub asked: Vec<usize>,
    pub answers: Vec<f64>,
    /// One list of length `max(ns)` (or shorter) per checkpoint.
    pub recommendations: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserResult {
    /// External id of the test user.
    pub user: u64,
    /// Questions actually asked at each checkpoint.
    pub questions: Vec<usize>,
    /// Laid out as `[checkpoint][metric][n]`.
    pub values: Vec<f64>,
    #[serde(skip)]
    pub trace: Option<UserTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub questionnaire: Option<String>,
    pub recommender: String,
    pub restriction: Restriction,
    pub checkpoints: Vec<usize>,
    pub ns: Vec<usize>,
    pub seed: u64,
    pub include_asked_in_relevants: bool,
    pub num_test_users: usize,
    pub train_hash: String,
    pub test_hash: String,
    /// Filled in by callers that know where the models came from.
    pub model_ids: Vec<String>,
    /// Users for whom the questionnaire ran out before the last checkpoint.
    pub exhausted_users: usize,
    /// Hash of the run configuration that produced the report, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub aggregates: Vec<Aggregate>,
    #[serde(skip)]
    pub users: Vec<UserResult>,
}

impl EvalReport {
    pub fn mean(&self, checkpoint: usize, metric: Metric, n: usize) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.checkpoint == checkpoint && a.metric == metric && a.n == n)
            .map(|a| a.mean)
    }

    /// Offset of a `(checkpoint, metric, n)` cell in [`UserResult::values`].
    pub fn value_index(&self, checkpoint_pos: usize, metric: Metric, n_pos: usize) -> usize {
        let metric_pos = Metric::ALL.iter().position(|m| *m == metric).unwrap();
        (checkpoint_pos * Metric::ALL.len() + metric_pos) * self.meta.ns.len() + n_pos
    }

    pub fn exhausted(&self) -> bool {
        self.meta.exhausted_users > 0
    }
}

/// Per-user session seed derived from the run seed (SplitMix64 finaliser).
pub fn user_seed(seed: u64, user: usize) -> u64 {
    let mut z = seed.wrapping_add((user as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the cold-start protocol for every test user. Without a questionnaire
/// only checkpoint 0 is evaluated.
pub fn simulate_cold_start(
    questionnaire: Option<&dyn Questionnaire>,
    recommender: &dyn Recommender,
    split: &DatasetSplit,
    cfg: &EvalConfig,
    pop: &PopularitySplit,
) -> Result<EvalReport> {
    cfg.validate()?;
    let n_items = split.test.num_items();
    if split.train.num_items() != n_items {
        return Err(Error::Dimension("train and test item spaces differ".into()));
    }
    let restriction = match cfg.restriction {
        Restriction::All => ItemSet::full(n_items),
        Restriction::LongTail => {
            if pop.long_tail.iter().any(|&i| i >= n_items) {
                return Err(Error::Dimension("long-tail item outside the item space".into()));
            }
            pop.long_tail_set(n_items)
        }
    };
    let checkpoints = if questionnaire.is_some() {
        cfg.checkpoints.clone()
    } else {
        vec![0]
    };
    let max_n = cfg.max_n();
    let cells = checkpoints.len() * Metric::ALL.len() * cfg.ns.len();
    let x_test = &split.test;

    let users: Vec<UserResult> = cfg.execution.map(x_test.num_users(), |u| {
        let truth = x_test.row(u);
        let mut state = SessionState::new(n_items, user_seed(cfg.seed, u));
        if let Some(q) = questionnaire {
            q.start(&mut state);
        }
        let mut exhausted = false;
        let mut values = Vec::with_capacity(cells);
        let mut questions = Vec::with_capacity(checkpoints.len());
        let mut recommendations = Vec::with_capacity(checkpoints.len());
        for &k in &checkpoints {
            if let Some(q) = questionnaire {
                while state.asked().len() < k && !exhausted {
                    match q.next_question(&mut state) {
                        Some(item) => q
                            .observe(&mut state, item, truth.get(item))
                            .expect("questionnaires never repeat an item"),
                        None => exhausted = true,
                    }
                }
            }
            questions.push(state.asked().len());
            let allowed = state.candidates(&restriction);
            let recs = recommender.recommend(&state, max_n, &allowed);
            debug_assert!(recs.iter().all(|&i| allowed.contains(i)));

            let mut asked_sorted = state.asked().to_vec();
            asked_sorted.sort_unstable();
            let is_asked = |i: usize| asked_sorted.binary_search(&i).is_ok();
            let relevant: Vec<usize> = truth
                .indices()
                .iter()
                .copied()
                .filter(|&i| cfg.include_asked_in_relevants || !is_asked(i))
                .collect();
            let ndcg: Vec<f64> = cfg
                .ns
                .iter()
                .map(|&n| ndcg_with(truth, &recs, n, |i| restriction.contains(i) && !is_asked(i)))
                .collect();
            let pr: Vec<(f64, f64)> = cfg.ns.iter().map(|&n| precision_recall_at(&relevant, &recs, n)).collect();
            values.extend(&ndcg);
            values.extend(pr.iter().map(|p| p.0));
            values.extend(pr.iter().map(|p| p.1));
            recommendations.push(recs);
        }
        UserResult {
            user: x_test.user_ids()[u],
            questions,
            values,
            trace: Some(UserTrace {
                asked: state.asked().to_vec(),
                answers: state.answers().to_vec(),
                recommendations,
            }),
        }
    });

    let last = *checkpoints.last().unwrap();
    let exhausted_users = users.iter().filter(|r| *r.questions.last().unwrap() < last).count();
    if exhausted_users > 0 {
        log::warn!("questionnaire ran out of items for {exhausted_users} users before {last} questions");
    }
    let mut aggregates = Vec::with_capacity(cells);
    let mut column = Vec::with_capacity(users.len());
    for (c, &checkpoint) in checkpoints.iter().enumerate() {
        for (m, &metric) in Metric::ALL.iter().enumerate() {
            for (k, &n) in cfg.ns.iter().enumerate() {
                let idx = (c * Metric::ALL.len() + m) * cfg.ns.len() + k;
                column.clear();
                column.extend(users.iter().map(|r| r.values[idx]));
                let mean = if column.is_empty() {
                    0.0
                } else {
                    pairwise_sum(&column) / column.len() as f64
                };
                aggregates.push(Aggregate {
                    checkpoint,
                    metric,
                    n,
                    mean,
                });
            }
        }
    }
    Ok(EvalReport {
        meta: ReportMeta {
            questionnaire: questionnaire.map(|q| q.name().to_string()),
            recommender: recommender.name().to_string(),
            restriction: cfg.restriction,
            checkpoints,
            ns: cfg.ns.clone(),
            seed: cfg.seed,
            include_asked_in_relevants: cfg.include_asked_in_relevants,
            num_test_users: x_test.num_users(),
            train_hash: split.train.content_hash(),
            test_hash: x_test.content_hash(),
            model_ids: Vec::new(),
            exhausted_users,
            config_hash: None,
        },
        aggregates,
        users,
    })
}

/// The gain-sum baseline through the same harness, with no questions.
pub fn baseline_gain_report(split: &DatasetSplit, cfg: &EvalConfig, pop: &PopularitySplit) -> Result<EvalReport> {
    simulate_cold_start(None, &GainRecommender::new(&split.train), split, cfg, pop)
}
