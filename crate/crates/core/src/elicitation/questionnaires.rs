use std::io::Write;

use crate::greedy::{argmin_first, GreedyState, Scratch};
use crate::interactions::{item_stats, popularity_order};
use crate::slim::Trainer;
use crate::{Error, Execution, HyperParams, InteractionMatrix, Result, SlimModel, SparseVec};

use super::{Questionnaire, SessionState};

/// Fixed question order shared by every user.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticQuestionnaire {
    name: String,
    num_items: usize,
    order: Vec<usize>,
}

impl StaticQuestionnaire {
    pub fn new(name: impl Into<String>, num_items: usize, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; num_items];
        for &i in &order {
            if i >= num_items {
                return Err(Error::Dimension(format!("question {i} outside {num_items} items")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("question {i} listed twice")));
            }
        }
        Ok(StaticQuestionnaire {
            name: name.into(),
            num_items,
            order,
        })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Keeps the first `length` questions.
    pub fn truncated(mut self, length: usize) -> Self {
        self.order.truncate(length);
        self
    }
}

impl Questionnaire for StaticQuestionnaire {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_question(&self, state: &mut SessionState) -> Option<usize> {
        self.order
            .iter()
            .copied()
            .find(|&i| !state.is_asked(i) && state.row().get(i) == 0.0)
    }

    fn is_static(&self) -> bool {
        true
    }
}

/// Items by rating count, descending.
pub fn q_pop(x_train: &InteractionMatrix) -> StaticQuestionnaire {
    StaticQuestionnaire {
        name: "q_pop".into(),
        num_items: x_train.num_items(),
        order: popularity_order(x_train),
    }
}

/// Items by `log2(1 + count) * entropy`, descending; ties by count, then index.
pub fn q_var(x_train: &InteractionMatrix) -> StaticQuestionnaire {
    let stats = item_stats(x_train);
    let score: Vec<f64> = stats.iter().map(|s| (1.0 + s.count as f64).log2() * s.entropy).collect();
    let mut order: Vec<usize> = (0..x_train.num_items()).collect();
    order.sort_by(|&a, &b| {
        score[b]
            .total_cmp(&score[a])
            .then(stats[b].count.cmp(&stats[a].count))
            .then(a.cmp(&b))
    });
    StaticQuestionnaire {
        name: "q_var".into(),
        num_items: x_train.num_items(),
        order,
    }
}

/// Greedy subset selection over the rows of a fully trained `w`: each step
/// adds the row that lowers the SLIM loss of the partial model the most.
pub fn q_greedy(
    x_train: &InteractionMatrix,
    w: &SlimModel,
    hp: HyperParams,
    length: usize,
    exec: Execution,
) -> Result<StaticQuestionnaire> {
    let n = x_train.num_items();
    if w.num_items() != n {
        return Err(Error::Dimension(format!("model has {} items, data {n}", w.num_items())));
    }
    if length > n {
        return Err(Error::InvalidArgument(format!("questionnaire length {length} exceeds {n} items")));
    }
    let rows: Vec<SparseVec> = (0..n).map(|i| w.row(i).cloned().unwrap_or_default()).collect();
    let mut state = GreedyState::new(x_train, hp);
    let mut order = Vec::with_capacity(length);
    for step in 0..length {
        let candidates: Vec<usize> = state.empty_rows().iter().collect();
        let deltas = exec.map_init(
            candidates.len(),
            || Scratch::new(n),
            |s, k| state.given_row_delta_in(candidates[k], &rows[candidates[k]], s),
        );
        let pick = candidates[argmin_first(&deltas, state.loss()).expect("length <= n leaves candidates")];
        let delta = state.fill(pick, rows[pick].clone())?;
        log::debug!("q_greedy step {}: item {pick} delta {delta:.6e}", step + 1);
        order.push(pick);
    }
    Ok(StaticQuestionnaire {
        name: "q_greedy".into(),
        num_items: n,
        order,
    })
}

/// The first `length` rows of a greedily trained model, in training order.
pub fn q_gslim(model: &SlimModel, length: usize) -> Result<StaticQuestionnaire> {
    if model.trainer() != Trainer::Greedy {
        return Err(Error::InvalidArgument(format!(
            "q_gslim needs a greedy model, got trainer '{}'",
            model.trainer().as_str()
        )));
    }
    if model.num_rows() < length {
        return Err(Error::InvalidArgument(format!(
            "model has {} rows, {length} questions requested",
            model.num_rows()
        )));
    }
    let mut order = model.order();
    order.truncate(length);
    Ok(StaticQuestionnaire {
        name: "q_gslim".into(),
        num_items: model.num_items(),
        order,
    })
}

/// Writes `position,item_internal,item_external` with 1-based positions.
pub fn write_questionnaire_csv<W: Write>(mut out: W, q: &StaticQuestionnaire, item_ids: &[u64]) -> Result<()> {
    if item_ids.len() != q.num_items {
        return Err(Error::Dimension(format!("{} item ids for {} items", item_ids.len(), q.num_items)));
    }
    writeln!(out, "position,item_internal,item_external")?;
    for (p, &i) in q.order.iter().enumerate() {
        writeln!(out, "{},{},{}", p + 1, i, item_ids[i])?;
    }
    Ok(())
}
