//! Append-only session transcript (JSON lines), the feedback log (CSV) and
//! the reports computed from them.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::session::{Engine, FeedbackEntry, Method, SessionParams, Source, Verdict};
use crate::ServiceError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptEvent {
    Created {
        session: String,
        #[serde(flatten)]
        params: SessionParams,
        at_ms: u64,
    },
    Question {
        session: String,
        item: usize,
    },
    Answer {
        session: String,
        item: usize,
        rating: f64,
    },
    Recommendations {
        session: String,
        items: Vec<usize>,
        sources: Vec<Source>,
    },
    Feedback {
        session: String,
        item: usize,
        verdict: Verdict,
        #[serde(default)]
        known: Option<bool>,
    },
}

impl TranscriptEvent {
    pub fn session(&self) -> &str {
        match self {
            TranscriptEvent::Created { session, .. }
            | TranscriptEvent::Question { session, .. }
            | TranscriptEvent::Answer { session, .. }
            | TranscriptEvent::Recommendations { session, .. }
            | TranscriptEvent::Feedback { session, .. } => session,
        }
    }
}

pub fn write_events<W: Write>(mut out: W, events: &[TranscriptEvent]) -> Result<(), ServiceError> {
    for e in events {
        serde_json::to_writer(&mut out, e).map_err(|e| ServiceError::Transcript(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events<R: BufRead>(source: R) -> Result<Vec<TranscriptEvent>, ServiceError> {
    let mut out = Vec::new();
    for (k, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|e| ServiceError::Transcript(format!("transcript line {}: {e}", k + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Outcome of re-running one recorded session.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayCheck {
    pub session: String,
    pub questions_match: bool,
    /// `None` when the recorded session never reached recommendations.
    pub recorded: Option<Vec<usize>>,
    pub replayed: Option<Vec<usize>>,
}

impl ReplayCheck {
    pub fn matches(&self) -> bool {
        self.questions_match && self.recorded == self.replayed
    }
}

/// Re-runs every recorded session from its seed and answers and compares
/// the questions and recommendations with the recorded ones.
pub fn replay(engine: &Engine, events: &[TranscriptEvent]) -> Result<Vec<ReplayCheck>, ServiceError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_session: BTreeMap<&str, Vec<&TranscriptEvent>> = BTreeMap::new();
    for e in events {
        let list = by_session.entry(e.session()).or_default();
        if list.is_empty() {
            order.push(e.session().to_string());
        }
        list.push(e);
    }
    let mut checks = Vec::new();
    for id in order {
        let list = &by_session[id.as_str()];
        let TranscriptEvent::Created { params, at_ms, .. } = list[0] else {
            return Err(ServiceError::Transcript(format!("session {id} does not start with `created`")));
        };
        let mut s = engine.start(id.clone(), *params, *at_ms)?;
        let mut recorded_questions = Vec::new();
        let mut recorded = None;
        for e in &list[1..] {
            match e {
                TranscriptEvent::Answer { item, rating, .. } => engine.answer(&mut s, *item, *rating)?,
                TranscriptEvent::Question { item, .. } => recorded_questions.push(*item),
                TranscriptEvent::Recommendations { items, .. } => recorded = Some(items.clone()),
                TranscriptEvent::Created { .. } => {
                    return Err(ServiceError::Transcript(format!("session {id} created twice")));
                }
                TranscriptEvent::Feedback { .. } => {}
            }
        }
        let replayed_questions: Vec<usize> = s
            .transcript()
            .iter()
            .filter_map(|e| match e {
                TranscriptEvent::Question { item, .. } => Some(*item),
                _ => None,
            })
            .collect();
        checks.push(ReplayCheck {
            session: id,
            questions_match: replayed_questions == recorded_questions,
            recorded,
            replayed: s.recommendations().map(|r| r.iter().map(|x| x.item).collect()),
        });
    }
    Ok(checks)
}

/// One line of the feedback log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub session: String,
    pub method: Method,
    pub source: Source,
    pub item: usize,
    pub external_id: u64,
    pub verdict: Verdict,
    pub known: Option<bool>,
    pub at_ms: u64,
}

impl FeedbackRecord {
    pub fn new(session: &str, method: Method, entry: &FeedbackEntry, external_id: u64, at_ms: u64) -> Self {
        FeedbackRecord {
            session: session.to_string(),
            method,
            source: entry.source,
            item: entry.item,
            external_id,
            verdict: entry.verdict,
            known: entry.known,
            at_ms,
        }
    }
}

pub const FEEDBACK_HEADER: &str = "session,method,source,item,external_id,verdict,known,at_ms";

/// Appends one record; writes the header first when `with_header`.
pub fn append_feedback<W: Write>(mut out: W, rec: &FeedbackRecord, with_header: bool) -> Result<(), ServiceError> {
    if with_header {
        writeln!(out, "{FEEDBACK_HEADER}")?;
    }
    let known = match rec.known {
        Some(true) => "yes",
        Some(false) => "no",
        None => "",
    };
    writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        rec.session,
        rec.method.as_str(),
        rec.source.as_str(),
        rec.item,
        rec.external_id,
        rec.verdict.as_str(),
        known,
        rec.at_ms
    )?;
    out.flush()?;
    Ok(())
}

pub fn read_feedback<R: Read>(source: R) -> Result<Vec<FeedbackRecord>, ServiceError> {
    let bad = |line: usize, msg: String| ServiceError::Transcript(format!("feedback line {line}: {msg}"));
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        if row.len() != 8 {
            return Err(bad(line, format!("expected 8 fields, found {}", row.len())));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad(line, format!("bad number {s:?}")));
        out.push(FeedbackRecord {
            session: row[0].to_string(),
            method: row[1].parse().map_err(|e: ServiceError| bad(line, e.to_string()))?,
            source: row[2].parse().map_err(|e: ServiceError| bad(line, e.to_string()))?,
            item: num(&row[3])? as usize,
            external_id: num(&row[4])?,
            verdict: row[5].parse().map_err(|e: ServiceError| bad(line, e.to_string()))?,
            known: match &row[6] {
                "yes" => Some(true),
                "no" => Some(false),
                "" => None,
                other => return Err(bad(line, format!("bad known flag {other:?}"))),
            },
            at_ms: num(&row[7])?,
        });
    }
    Ok(out)
}

/// Feedback shares for one recommendation source, as fractions in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeedbackSummary {
    pub source: Source,
    pub total: usize,
    pub positive: f64,
    pub very_positive: f64,
    /// Share of items marked unknown among those with a known flag.
    pub unknown: Option<f64>,
    /// Positive share among items marked unknown.
    pub positive_among_unknown: Option<f64>,
}

pub fn summarize_feedback(records: &[FeedbackRecord]) -> Vec<FeedbackSummary> {
    let mut groups: BTreeMap<Source, Vec<&FeedbackRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.source).or_default().push(r);
    }
    let share = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
    groups
        .into_iter()
        .map(|(source, rs)| {
            let total = rs.len();
            let flagged: Vec<_> = rs.iter().filter(|r| r.known.is_some()).collect();
            let unknown: Vec<_> = flagged.iter().filter(|r| r.known == Some(false)).collect();
            FeedbackSummary {
                source,
                total,
                positive: share(rs.iter().filter(|r| r.verdict.is_positive()).count(), total).unwrap_or(0.0),
                very_positive: share(rs.iter().filter(|r| r.verdict == Verdict::VeryGood).count(), total)
                    .unwrap_or(0.0),
                unknown: share(unknown.len(), flagged.len()),
                positive_among_unknown: share(
                    unknown.iter().filter(|r| r.verdict.is_positive()).count(),
                    unknown.len(),
                ),
            }
        })
        .collect()
}

/// Answer statistics of the question phase for one method.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuestionSummary {
    pub method: Method,
    pub answers: usize,
    /// Share of answers other than "don't know".
    pub known: f64,
    /// Mean of the non-zero ratings.
    pub average_rating: Option<f64>,
}

pub fn summarize_questions(events: &[TranscriptEvent]) -> Vec<QuestionSummary> {
    let mut method_of: BTreeMap<&str, Method> = BTreeMap::new();
    let mut ratings: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for e in events {
        match e {
            TranscriptEvent::Created { session, params, .. } => {
                method_of.insert(session, params.method);
                ratings.entry(params.method).or_default();
            }
            TranscriptEvent::Answer { session, rating, .. } => {
                if let Some(m) = method_of.get(session.as_str()) {
                    ratings.entry(*m).or_default().push(*rating);
                }
            }
            _ => {}
        }
    }
    ratings
        .into_iter()
        .map(|(method, rs)| {
            let known: Vec<f64> = rs.iter().copied().filter(|&r| r > 0.0).collect();
            QuestionSummary {
                method,
                answers: rs.len(),
                known: if rs.is_empty() { 0.0 } else { known.len() as f64 / rs.len() as f64 },
                average_rating: if known.is_empty() {
                    None
                } else {
                    Some(known.iter().sum::<f64>() / known.len() as f64)
                },
            }
        })
        .collect()
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |v| format!("{:.1}%", 100.0 * v))
}

/// Plain-text table with one column per source.
pub fn render_feedback_table(summaries: &[FeedbackSummary]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("".into(), summaries.iter().map(|s| s.source.as_str().to_string()).collect()),
        ("Feedback lines".into(), summaries.iter().map(|s| s.total.to_string()).collect()),
        ("Positive Feedback (PF)".into(), summaries.iter().map(|s| pct(Some(s.positive))).collect()),
        ("Very Positive Feedback".into(), summaries.iter().map(|s| pct(Some(s.very_positive))).collect()),
        ("Unknown Items".into(), summaries.iter().map(|s| pct(s.unknown)).collect()),
        ("PF Among Unknown Items".into(), summaries.iter().map(|s| pct(s.positive_among_unknown)).collect()),
    ];
    let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let col_w = rows.iter().flat_map(|r| r.1.iter().map(String::len)).max().unwrap_or(0).max(8);
    let mut out = String::new();
    for (label, cells) in rows.drain(..) {
        out.push_str(&format!("{label:<label_w$}"));
        for c in cells {
            out.push_str(&format!("  {c:>col_w$}"));
        }
        out.push('\n');
    }
    out
}

pub fn render_question_table(summaries: &[QuestionSummary]) -> String {
    let mut out = format!("{:<10}  {:>8}  {:>11}  {:>14}\n", "method", "answers", "known items", "average rating");
    for s in summaries {
        out.push_str(&format!(
            "{:<10}  {:>8}  {:>11}  {:>14}\n",
            s.method.as_str(),
            s.answers,
            pct(Some(s.known)),
            s.average_rating.map_or("-".into(), |r| format!("{r:.2}"))
        ));
    }
    out
}
