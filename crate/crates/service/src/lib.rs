//! HTTP onboarding service for new users.
//!
//! A session asks a fixed number of rating questions with either the greedy
//! SLIM questionnaire or the bandit questionnaire, then shows one list of
//! long-tail recommendations and collects feedback on each of them. The
//! method is picked at creation and never revealed in responses.
//!
//! Sessions live in memory. Every event is appended to a JSON-lines
//! transcript that [`replay`] can re-run, and feedback goes to a CSV log
//! that [`summarize_feedback`] aggregates.

mod catalog;
mod http;
mod session;
mod transcript;

pub use catalog::{item_pool, read_id_list, split_title, Catalog, ItemCard};
pub use http::{router, serve, App};
pub use session::{
    validate_rating, Engine, FeedbackEntry, Method, Phase, Recommended, ServiceConfig, Session, SessionParams, Source,
    Verdict,
};
pub use transcript::{
    append_feedback, read_events, read_feedback, render_feedback_table, render_question_table, replay,
    summarize_feedback, summarize_questions, write_events, FeedbackRecord, FeedbackSummary, QuestionSummary,
    ReplayCheck, TranscriptEvent, FEEDBACK_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("{0}")]
    Conflict(String),

    #[error("{0}")]
    Validation(String),

    #[error("setup: {0}")]
    Setup(String),

    #[error("catalog: {0}")]
    Catalog(String),

    #[error("{0}")]
    Transcript(String),

    #[error(transparent)]
    Core(#[from] gslim::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
