//! Ranking metrics and the offline cold-start harness.

mod harness;
pub mod metrics;
pub mod plot;
mod report;

pub use harness::{
    baseline_gain_report, simulate_cold_start, user_seed, Aggregate, EvalConfig, EvalReport, Metric, ReportMeta,
    Restriction, UserResult, UserTrace,
};
pub use metrics::{dcg, gain, ndcg_at, precision_recall_at};
pub use report::{read_report_json, write_per_user_csv, write_report_json};
