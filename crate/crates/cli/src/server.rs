//! The onboarding server and its log tools.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use gslim::interactions::short_head_split;
use gslim_service::{
    item_pool, read_events, read_feedback, read_id_list, render_feedback_table, render_question_table, replay as replay_events,
    summarize_feedback, summarize_questions, App, Catalog, Engine, ServiceConfig,
};
use serde_json::json;

use crate::layout::{open, write_json};
use crate::pipeline::{load_split, read_slim, read_svd};
use crate::{CliError, Context};

/// Inputs needed to rebuild the session engine.
#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// MovieLens-style `movieId,title,genres` catalog.
    #[arg(long)]
    pub catalog: PathBuf,
    /// Optional `movieId,poster_url,abstract` file.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Only these external item ids may be shown (one per line).
    #[arg(long)]
    pub allowlist: Option<PathBuf>,
    /// These external item ids are never shown (one per line).
    #[arg(long)]
    pub blocklist: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub num_questions: usize,
    #[arg(long, default_value_t = 10)]
    pub num_recs: usize,
    /// Slots of each recommendation list filled from the gain baseline.
    #[arg(long, default_value_t = 0)]
    pub gain_recs: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory with the web bundle, served for non-API paths.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Defaults to `<out>/transcript.jsonl`.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Defaults to `<out>/feedback.csv`.
    #[arg(long)]
    pub feedback_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Defaults to `<out>/transcript.jsonl`.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

fn id_list(path: &Option<PathBuf>) -> Result<Option<Vec<u64>>, CliError> {
    path.as_ref().map(|p| Ok(read_id_list(open(p)?)?)).transpose()
}

pub fn build_engine(ctx: &Context, args: &EngineArgs) -> Result<Engine, CliError> {
    let s = load_split(ctx)?;
    let l = &ctx.layout;
    let model = read_slim(&l.gslim(), &s.train, "train-gslim")?;
    let lfm = read_svd(&l.svd(), &s.train)?;
    let ids = s.train.item_ids();
    let mut catalog = Catalog::from_movies_csv(open(&args.catalog)?, ids)?;
    if let Some(p) = &args.sidecar {
        catalog = catalog.with_sidecar(open(p)?)?;
    }
    let allow = id_list(&args.allowlist)?;
    let block = id_list(&args.blocklist)?.unwrap_or_default();
    let pool = item_pool(&catalog, ids, allow.as_deref(), &block);
    let cfg = ServiceConfig {
        num_questions: args.num_questions,
        num_recs: args.num_recs,
        gain_recs: args.gain_recs,
        sigma: ctx.cfg.sigma,
        coverage: ctx.cfg.coverage,
    };
    let engine = Engine::new(&s.train, Arc::new(model), Arc::new(lfm), catalog, pool, cfg)?;
    log::info!(
        "{} items may be asked, {} recommended",
        engine.pool().len(),
        engine.recommendable().len()
    );
    // sanity: the long tail exists for the configured coverage
    short_head_split(&s.train, ctx.cfg.coverage)?;
    Ok(engine)
}

pub fn serve(ctx: &Context, args: &ServeArgs) -> Result<(), CliError> {
    let engine = build_engine(ctx, &args.engine)?;
    let transcript = args.transcript.clone().unwrap_or_else(|| ctx.layout.transcript());
    let feedback = args.feedback_log.clone().unwrap_or_else(|| ctx.layout.feedback());
    let app = App::new(Arc::new(engine))
        .with_transcript(&transcript)?
        .with_feedback_log(&feedback)?;
    if let Some(dir) = &args.static_dir {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
        }
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(gslim_service::serve(Arc::new(app), args.addr, args.static_dir.clone()))?;
    Ok(())
}

fn default_path(given: Option<PathBuf>, fallback: PathBuf) -> PathBuf {
    given.unwrap_or(fallback)
}

pub fn feedback_report(
    ctx: &Context,
    feedback: Option<PathBuf>,
    transcript: Option<PathBuf>,
    json_out: Option<PathBuf>,
) -> Result<(), CliError> {
    let feedback = default_path(feedback, ctx.layout.feedback());
    let records = read_feedback(open(&feedback)?)?;
    let summary = summarize_feedback(&records);
    print!("{}", render_feedback_table(&summary));
    let questions = match &transcript {
        Some(path) => {
            let events = read_events(open(path)?)?;
            let q = summarize_questions(&events);
            print!("{}", render_question_table(&q));
            Some(q)
        }
        None => None,
    };
    if let Some(path) = json_out {
        write_json(&path, &json!({ "feedback": summary, "questions": questions }))?;
    }
    Ok(())
}

pub fn replay(ctx: &Context, args: &ReplayArgs) -> Result<(), CliError> {
    let engine = build_engine(ctx, &args.engine)?;
    let path: &Path = &default_path(args.transcript.clone(), ctx.layout.transcript());
    let events = read_events(open(path)?)?;
    let checks = replay_events(&engine, &events)?;
    let mismatched = checks.iter().filter(|c| !c.matches()).count();
    for c in &checks {
        println!("{} {}", c.session, if c.matches() { "ok" } else { "MISMATCH" });
    }
    println!("{} sessions replayed, {mismatched} mismatched", checks.len());
    if mismatched > 0 {
        return Err(CliError::Data(format!("{mismatched} sessions did not replay")));
    }
    Ok(())
}
