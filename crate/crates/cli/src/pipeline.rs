//! Offline pipeline commands.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gslim::elicitation::{
    q_greedy, q_gslim, q_pop, q_var, write_questionnaire_csv, BanditQuestionnaire, BanditRecommender,
    Questionnaire, Recommender, SlimRecommender, StaticQuestionnaire,
};
use gslim::evaluation::plot::{curves_csv, curves_svg, Curve, Panel};
use gslim::evaluation::{
    baseline_gain_report, read_report_json, simulate_cold_start, write_per_user_csv, write_report_json, EvalConfig,
    EvalReport, Metric, Restriction,
};
use gslim::greedy::{train_greedy, write_round_log, GreedyOptions};
use gslim::interactions::{load_ratings, short_head_split, split_users, write_id_map, DatasetSplit, RatingFormat};
use gslim::lfm::{read_lfm, train_pure_svd, write_lfm_with_meta, LfmModel, SvdMethod, SvdOptions};
use gslim::slim::{read_model, slim_loss, train_coordinate_descent, write_model, CdOptions, Trainer};
use gslim::{Execution, InteractionMatrix, SlimModel};
use serde::{Deserialize, Serialize};

use crate::layout::{create, embedded_hash, file_id, open, read_json, write_json, write_tagged};
use crate::{CliError, Context};

const MB: f64 = 1024.0 * 1024.0;

/// Refuses work whose estimated footprint exceeds the configured limit.
fn check_capacity(ctx: &Context, what: &str, bytes: f64) -> Result<(), CliError> {
    let limit = ctx.cfg.memory_limit_mb as f64 * MB;
    log::debug!("{what}: estimated {:.1} MB", bytes / MB);
    if bytes > limit {
        return Err(CliError::Capacity(format!(
            "{what} needs about {:.0} MB, memory_limit_mb is {}",
            (bytes / MB).ceil(),
            ctx.cfg.memory_limit_mb
        )));
    }
    Ok(())
}

fn workers(exec: Execution) -> f64 {
    match exec {
        Execution::Sequential => 1.0,
        Execution::Parallel => rayon::current_num_threads() as f64,
    }
}

/// Row and column copies of the ratings.
fn matrix_bytes(x: &InteractionMatrix) -> f64 {
    40.0 * x.nnz() as f64 + 16.0 * (x.num_users() + x.num_items()) as f64
}

pub fn read_ratings(path: &Path) -> Result<InteractionMatrix, CliError> {
    let mut first = String::new();
    for line in open(path)?.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            first = t.to_string();
            break;
        }
    }
    if first.is_empty() {
        return Err(CliError::Data(format!("{}: no ratings", path.display())));
    }
    let (x, stats) = load_ratings(open(path)?, RatingFormat::sniff(&first))?;
    log::debug!("{}: {} lines", path.display(), stats.lines);
    Ok(x)
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestSummary {
    config_hash: String,
    source: PathBuf,
    lines: usize,
    duplicates: usize,
    users: usize,
    items: usize,
    ratings: usize,
    content_hash: String,
}

pub fn ingest(ctx: &Context) -> Result<(), CliError> {
    let src = &ctx.cfg.dataset;
    let mut first = String::new();
    for line in open(src)?.lines() {
        let line = line?;
        if !line.trim().is_empty() && !line.trim_start().starts_with('#') {
            first = line;
            break;
        }
    }
    let (x, stats) = load_ratings(open(src)?, RatingFormat::sniff(&first))?;
    if x.nnz() == 0 {
        return Err(CliError::Data(format!("{}: no ratings", src.display())));
    }
    let l = &ctx.layout;
    write_tagged(&l.ratings(), &ctx.hash, |out| {
        writeln!(out, "userId,itemId,rating")?;
        for (u, i, r) in x.triplets() {
            writeln!(out, "{},{},{}", x.user_ids()[u], x.item_ids()[i], r)?;
        }
        Ok(())
    })?;
    write_tagged(&l.users(), &ctx.hash, |out| Ok(write_id_map(out, x.user_ids())?))?;
    write_tagged(&l.items(), &ctx.hash, |out| Ok(write_id_map(out, x.item_ids())?))?;
    let summary = IngestSummary {
        config_hash: ctx.hash.clone(),
        source: src.clone(),
        lines: stats.lines,
        duplicates: stats.duplicates,
        users: x.num_users(),
        items: x.num_items(),
        ratings: x.nnz(),
        content_hash: x.content_hash(),
    };
    write_json(&l.ingest(), &summary)?;
    println!(
        "ingested {} ratings ({} duplicates) from {} users on {} items",
        x.nnz(),
        stats.duplicates,
        x.num_users(),
        x.num_items()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    config_hash: String,
    seed: u64,
    test_fraction: f64,
    ratings_hash: String,
    train_hash: String,
    test_hash: String,
    /// External user ids, ascending.
    train_users: Vec<u64>,
    test_users: Vec<u64>,
}

#[derive(Debug, Serialize)]
struct PopularityFile<'a> {
    config_hash: &'a str,
    requested_coverage: f64,
    coverage: f64,
    /// External item ids, most popular first.
    short_head: Vec<u64>,
    long_tail: Vec<u64>,
}

pub fn split(ctx: &Context) -> Result<(), CliError> {
    let l = &ctx.layout;
    let x = read_ratings(&l.ratings())?;
    let s = split_users(&x, ctx.cfg.test_fraction, ctx.cfg.seed)?;
    let ext = |users: &[usize]| users.iter().map(|&u| x.user_ids()[u]).collect::<Vec<_>>();
    write_json(
        &l.split(),
        &SplitFile {
            config_hash: ctx.hash.clone(),
            seed: ctx.cfg.seed,
            test_fraction: ctx.cfg.test_fraction,
            ratings_hash: x.content_hash(),
            train_hash: s.train.content_hash(),
            test_hash: s.test.content_hash(),
            train_users: ext(&s.train_users),
            test_users: ext(&s.test_users),
        },
    )?;
    let pop = short_head_split(&s.train, ctx.cfg.coverage)?;
    let items = |v: &[usize]| v.iter().map(|&i| x.item_ids()[i]).collect::<Vec<_>>();
    write_json(
        &l.popularity(),
        &PopularityFile {
            config_hash: &ctx.hash,
            requested_coverage: ctx.cfg.coverage,
            coverage: pop.coverage,
            short_head: items(&pop.short_head),
            long_tail: items(&pop.long_tail),
        },
    )?;
    println!(
        "{} training users, {} test users; short head {} items ({:.1}% of ratings), long tail {}",
        s.train_users.len(),
        s.test_users.len(),
        pop.short_head.len(),
        100.0 * pop.coverage,
        pop.long_tail.len()
    );
    Ok(())
}

/// The ratings and the split recorded by `split`.
pub fn load_split(ctx: &Context) -> Result<DatasetSplit, CliError> {
    let l = &ctx.layout;
    let x = read_ratings(&l.ratings())?;
    let f: SplitFile = read_json(&l.split())?;
    if f.ratings_hash != x.content_hash() {
        return Err(CliError::Data(format!(
            "{} changed since the split was made; run split again",
            l.ratings().display()
        )));
    }
    let index = |ids: &[u64]| -> Result<Vec<usize>, CliError> {
        ids.iter()
            .map(|id| {
                x.user_ids()
                    .binary_search(id)
                    .map_err(|_| CliError::Data(format!("split names unknown user {id}")))
            })
            .collect()
    };
    let train_users = index(&f.train_users)?;
    let test_users = index(&f.test_users)?;
    let s = DatasetSplit {
        train: x.select_users(&train_users),
        test: x.select_users(&test_users),
        train_users,
        test_users,
    };
    if s.train.content_hash() != f.train_hash || s.test.content_hash() != f.test_hash {
        return Err(CliError::Data("split hashes do not match the ratings".into()));
    }
    Ok(s)
}

fn model_meta<'a>(ctx: &'a Context, train_hash: &'a str, seed: &'a str) -> [(&'a str, &'a str); 3] {
    [("config_hash", ctx.hash.as_str()), ("train_hash", train_hash), ("seed", seed)]
}

fn greedy_options(ctx: &Context) -> GreedyOptions {
    GreedyOptions {
        min_item_ratings: ctx.cfg.min_item_ratings,
        recompute_every: ctx.cfg.recompute_every,
        execution: ctx.exec,
    }
}

fn greedy_bytes(ctx: &Context, x: &InteractionMatrix) -> f64 {
    let n = x.num_items() as f64;
    matrix_bytes(x) + 24.0 * ctx.cfg.num_rows as f64 * n + 24.0 * n * workers(ctx.exec) + 64.0 * n
}

pub fn train_gslim(ctx: &Context) -> Result<(), CliError> {
    let s = load_split(ctx)?;
    check_capacity(ctx, "train-gslim", greedy_bytes(ctx, &s.train))?;
    let started = Instant::now();
    let (model, log) = train_greedy(&s.train, ctx.cfg.hyper(), ctx.cfg.num_rows, greedy_options(ctx))?;
    let l = &ctx.layout;
    let train_hash = s.train.content_hash();
    let seed = ctx.cfg.seed.to_string();
    let mut out = create(&l.gslim())?;
    write_model(&mut out, &model, &model_meta(ctx, &train_hash, &seed))?;
    out.flush()?;
    write_tagged(&l.gslim_log(), &ctx.hash, |out| Ok(write_round_log(out, &log)?))?;
    let ids = s.train.item_ids();
    let first: Vec<String> = model.order().iter().take(5).map(|&i| ids[i].to_string()).collect();
    println!(
        "trained {} greedy rows in {:.1}s; loss {:.6e}; first items {}",
        model.num_rows(),
        started.elapsed().as_secs_f64(),
        log.last().map_or(f64::NAN, |r| r.loss),
        first.join(" ")
    );
    Ok(())
}

fn cd_bytes(ctx: &Context, x: &InteractionMatrix) -> f64 {
    let n = x.num_items() as f64;
    let pairs: f64 = (0..x.num_users()).map(|u| (x.row(u).nnz() as f64).powi(2)).sum();
    let model = pairs.min(n * (n - 1.0)) * 16.0;
    matrix_bytes(x) + model + 9.0 * (x.num_users() as f64 + n) * workers(ctx.exec)
}

pub fn train_slim_cd(ctx: &Context) -> Result<(), CliError> {
    let s = load_split(ctx)?;
    check_capacity(ctx, "train-slim-cd", cd_bytes(ctx, &s.train))?;
    let started = Instant::now();
    let opts = CdOptions {
        max_sweeps: ctx.cfg.cd_max_sweeps,
        tol: ctx.cfg.cd_tol,
        execution: ctx.exec,
    };
    let (model, log) = train_coordinate_descent(&s.train, ctx.cfg.cd_hyper(), opts)?;
    let l = &ctx.layout;
    let train_hash = s.train.content_hash();
    let seed = ctx.cfg.seed.to_string();
    let mut out = create(&l.cd())?;
    write_model(&mut out, &model, &model_meta(ctx, &train_hash, &seed))?;
    out.flush()?;
    write_tagged(&l.cd_log(), &ctx.hash, |out| {
        writeln!(out, "sweep,loss")?;
        for (k, loss) in log.sweep_losses.iter().enumerate() {
            writeln!(out, "{k},{loss:e}")?;
        }
        Ok(())
    })?;
    println!(
        "trained coordinate-descent SLIM in {:.1}s: {} non-zeros, {} sweeps max, loss {:.6e}",
        started.elapsed().as_secs_f64(),
        model.nnz(),
        log.column_sweeps.iter().max().copied().unwrap_or(0),
        log.sweep_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn svd_options(method: &str, exec: Execution) -> Result<SvdOptions, CliError> {
    let method = match method {
        "auto" => SvdMethod::Auto,
        "dense" => SvdMethod::Dense,
        "randomized" => SvdMethod::Randomized,
        other => return Err(CliError::Usage(format!("unknown SVD method {other:?}"))),
    };
    Ok(SvdOptions {
        method,
        execution: exec,
        ..Default::default()
    })
}

fn svd_bytes(x: &InteractionMatrix, rank: usize, opts: &SvdOptions) -> f64 {
    let (m, n) = (x.num_users() as f64, x.num_items() as f64);
    let dense = match opts.method {
        SvdMethod::Dense => true,
        SvdMethod::Randomized => false,
        SvdMethod::Auto => m * n <= opts.dense_limit as f64 || (rank + opts.oversampling) as f64 >= m.min(n),
    };
    let w = (rank + opts.oversampling) as f64;
    let work = if dense {
        8.0 * (2.0 * m * n + n * m.min(n))
    } else {
        8.0 * (3.0 * (m + n) * w + w * w)
    };
    matrix_bytes(x) + work
}

pub fn train_svd(ctx: &Context, method: &str) -> Result<(), CliError> {
    let s = load_split(ctx)?;
    let opts = svd_options(method, ctx.exec)?;
    check_capacity(ctx, "train-svd", svd_bytes(&s.train, ctx.cfg.rank, &opts))?;
    let started = Instant::now();
    let lfm = train_pure_svd(&s.train, ctx.cfg.rank, ctx.cfg.seed, opts)?;
    let train_hash = s.train.content_hash();
    let seed = ctx.cfg.seed.to_string();
    let mut out = create(&ctx.layout.svd())?;
    write_lfm_with_meta(&mut out, &lfm, &model_meta(ctx, &train_hash, &seed))?;
    out.flush()?;
    println!(
        "trained PureSVD rank {} in {:.1}s; orthonormality error {:.2e}",
        lfm.rank(),
        started.elapsed().as_secs_f64(),
        lfm.orthonormality_error()
    );
    Ok(())
}

pub fn read_slim(path: &Path, x: &InteractionMatrix, hint: &str) -> Result<SlimModel, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("{} is missing; run {hint} first", path.display())));
    }
    let model = read_model(open(path)?)?;
    if model.num_items() != x.num_items() {
        return Err(CliError::Data(format!(
            "{} has {} items, the ratings have {}",
            path.display(),
            model.num_items(),
            x.num_items()
        )));
    }
    Ok(model)
}

pub fn read_svd(path: &Path, x_train: &InteractionMatrix) -> Result<LfmModel, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("{} is missing; run train-svd first", path.display())));
    }
    let lfm = read_lfm(open(path)?)?;
    if lfm.num_items() != x_train.num_items() || lfm.num_users() != x_train.num_users() {
        return Err(CliError::Data(format!(
            "{} is {}x{} (users x items), the training data {}x{}",
            path.display(),
            lfm.num_users(),
            lfm.num_items(),
            x_train.num_users(),
            x_train.num_items()
        )));
    }
    Ok(lfm)
}

fn last_checkpoint(ctx: &Context) -> usize {
    *ctx.cfg.checkpoints.last().expect("validated non-empty")
}

/// A static questionnaire plus the model ids it came from.
fn static_questionnaire(
    ctx: &Context,
    s: &DatasetSplit,
    name: &str,
    length: usize,
) -> Result<(StaticQuestionnaire, Vec<String>), CliError> {
    let l = &ctx.layout;
    let q = match name {
        "q_gslim" => {
            let model = read_slim(&l.gslim(), &s.train, "train-gslim")?;
            (q_gslim(&model, length)?, vec![file_id(&l.gslim())?])
        }
        "q_greedy" => {
            let model = read_slim(&l.cd(), &s.train, "train-slim-cd")?;
            if model.trainer() != Trainer::CoordinateDescent {
                return Err(CliError::Data(format!("{} is not a coordinate-descent model", l.cd().display())));
            }
            let q = q_greedy(&s.train, &model, model.hyper(), length, ctx.exec)?;
            (q, vec![file_id(&l.cd())?])
        }
        "q_pop" => (q_pop(&s.train).truncated(length), vec![]),
        "q_var" => (q_var(&s.train).truncated(length), vec![]),
        other => {
            return Err(CliError::Usage(format!(
                "unknown questionnaire {other:?} (q_gslim, q_greedy, q_pop, q_var)"
            )))
        }
    };
    Ok(q)
}

pub fn questionnaire(ctx: &Context, methods: &[String], length: Option<usize>) -> Result<(), CliError> {
    let s = load_split(ctx)?;
    let length = length.unwrap_or_else(|| last_checkpoint(ctx));
    for name in methods {
        let (q, _) = static_questionnaire(ctx, &s, name, length)?;
        let path = ctx.layout.questionnaire(name);
        write_tagged(&path, &ctx.hash, |out| Ok(write_questionnaire_csv(out, &q, s.train.item_ids())?))?;
        println!("{name}: {} questions -> {}", q.len(), path.display());
    }
    Ok(())
}

pub const METHODS: [&str; 6] = ["q_gslim", "q_bandit", "r_gain", "q_greedy", "q_pop", "q_var"];

fn eval_config(ctx: &Context, restriction: Restriction) -> EvalConfig {
    EvalConfig {
        checkpoints: ctx.cfg.checkpoints.clone(),
        ns: ctx.cfg.ns.clone(),
        restriction,
        seed: ctx.cfg.seed,
        include_asked_in_relevants: ctx.cfg.include_asked_in_relevants,
        execution: ctx.exec,
    }
}

struct Method {
    questionnaire: Option<Box<dyn Questionnaire>>,
    recommender: Box<dyn Recommender>,
    model_ids: Vec<String>,
}

fn build_method(ctx: &Context, s: &DatasetSplit, name: &str) -> Result<Option<Method>, CliError> {
    let l = &ctx.layout;
    let length = last_checkpoint(ctx);
    let m = match name {
        "r_gain" => return Ok(None),
        "q_bandit" => {
            let lfm = Arc::new(read_svd(&l.svd(), &s.train)?);
            Method {
                questionnaire: Some(Box::new(BanditQuestionnaire::new(lfm.clone(), ctx.cfg.sigma)?)),
                recommender: Box::new(BanditRecommender::new(lfm)),
                model_ids: vec![file_id(&l.svd())?],
            }
        }
        "q_gslim" => {
            let model = Arc::new(read_slim(&l.gslim(), &s.train, "train-gslim")?);
            Method {
                questionnaire: Some(Box::new(q_gslim(&model, length)?)),
                recommender: Box::new(SlimRecommender::new("r_gslim", model)),
                model_ids: vec![file_id(&l.gslim())?],
            }
        }
        "q_greedy" | "q_pop" | "q_var" => {
            // the baselines ask their questions and recommend with full SLIM
            let (q, mut ids) = static_questionnaire(ctx, s, name, length)?;
            let model = Arc::new(read_slim(&l.cd(), &s.train, "train-slim-cd")?);
            if name != "q_greedy" {
                ids.push(file_id(&l.cd())?);
            }
            Method {
                questionnaire: Some(Box::new(q)),
                recommender: Box::new(SlimRecommender::new("r_slim", model)),
                model_ids: ids,
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown method {other:?} (one of {})",
                METHODS.join(", ")
            )))
        }
    };
    Ok(Some(m))
}

pub fn evaluate(ctx: &Context, methods: &[String]) -> Result<(), CliError> {
    for m in methods {
        if !METHODS.contains(&m.as_str()) {
            return Err(CliError::Usage(format!("unknown method {m:?} (one of {})", METHODS.join(", "))));
        }
    }
    let s = load_split(ctx)?;
    let pop = short_head_split(&s.train, ctx.cfg.coverage)?;
    let l = &ctx.layout;
    let mut summary: Vec<(Restriction, String, EvalReport)> = Vec::new();
    for name in methods {
        let method = build_method(ctx, &s, name)?;
        for r in ctx.cfg.restriction.restrictions() {
            let started = Instant::now();
            let cfg = eval_config(ctx, r);
            let mut report = match &method {
                None => baseline_gain_report(&s, &cfg, &pop)?,
                Some(m) => simulate_cold_start(m.questionnaire.as_deref(), m.recommender.as_ref(), &s, &cfg, &pop)?,
            };
            report.meta.model_ids = method.as_ref().map_or_else(Vec::new, |m| m.model_ids.clone());
            report.meta.config_hash = Some(ctx.hash.clone());
            if report.exhausted() {
                log::warn!("{name}: questionnaire ran out for {} users", report.meta.exhausted_users);
            }
            let mut out = create(&l.eval_report(name, r))?;
            write_report_json(&mut out, &report)?;
            out.flush()?;
            write_tagged(&l.eval_users(name, r), &ctx.hash, |out| Ok(write_per_user_csv(out, &report)?))?;
            log::info!("{name} ({}) evaluated in {:.1}s", r.as_str(), started.elapsed().as_secs_f64());
            summary.push((r, name.clone(), report));
        }
    }
    write_tagged(&l.eval_summary(), &ctx.hash, |out| {
        writeln!(out, "restriction,method,checkpoint,metric,n,mean")?;
        for (r, name, report) in &summary {
            for a in &report.aggregates {
                writeln!(out, "{},{name},{},{},{},{}", r.as_str(), a.checkpoint, a.metric.as_str(), a.n, a.mean)?;
            }
        }
        Ok(())
    })?;
    print!("{}", summary_table(&summary, &ctx.cfg.checkpoints, *ctx.cfg.ns.iter().max().unwrap()));
    Ok(())
}

/// Value of `report` at checkpoint `c`; question-free reports hold one
/// value for every checkpoint.
fn value_at(report: &EvalReport, c: usize, metric: Metric, n: usize) -> Option<f64> {
    if report.meta.questionnaire.is_none() {
        report.meta.checkpoints.first().and_then(|&c0| report.mean(c0, metric, n))
    } else {
        report.mean(c, metric, n)
    }
}

fn summary_table(rows: &[(Restriction, String, EvalReport)], checkpoints: &[usize], n: usize) -> String {
    let mut s = String::new();
    let mut restrictions: Vec<Restriction> = rows.iter().map(|r| r.0).collect();
    restrictions.dedup();
    for r in restrictions {
        s.push_str(&format!("NDCG@{n} ({})\n{:<10}", r.as_str(), "method"));
        for c in checkpoints {
            s.push_str(&format!(" {:>8}", format!("q={c}")));
        }
        s.push('\n');
        for (_, name, report) in rows.iter().filter(|x| x.0 == r) {
            s.push_str(&format!("{name:<10}"));
            for &c in checkpoints {
                match value_at(report, c, Metric::Ndcg, n) {
                    Some(v) => s.push_str(&format!(" {v:>8.4}")),
                    None => s.push_str(&format!(" {:>8}", "-")),
                }
            }
            s.push('\n');
        }
    }
    s
}

#[derive(Debug, Serialize)]
struct GridBest {
    lambda_1: f64,
    lambda_f: f64,
}

pub fn grid(ctx: &Context) -> Result<(), CliError> {
    let s = load_split(ctx)?;
    let inner = split_users(&s.train, ctx.cfg.grid_validation_fraction, ctx.cfg.seed.wrapping_add(1))?;
    let pop = short_head_split(&inner.train, ctx.cfg.coverage)?;
    check_capacity(ctx, "grid", greedy_bytes(ctx, &inner.train))?;
    let questions = ctx.cfg.grid_questions;
    let n = ctx.cfg.grid_n;
    let restriction = ctx.cfg.restriction.restrictions()[0];
    let eval_cfg = EvalConfig {
        checkpoints: vec![questions],
        ns: vec![n],
        ..eval_config(ctx, restriction)
    };
    let mut results: Vec<(u32, u32, f64, f64)> = Vec::new();
    for &e1 in &ctx.cfg.grid_lambda_1_exp {
        for &ef in &ctx.cfg.grid_lambda_f_exp {
            let hp = gslim::HyperParams::new(2f64.powi(e1 as i32), 2f64.powi(ef as i32))?;
            let (model, _) = train_greedy(&inner.train, hp, questions.max(1), greedy_options(ctx))?;
            let loss = slim_loss(&inner.train, &model, hp)?;
            let q = q_gslim(&model, questions)?;
            let rec = SlimRecommender::new("r_gslim", Arc::new(model));
            let report = simulate_cold_start(Some(&q), &rec, &inner, &eval_cfg, &pop)?;
            let score = report.mean(questions, Metric::Ndcg, n).unwrap_or(f64::NAN);
            log::info!("grid 2^{e1}, 2^{ef}: NDCG@{n} {score:.4}");
            results.push((e1, ef, score, loss));
        }
    }
    // best score first; ties go to the smaller exponents
    results.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let l = &ctx.layout;
    write_tagged(&l.grid_results(), &ctx.hash, |out| {
        writeln!(out, "rank,lambda1_exp,lambdaF_exp,lambda1,lambdaF,ndcg,loss")?;
        for (k, (e1, ef, score, loss)) in results.iter().enumerate() {
            writeln!(out, "{},{e1},{ef},{},{},{score},{loss:e}", k + 1, 2f64.powi(*e1 as i32), 2f64.powi(*ef as i32))?;
        }
        Ok(())
    })?;
    let (e1, ef, score, _) = results[0];
    let best = GridBest {
        lambda_1: 2f64.powi(e1 as i32),
        lambda_f: 2f64.powi(ef as i32),
    };
    let text = toml::to_string(&best).map_err(|e| CliError::Data(e.to_string()))?;
    write_tagged(&l.grid_best(), &ctx.hash, |out| Ok(out.write_all(text.as_bytes())?))?;
    println!(
        "best lambda1=2^{e1} lambdaF=2^{ef}: NDCG@{n} after {questions} questions {score:.4} ({} points)",
        results.len()
    );
    Ok(())
}

fn parse_metric(s: &str) -> Result<Metric, CliError> {
    Metric::ALL
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| CliError::Usage(format!("unknown metric {s:?} (ndcg, precision, recall)")))
}

pub fn plot(ctx: &Context, metric: &str, n: Option<usize>) -> Result<(), CliError> {
    let metric = parse_metric(metric)?;
    let n = n.unwrap_or_else(|| *ctx.cfg.ns.iter().max().unwrap());
    let dir = ctx.layout.eval_dir();
    let mut reports: BTreeMap<(Restriction, usize), (String, EvalReport)> = BTreeMap::new();
    let entries = std::fs::read_dir(&dir)
        .map_err(|e| CliError::Data(format!("{}: {e}; run evaluate first", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        let Some(name) = path.file_name().and_then(|f| f.to_str()) else { continue };
        let Some(stem) = name.strip_suffix(".json") else { continue };
        let Some((method, _)) = stem.split_once('.') else { continue };
        let report = read_report_json(open(&path)?)?;
        let order = METHODS.iter().position(|m| *m == method).unwrap_or(METHODS.len());
        reports.insert((report.meta.restriction, order), (method.to_string(), report));
    }
    if reports.is_empty() {
        return Err(CliError::Data(format!("no reports in {}", dir.display())));
    }
    let checkpoints: Vec<usize> = {
        let mut c: Vec<usize> = reports
            .values()
            .filter(|(_, r)| r.meta.questionnaire.is_some())
            .flat_map(|(_, r)| r.meta.checkpoints.clone())
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut panels: Vec<Panel> = Vec::new();
    for ((r, _), (method, report)) in &reports {
        let curve = if report.meta.questionnaire.is_none() {
            let points = checkpoints
                .iter()
                .filter_map(|&c| value_at(report, c, metric, n).map(|v| (c, v)))
                .collect();
            Curve { label: method.clone(), points }
        } else {
            Curve::from_report(method.clone(), report, metric, n)
        };
        let title = match r {
            Restriction::All => "All items",
            Restriction::LongTail => "Long-tail items",
        };
        match panels.iter_mut().find(|p| p.title == title) {
            Some(p) => p.curves.push(curve),
            None => panels.push(Panel {
                title: title.into(),
                curves: vec![curve],
            }),
        }
    }
    let base = ctx.layout.plots_dir().join(format!("{}_at_{n}", metric.as_str()));
    let csv = base.with_extension("csv");
    write_tagged(&csv, &ctx.hash, |out| Ok(out.write_all(curves_csv(&panels).as_bytes())?))?;
    let svg = base.with_extension("svg");
    let mut out = create(&svg)?;
    out.write_all(curves_svg(&panels, &format!("{}@{n}", metric.as_str().to_uppercase())).as_bytes())?;
    writeln!(out, "<!-- config_hash={} -->", ctx.hash)?;
    out.flush()?;
    println!("wrote {} and {}", svg.display(), csv.display());
    Ok(())
}

/// Orthonormality tolerance for factor files.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

fn verify_one(path: &Path) -> Result<String, CliError> {
    let mut first = String::new();
    open(path)?.read_line(&mut first)?;
    let hash = embedded_hash(path)?.unwrap_or_else(|| "none".into());
    if first.starts_with("SLIM v1") {
        let model = read_model(open(path)?)?;
        model.validate()?;
        let negative = model.rows().iter().flat_map(|r| r.weights.iter()).any(|(_, w)| w < 0.0);
        let diagonal = model.rows().iter().any(|r| r.weights.iter().any(|(j, _)| j == r.item));
        if negative || diagonal {
            return Err(CliError::Data(format!("{}: negative or diagonal weights", path.display())));
        }
        Ok(format!(
            "SLIM trainer={} n={} rows={} nnz={} config_hash={hash}",
            model.trainer().as_str(),
            model.num_items(),
            model.num_rows(),
            model.nnz()
        ))
    } else if first.starts_with("LFM v1") {
        let lfm = read_lfm(open(path)?)?;
        let err = lfm.orthonormality_error();
        if !(err <= ORTHONORMALITY_TOL) {
            return Err(CliError::Data(format!(
                "{}: orthonormality error {err:.2e} above {ORTHONORMALITY_TOL:e}",
                path.display()
            )));
        }
        Ok(format!(
            "LFM users={} items={} rank={} orthonormality_error={err:.2e} config_hash={hash}",
            lfm.num_users(),
            lfm.num_items(),
            lfm.rank()
        ))
    } else if path.extension().is_some_and(|e| e == "json") && first.trim_start().starts_with('{') {
        let report = read_report_json(open(path)?);
        match report {
            Ok(r) => {
                if r.aggregates.iter().any(|a| !(0.0..=1.0).contains(&a.mean)) {
                    return Err(CliError::Data(format!("{}: metric outside [0, 1]", path.display())));
                }
                Ok(format!("report {} values config_hash={hash}", r.aggregates.len()))
            }
            Err(_) => Ok(format!("json config_hash={hash}")),
        }
    } else {
        Ok(format!("file config_hash={hash}"))
    }
}

pub fn verify(files: &[PathBuf]) -> Result<(), CliError> {
    let mut failed = 0;
    for path in files {
        match verify_one(path) {
            Ok(line) => println!("ok {}: {line}", path.display()),
            Err(e) => {
                println!("FAILED {}: {e}", path.display());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} of {} files failed verification", files.len())));
    }
    Ok(())
}
