//! The `gslim` command line: a file-based pipeline from a ratings file to
//! trained models, questionnaires, evaluation reports and plots, plus the
//! onboarding server.
//!
//! Every command resolves one [`RunConfig`] (defaults, then `--config`, then
//! `--set key=value`, then dedicated flags), writes it next to its artifacts
//! and stamps each artifact with the config hash.
//!
//! Exit codes: 0 success, 1 usage or argument error, 2 data or format
//! error, 3 capacity exceeded.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gslim::Execution;
use toml::Value;

mod config;
mod layout;
mod pipeline;
mod server;

pub use config::{RestrictionChoice, RunConfig};
pub use layout::{embedded_hash, Layout};
pub use pipeline::{load_split, read_ratings};
pub use server::{build_engine, EngineArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Capacity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Capacity(_) => 3,
        }
    }
}

impl From<gslim::Error> for CliError {
    fn from(e: gslim::Error) -> Self {
        match e {
            gslim::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            gslim::Error::Capacity(_) => CliError::Capacity(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<gslim_service::ServiceError> for CliError {
    fn from(e: gslim_service::ServiceError) -> Self {
        use gslim_service::ServiceError as S;
        match e {
            S::Core(core) => core.into(),
            S::BadRequest(_) | S::Validation(_) | S::Setup(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gslim", version, about = "Greedy SLIM questionnaires for cold-start users")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

/// Configuration sources shared by every subcommand.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Any configuration key, e.g. `--set cd_tol=1e-5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long = "out", global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long = "lambda1", global = true)]
    pub lambda_1: Option<f64>,
    #[arg(long = "lambda-f", global = true)]
    pub lambda_f: Option<f64>,
    /// PureSVD rank.
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub num_rows: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub checkpoints: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// all, long_tail or both.
    #[arg(long, global = true)]
    pub restriction: Option<String>,
    /// Share of ratings covered by the short head.
    #[arg(long, global = true)]
    pub coverage: Option<f64>,
    #[arg(long, global = true)]
    pub test_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub include_asked_in_relevants: bool,
    #[arg(long, global = true)]
    pub memory_limit_mb: Option<u64>,
}

impl Overrides {
    fn flag_values(&self) -> Vec<(&'static str, Value)> {
        let mut v: Vec<(&'static str, Value)> = Vec::new();
        let path = |p: &PathBuf| Value::String(p.to_string_lossy().into_owned());
        let ints = |xs: &[usize]| Value::Array(xs.iter().map(|&x| Value::Integer(x as i64)).collect());
        if let Some(p) = &self.dataset {
            v.push(("dataset", path(p)));
        }
        if let Some(p) = &self.out_dir {
            v.push(("out_dir", path(p)));
        }
        if let Some(s) = self.seed {
            v.push(("seed", Value::Integer(s as i64)));
        }
        for (k, x) in [
            ("lambda_1", self.lambda_1),
            ("lambda_f", self.lambda_f),
            ("sigma", self.sigma),
            ("coverage", self.coverage),
            ("test_fraction", self.test_fraction),
        ] {
            if let Some(x) = x {
                v.push((k, Value::Float(x)));
            }
        }
        for (k, x) in [("rank", self.rank), ("num_rows", self.num_rows)] {
            if let Some(x) = x {
                v.push((k, Value::Integer(x as i64)));
            }
        }
        if let Some(m) = self.memory_limit_mb {
            v.push(("memory_limit_mb", Value::Integer(m as i64)));
        }
        if let Some(c) = &self.checkpoints {
            v.push(("checkpoints", ints(c)));
        }
        if let Some(n) = &self.ns {
            v.push(("ns", ints(n)));
        }
        if let Some(r) = &self.restriction {
            v.push(("restriction", Value::String(r.replace('-', "_"))));
        }
        if self.include_asked_in_relevants {
            v.push(("include_asked_in_relevants", Value::Boolean(true)));
        }
        v
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        RunConfig::resolve(self.config.as_deref(), &self.sets, self.flag_values())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the ratings file into the canonical ratings and id maps.
    Ingest,
    /// Split users into training and test sets.
    Split,
    /// Train greedy SLIM rows on the training users.
    TrainGslim,
    /// Train full SLIM by coordinate descent on the training users.
    TrainSlimCd,
    /// Train PureSVD factors on the training users.
    TrainSvd {
        /// auto, dense or randomized.
        #[arg(long, default_value = "auto")]
        method: String,
    },
    /// Write static questionnaires as CSV.
    Questionnaire {
        /// Any of q_gslim, q_greedy, q_pop, q_var.
        #[arg(long, value_delimiter = ',', default_value = "q_gslim,q_pop,q_var")]
        methods: Vec<String>,
        /// Defaults to the last checkpoint.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Run the offline cold-start protocol on the test users.
    Evaluate {
        /// Any of q_gslim, q_bandit, r_gain, q_greedy, q_pop, q_var.
        #[arg(long, value_delimiter = ',', default_value = "q_gslim,q_bandit,r_gain")]
        methods: Vec<String>,
    },
    /// Grid search over regularisation exponents on a validation split of the training users.
    Grid,
    /// NDCG-versus-questions curves from the evaluation reports.
    Plot {
        /// ndcg, precision or recall.
        #[arg(long, default_value = "ndcg")]
        metric: String,
        /// List length; defaults to the largest configured one.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Check model files and report the config hash they carry.
    Verify {
        /// Model, report or other artifact files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Serve the onboarding API and, optionally, the web bundle.
    Serve(server::ServeArgs),
    /// Summarise a feedback log (and optionally a transcript).
    FeedbackReport {
        #[arg(long)]
        feedback: Option<PathBuf>,
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Also write the summaries as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Re-run recorded sessions and compare them with the transcript.
    Replay(server::ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Split => "split",
            Command::TrainGslim => "train-gslim",
            Command::TrainSlimCd => "train-slim-cd",
            Command::TrainSvd { .. } => "train-svd",
            Command::Questionnaire { .. } => "questionnaire",
            Command::Evaluate { .. } => "evaluate",
            Command::Grid => "grid",
            Command::Plot { .. } => "plot",
            Command::Verify { .. } => "verify",
            Command::Serve(_) => "serve",
            Command::FeedbackReport { .. } => "feedback-report",
            Command::Replay(_) => "replay",
        }
    }

    fn writes_artifacts(&self) -> bool {
        !matches!(self, Command::Verify { .. } | Command::FeedbackReport { .. } | Command::Replay(_))
    }
}

/// Resolved configuration plus the process-wide execution mode.
pub struct Context {
    pub cfg: RunConfig,
    pub hash: String,
    pub layout: Layout,
    pub exec: Execution,
}

impl Context {
    pub fn new(cfg: RunConfig, exec: Execution) -> Self {
        let hash = cfg.hash();
        let layout = Layout::new(&cfg.out_dir);
        Context { cfg, hash, layout, exec }
    }
}

fn execution(threads: Option<usize>) -> Result<Execution, CliError> {
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be >= 1".into())),
        Some(1) => Ok(Execution::Sequential),
        Some(t) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                log::debug!("thread pool already configured: {e}");
            }
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::default()),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.overrides.resolve()?;
    let exec = execution(cli.overrides.threads)?;
    let ctx = Context::new(cfg, exec);
    if cli.command.writes_artifacts() {
        ctx.cfg.write_resolved(&ctx.layout.root, cli.command.name())?;
    }
    log::info!("{} (config_hash={})", cli.command.name(), &ctx.hash[..12]);
    match cli.command {
        Command::Ingest => pipeline::ingest(&ctx),
        Command::Split => pipeline::split(&ctx),
        Command::TrainGslim => pipeline::train_gslim(&ctx),
        Command::TrainSlimCd => pipeline::train_slim_cd(&ctx),
        Command::TrainSvd { method } => pipeline::train_svd(&ctx, &method),
        Command::Questionnaire { methods, length } => pipeline::questionnaire(&ctx, &methods, length),
        Command::Evaluate { methods } => pipeline::evaluate(&ctx, &methods),
        Command::Grid => pipeline::grid(&ctx),
        Command::Plot { metric, n } => pipeline::plot(&ctx, &metric, n),
        Command::Verify { files } => pipeline::verify(&files),
        Command::Serve(args) => server::serve(&ctx, &args),
        Command::FeedbackReport { feedback, transcript, json } => {
            server::feedback_report(&ctx, feedback, transcript, json)
        }
        Command::Replay(args) => server::replay(&ctx, &args),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
