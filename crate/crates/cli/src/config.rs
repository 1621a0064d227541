//! Run configuration: defaults, a TOML file, `--set key=value` pairs and
//! dedicated flags, applied in that order.

use std::path::{Path, PathBuf};

use gslim::evaluation::Restriction;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionChoice {
    All,
    LongTail,
    Both,
}

impl RestrictionChoice {
    pub fn restrictions(&self) -> Vec<Restriction> {
        match self {
            RestrictionChoice::All => vec![Restriction::All],
            RestrictionChoice::LongTail => vec![Restriction::LongTail],
            RestrictionChoice::Both => vec![Restriction::All, Restriction::LongTail],
        }
    }
}

/// Everything a run depends on. Every field has a default, so an empty file
/// is a valid configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Ratings file read by `ingest` (`userId,itemId,rating[,timestamp]`).
    pub dataset: PathBuf,
    /// Directory for every artifact of the run.
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Greedy SLIM regularisation.
    pub lambda_1: f64,
    pub lambda_f: f64,
    /// Regularisation of the coordinate-descent SLIM model.
    pub cd_lambda_1: f64,
    pub cd_lambda_f: f64,
    pub cd_max_sweeps: usize,
    pub cd_tol: f64,
    /// PureSVD rank.
    pub rank: usize,
    /// Bandit likelihood width.
    pub sigma: f64,
    /// Greedy rows to train, which is also the longest questionnaire.
    pub num_rows: usize,
    pub min_item_ratings: usize,
    pub recompute_every: usize,
    pub checkpoints: Vec<usize>,
    pub ns: Vec<usize>,
    pub restriction: RestrictionChoice,
    pub coverage: f64,
    pub test_fraction: f64,
    pub include_asked_in_relevants: bool,
    /// Training refuses to start when its estimated footprint exceeds this.
    pub memory_limit_mb: u64,
    /// Grid search: exponents `e` of `2^e` for each regulariser.
    pub grid_lambda_1_exp: Vec<u32>,
    pub grid_lambda_f_exp: Vec<u32>,
    /// Share of the training users held out for validation during the grid.
    pub grid_validation_fraction: f64,
    /// Grid score: mean NDCG@`grid_n` after `grid_questions` questions.
    pub grid_questions: usize,
    pub grid_n: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::from("ratings.csv"),
            out_dir: PathBuf::from("run"),
            seed: 42,
            lambda_1: 4096.0,
            lambda_f: 65536.0,
            cd_lambda_1: 1.0,
            cd_lambda_f: 1.0,
            cd_max_sweeps: 50,
            cd_tol: 1e-4,
            rank: 700,
            sigma: 1.0,
            num_rows: 20,
            min_item_ratings: 0,
            recompute_every: 0,
            checkpoints: vec![5, 10, 15, 20],
            ns: vec![5, 10],
            restriction: RestrictionChoice::Both,
            coverage: 0.33,
            test_fraction: 0.1,
            include_asked_in_relevants: false,
            memory_limit_mb: 16 * 1024,
            grid_lambda_1_exp: vec![10, 12, 14],
            grid_lambda_f_exp: vec![14, 16, 18],
            grid_validation_fraction: 0.1,
            grid_questions: 20,
            grid_n: 10,
        }
    }
}

pub const MAX_GRID_EXP: u32 = 19;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `key=value`; values that are not valid TOML become strings.
fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("--set expects key=value, got {s:?}")))?;
    let key = k.trim().to_string();
    let raw = v.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key, value))
}

impl RunConfig {
    /// Builds the configuration from an optional file, `--set` pairs and
    /// flag overrides (already converted to TOML values).
    pub fn resolve(file: Option<&Path>, sets: &[String], flags: Vec<(&str, Value)>) -> Result<RunConfig, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                text.parse::<Table>()
                    .map_err(|e| usage(format!("config {}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        for s in sets {
            let (k, v) = parse_assignment(s)?;
            table.insert(k, v);
        }
        for (k, v) in flags {
            table.insert(k.to_string(), v);
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| usage(format!("configuration: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let ok = |cond: bool, msg: &str| if cond { Ok(()) } else { Err(usage(msg)) };
        for (name, v) in [
            ("lambda_1", self.lambda_1),
            ("lambda_f", self.lambda_f),
            ("cd_lambda_1", self.cd_lambda_1),
            ("cd_lambda_f", self.cd_lambda_f),
        ] {
            ok(v >= 0.0 && v.is_finite(), &format!("{name} must be finite and >= 0"))?;
        }
        ok(self.sigma > 0.0 && self.sigma.is_finite(), "sigma must be positive")?;
        ok(self.rank >= 1, "rank must be >= 1")?;
        ok(self.num_rows >= 1, "num_rows must be >= 1")?;
        ok(self.test_fraction > 0.0 && self.test_fraction < 1.0, "test_fraction must be in (0, 1)")?;
        ok((0.0..=1.0).contains(&self.coverage), "coverage must be in [0, 1]")?;
        ok(
            self.grid_validation_fraction > 0.0 && self.grid_validation_fraction < 1.0,
            "grid_validation_fraction must be in (0, 1)",
        )?;
        ok(!self.checkpoints.is_empty(), "checkpoints must not be empty")?;
        ok(
            self.checkpoints.windows(2).all(|w| w[0] < w[1]),
            "checkpoints must be strictly ascending",
        )?;
        ok(!self.ns.is_empty() && self.ns.iter().all(|&n| n >= 1), "ns must be non-empty and >= 1")?;
        ok(self.cd_max_sweeps >= 1 && self.cd_tol > 0.0, "cd_max_sweeps >= 1 and cd_tol > 0 required")?;
        ok(
            !self.grid_lambda_1_exp.is_empty() && !self.grid_lambda_f_exp.is_empty(),
            "grid exponents must not be empty",
        )?;
        ok(
            self.grid_lambda_1_exp.iter().chain(&self.grid_lambda_f_exp).all(|&e| e <= MAX_GRID_EXP),
            "grid exponents must lie in 0..=19",
        )?;
        ok(self.grid_n >= 1, "grid_n must be >= 1")?;
        Ok(())
    }

    pub fn hyper(&self) -> gslim::HyperParams {
        gslim::HyperParams {
            lambda_1: self.lambda_1,
            lambda_f: self.lambda_f,
        }
    }

    pub fn cd_hyper(&self) -> gslim::HyperParams {
        gslim::HyperParams {
            lambda_1: self.cd_lambda_1,
            lambda_f: self.cd_lambda_f,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Writes `<dir>/<command>.config.toml`, headed by the config hash.
    pub fn write_resolved(&self, dir: &Path, command: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{command}.config.toml"));
        std::fs::write(&path, format!("# config_hash={}\n{}", self.hash(), self.to_toml()))?;
        Ok(path)
    }
}
