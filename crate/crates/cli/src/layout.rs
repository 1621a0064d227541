//! Artifact paths inside the output directory, and small file helpers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gslim::evaluation::Restriction;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn ratings(&self) -> PathBuf {
        self.root.join("ratings.csv")
    }
    pub fn users(&self) -> PathBuf {
        self.root.join("users.csv")
    }
    pub fn items(&self) -> PathBuf {
        self.root.join("items.csv")
    }
    pub fn ingest(&self) -> PathBuf {
        self.root.join("ingest.json")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }
    pub fn popularity(&self) -> PathBuf {
        self.root.join("popularity.json")
    }
    pub fn gslim(&self) -> PathBuf {
        self.root.join("gslim.slim")
    }
    pub fn gslim_log(&self) -> PathBuf {
        self.root.join("gslim_log.csv")
    }
    pub fn cd(&self) -> PathBuf {
        self.root.join("cd.slim")
    }
    pub fn cd_log(&self) -> PathBuf {
        self.root.join("cd_log.csv")
    }
    pub fn svd(&self) -> PathBuf {
        self.root.join("svd.lfm")
    }
    pub fn questionnaire(&self, name: &str) -> PathBuf {
        self.root.join("questionnaires").join(format!("{name}.csv"))
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn eval_report(&self, method: &str, r: Restriction) -> PathBuf {
        self.eval_dir().join(format!("{method}.{}.json", r.as_str()))
    }
    pub fn eval_users(&self, method: &str, r: Restriction) -> PathBuf {
        self.eval_dir().join(format!("{method}.{}.users.csv", r.as_str()))
    }
    pub fn eval_summary(&self) -> PathBuf {
        self.eval_dir().join("summary.csv")
    }
    pub fn grid_results(&self) -> PathBuf {
        self.root.join("grid").join("results.csv")
    }
    pub fn grid_best(&self) -> PathBuf {
        self.root.join("grid").join("best.toml")
    }
    pub fn plots_dir(&self) -> PathBuf {
        self.root.join("plots")
    }
    pub fn transcript(&self) -> PathBuf {
        self.root.join("transcript.jsonl")
    }
    pub fn feedback(&self) -> PathBuf {
        self.root.join("feedback.csv")
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Opens `path` for writing, creating parent directories.
pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes a file that starts with a `# config_hash=` line.
pub fn write_tagged<F>(path: &Path, hash: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
{
    let mut out = create(path)?;
    writeln!(out, "# config_hash={hash}")?;
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Short content id `<file name>:<sha256 prefix>`.
pub fn file_id(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(format!("{name}:{}", &hex::encode(Sha256::digest(&bytes))[..16]))
}

/// The value of the first `# config_hash=` line, or of a JSON
/// `"config_hash"` field, in a text artifact.
pub fn embedded_hash(path: &Path) -> Result<Option<String>, CliError> {
    for line in open(path)?.lines() {
        let line = line?;
        let t = line.trim();
        if let Some(h) = t.strip_prefix("# config_hash=").or_else(|| t.strip_prefix("<!-- config_hash=")) {
            return Ok(Some(h.trim_end_matches("-->").trim().to_string()));
        }
        if let Some(rest) = t.strip_prefix("\"config_hash\":") {
            return Ok(Some(rest.trim().trim_end_matches(',').trim_matches('"').to_string()));
        }
    }
    Ok(None)
}
