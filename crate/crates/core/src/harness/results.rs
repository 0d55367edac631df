use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::write_atomic;
use super::config::RunConfig;
use super::train::EpochLog;
use super::HarnessError;

/// One row of the run registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub epochs: Vec<EpochLog>,
    pub selected_epoch: Option<usize>,
    pub checkpoint_paths: Vec<PathBuf>,
    pub output_paths: Vec<PathBuf>,
    pub wall_clock_secs: f64,
}

/// Append-only JSON-lines registry of [`RunRecord`]s. Each append rewrites
/// the whole file through a temporary file, so readers never see a torn line.
#[derive(Debug, Clone)]
pub struct RunRegistry {
    path: PathBuf,
}

impl RunRegistry {
    pub const FILE_NAME: &'static str = "runs.jsonl";

    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn in_dir(dir: &Path) -> Self {
        Self::new(dir.join(Self::FILE_NAME))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> Result<Vec<RunRecord>, HarnessError> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(HarnessError::io(&self.path, e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| HarnessError::Config(format!("{} line {}: {e}", self.path.display(), i + 1)))
            })
            .collect()
    }

    /// Next free id of the form `<command>-<n>`.
    pub fn next_id(&self, command: &str) -> Result<String, HarnessError> {
        Ok(format!("{command}-{:04}", self.records()?.len()))
    }

    pub fn append(&self, record: &RunRecord) -> Result<(), HarnessError> {
        let existing = self.records()?;
        if existing.iter().any(|r| r.run_id == record.run_id) {
            return Err(HarnessError::Config(format!("run id {} already registered", record.run_id)));
        }
        let mut text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(HarnessError::io(&self.path, e)),
        };
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(&serde_json::to_string(record).expect("record serialises"));
        text.push('\n');
        write_atomic(&self.path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> RunRecord {
        RunRecord {
            run_id: id.into(),
            command: "pretrain".into(),
            seed: 3,
            config: RunConfig::default(),
            epochs: Vec::new(),
            selected_epoch: Some(1),
            checkpoint_paths: vec!["a.ckpt".into()],
            output_paths: Vec::new(),
            wall_clock_secs: 1.5,
        }
    }

    #[test]
    fn appends_and_rejects_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let reg = RunRegistry::in_dir(dir.path());
        assert!(reg.records().unwrap().is_empty());
        assert_eq!(reg.next_id("pretrain").unwrap(), "pretrain-0000");
        reg.append(&record("pretrain-0000")).unwrap();
        reg.append(&record("pretrain-0001")).unwrap();
        assert!(reg.append(&record("pretrain-0000")).is_err());
        let back = reg.records().unwrap();
        assert_eq!(back, vec![record("pretrain-0000"), record("pretrain-0001")]);
    }
}
