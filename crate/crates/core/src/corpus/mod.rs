//! Patient-stay data model, benchmark-layout ingestion, preprocessing and
//! the synthetic paired-EHR generator.

mod io;
mod scaler;
mod synth;
mod types;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use io::{ingest_stays, read_manifest, write_manifest, write_split, MANIFEST_FILE};
pub use scaler::{fit_scaler, fit_scaler_with_floor, preprocess, Scaler, DEFAULT_STD_FLOOR};
pub use synth::{generate_synthetic, SeverityDynamics, SynthConfig, SyntheticDataset, TextVocabulary};
pub use types::{Category, ClinicalNote, PatientStay, StayId, VitalsSeries};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ingestion error for stay {stay}: {reason}")]
    Ingest { stay: String, reason: String },
    #[error("parse error in {file} at row {row}: {reason}")]
    Parse { file: String, row: usize, reason: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("split {0} is not part of this dataset")]
    MissingSplit(Split),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::Validation(format!("unknown split {other:?}"))),
        }
    }
}

pub const DATASET_FORMAT: &str = "mmncl-dataset/1";

/// Root metadata file of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub splits: Vec<Split>,
    pub d_v: usize,
    pub variable_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<SynthConfig>,
}

impl Manifest {
    /// SHA-256 over the canonical TOML rendering, hex encoded.
    pub fn content_hash(&self) -> String {
        let text = toml::to_string(self).expect("manifest serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Ordered record of split reads; lets tests prove the test split is never
/// touched while pretraining or fitting probes.
#[derive(Debug, Default)]
pub struct AccessLog {
    events: Mutex<Vec<Split>>,
}

impl AccessLog {
    fn record(&self, split: Split) {
        self.events.lock().expect("access log poisoned").push(split);
    }

    pub fn events(&self) -> Vec<Split> {
        self.events.lock().expect("access log poisoned").clone()
    }

    pub fn clear(&self) {
        self.events.lock().expect("access log poisoned").clear();
    }
}

/// A dataset whose splits are materialised lazily, so a split that is never
/// requested is never read from disk.
#[derive(Debug)]
pub struct Dataset {
    manifest: Manifest,
    root: Option<PathBuf>,
    splits: BTreeMap<Split, OnceLock<Vec<PatientStay>>>,
    access: AccessLog,
}

impl Dataset {
    pub fn in_memory(manifest: Manifest, splits: BTreeMap<Split, Vec<PatientStay>>) -> Self {
        let splits = splits
            .into_iter()
            .map(|(k, v)| {
                let cell = OnceLock::new();
                let _ = cell.set(v);
                (k, cell)
            })
            .collect();
        Self {
            manifest,
            root: None,
            splits,
            access: AccessLog::default(),
        }
    }

    pub fn open(root: &Path) -> Result<Self, CorpusError> {
        let manifest = read_manifest(root)?;
        if manifest.format != DATASET_FORMAT {
            return Err(CorpusError::Validation(format!(
                "unsupported dataset format {:?} (expected {DATASET_FORMAT})",
                manifest.format
            )));
        }
        let splits = manifest.splits.iter().map(|&s| (s, OnceLock::new())).collect();
        Ok(Self {
            manifest,
            root: Some(root.to_path_buf()),
            splits,
            access: AccessLog::default(),
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn access_log(&self) -> &AccessLog {
        &self.access
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.splits.contains_key(&split)
    }

    pub fn split(&self, split: Split) -> Result<&[PatientStay], CorpusError> {
        let cell = self.splits.get(&split).ok_or(CorpusError::MissingSplit(split))?;
        self.access.record(split);
        if let Some(stays) = cell.get() {
            return Ok(stays);
        }
        let root = self.root.as_ref().ok_or(CorpusError::MissingSplit(split))?;
        let stays = ingest_stays(root, split)?;
        for s in &stays {
            if s.n_vars() != self.manifest.d_v {
                return Err(CorpusError::Ingest {
                    stay: s.stay_id.to_string(),
                    reason: format!("{} variables, manifest declares {}", s.n_vars(), self.manifest.d_v),
                });
            }
        }
        Ok(cell.get_or_init(|| stays))
    }

    /// Writes manifest and every split to `root`.
    pub fn write(&self, root: &Path) -> Result<(), CorpusError> {
        write_manifest(root, &self.manifest)?;
        for &split in self.splits.keys() {
            let stays = self.split(split)?;
            write_split(root, split, stays, &self.manifest.variable_names)?;
        }
        Ok(())
    }
}
