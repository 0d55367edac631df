use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::HarnessError;
use crate::corpus::Scaler;
use crate::encoders::ContrastiveModel;
use crate::nn::Parameters;
use crate::rng::rng_for;

const MAGIC: &[u8; 8] = b"MMNCLCKP";
pub const CHECKPOINT_FORMAT: &str = "mmncl-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    config: RunConfig,
    scaler: Scaler,
    temperature: f64,
    manifest_hash: String,
    tensors: Vec<TensorEntry>,
}

/// Trained parameters plus everything needed to use them: the producing
/// config, the train-split scaler and the hash of the data manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub scaler: Scaler,
    pub model: ContrastiveModel,
    pub manifest_hash: String,
}

impl Checkpoint {
    /// Layout: magic, little-endian `u64` header length, JSON header, then
    /// every tensor as little-endian `f64` in header order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let views = self.model.param_views();
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            temperature: self.model.temperature.value(),
            manifest_hash: self.manifest_hash.clone(),
            tensors: views
                .iter()
                .map(|v| TensorEntry {
                    name: v.name.clone(),
                    shape: v.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.model.n_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &views {
            for x in v.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HarnessError> {
        let corrupt = |m: &str| HarnessError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + len).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| HarnessError::Checkpoint(format!("bad header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(HarnessError::Checkpoint(format!("unsupported format {:?}", header.format)));
        }
        // Build a model of the right shape, then overwrite every tensor.
        let mut model = ContrastiveModel::init(&header.config.encoder, &mut rng_for(0, &[]))?;
        let expected: Vec<TensorEntry> = model
            .param_views()
            .into_iter()
            .map(|v| TensorEntry {
                name: v.name,
                shape: v.shape,
            })
            .collect();
        if expected != header.tensors {
            return Err(corrupt("tensor list does not match the stored encoder config"));
        }
        let mut data = &bytes[16 + len..];
        for slot in model.param_slices_mut() {
            let need = slot.len() * 8;
            if data.len() < need {
                return Err(corrupt("truncated tensor data"));
            }
            for (x, chunk) in slot.iter_mut().zip(data[..need].chunks_exact(8)) {
                *x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
            data = &data[need..];
        }
        if !data.is_empty() {
            return Err(corrupt("trailing bytes after tensor data"));
        }
        Ok(Self {
            config: header.config,
            scaler: header.scaler,
            model,
            manifest_hash: header.manifest_hash,
        })
    }

    /// Writes atomically via a temporary file in the target directory.
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialised checkpoint, hex encoded.
    pub fn content_hash(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}
