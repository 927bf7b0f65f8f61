//! Checkpoint files.
//!
//! Layout: the line `QUERYSAT-CHECKPOINT <version>`, one line of JSON header
//! (configs, trainer position, and a tensor table of names, shapes, dtype
//! and byte offsets), then the tensor data as little-endian `f32`.

use std::fs;
use std::path::Path;

use querysat_core::model::{Model, ModelConfig, ModelError};
use querysat_core::nn::ParamStore;
use querysat_core::optim::AdaBelief;
use querysat_core::tensor::Matrix;
use querysat_core::train::{TrainConfig, TrainerState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &str = "QUERYSAT-CHECKPOINT";
pub const VERSION: u32 = 1;
const DTYPE: &str = "f32le";
const M_PREFIX: &str = "adabelief.m.";
const S_PREFIX: &str = "adabelief.s.";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (missing `{MAGIC}` line)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {VERSION})")]
    Version { found: String },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint data is truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("tensor table is inconsistent: {0}")]
    TensorTable(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    /// Byte offset into the data section.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    #[serde(default)]
    train: Option<TrainConfig>,
    iteration: u64,
    #[serde(default)]
    optimizer_step: Option<u64>,
    #[serde(default)]
    trainer: Option<TrainerState>,
    tensors: Vec<TensorEntry>,
}

/// A model plus, for training checkpoints, everything needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub train: Option<TrainConfig>,
    pub iteration: u64,
    pub optimizer: Option<AdaBelief>,
    pub trainer: Option<TrainerState>,
}

impl Checkpoint {
    pub fn model_only(model: Model) -> Self {
        Checkpoint {
            model,
            train: None,
            iteration: 0,
            optimizer: None,
            trainer: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors: Vec<(String, &Matrix)> = self.model.params().iter().map(|p| (p.name.clone(), &p.value)).collect();
        if let Some(opt) = &self.optimizer {
            for (p, m) in self.model.params().iter().zip(&opt.m) {
                tensors.push((format!("{M_PREFIX}{}", p.name), m));
            }
            for (p, s) in self.model.params().iter().zip(&opt.s) {
                tensors.push((format!("{S_PREFIX}{}", p.name), s));
            }
        }
        let mut data = Vec::new();
        let mut table = Vec::with_capacity(tensors.len());
        for (name, m) in tensors {
            table.push(TensorEntry {
                name,
                rows: m.rows(),
                cols: m.cols(),
                dtype: DTYPE.to_string(),
                offset: data.len(),
            });
            for v in m.data() {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            model: *self.model.config(),
            train: self.train,
            iteration: self.iteration,
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            trainer: self.trainer.clone(),
            tensors: table,
        };
        let mut out = format!("{MAGIC} {VERSION}\n").into_bytes();
        out.extend(serde_json::to_vec(&header).expect("header serializes"));
        out.push(b'\n');
        out.extend(data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let (first, rest) = split_line(bytes).ok_or(CheckpointError::BadMagic)?;
        let first = std::str::from_utf8(first).map_err(|_| CheckpointError::BadMagic)?;
        let version = first.strip_prefix(MAGIC).ok_or(CheckpointError::BadMagic)?.trim();
        if version != VERSION.to_string() {
            return Err(CheckpointError::Version { found: version.to_string() });
        }
        let (header, data) = split_line(rest).ok_or_else(|| CheckpointError::Header("missing header line".into()))?;
        let header: Header = serde_json::from_slice(header).map_err(|e| CheckpointError::Header(e.to_string()))?;

        let mut expected_offset = 0;
        let mut read = |entry: &TensorEntry| -> Result<Matrix, CheckpointError> {
            if entry.dtype != DTYPE {
                return Err(CheckpointError::TensorTable(format!("{} has dtype {}", entry.name, entry.dtype)));
            }
            if entry.offset != expected_offset {
                return Err(CheckpointError::TensorTable(format!(
                    "{} starts at byte {}, expected {}",
                    entry.name, entry.offset, expected_offset
                )));
            }
            let len = entry.rows * entry.cols * 4;
            expected_offset += len;
            let raw = data.get(entry.offset..entry.offset + len).ok_or(CheckpointError::Truncated {
                expected: entry.offset + len,
                found: data.len(),
            })?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            Ok(Matrix::from_vec(entry.rows, entry.cols, values))
        };

        let mut params = ParamStore::new();
        let mut m = Vec::new();
        let mut s = Vec::new();
        for entry in &header.tensors {
            let value = read(entry)?;
            if entry.name.starts_with(M_PREFIX) {
                m.push(value);
            } else if entry.name.starts_with(S_PREFIX) {
                s.push(value);
            } else {
                params.add(entry.name.clone(), value);
            }
        }
        if expected_offset != data.len() {
            return Err(CheckpointError::Truncated {
                expected: expected_offset,
                found: data.len(),
            });
        }
        let model = Model::from_params(header.model, params)?;
        let optimizer = match header.optimizer_step {
            None => None,
            Some(step) => {
                let shapes_match = |moments: &[Matrix]| {
                    moments.len() == model.params().len() && moments.iter().zip(model.params().iter()).all(|(a, p)| a.shape() == p.value.shape())
                };
                if !shapes_match(&m) || !shapes_match(&s) {
                    return Err(CheckpointError::TensorTable("optimizer moments do not match the parameters".into()));
                }
                let config = header.train.map(|t| t.optimizer()).unwrap_or_default();
                Some(AdaBelief { config, step, m, s })
            }
        };
        Ok(Checkpoint {
            model,
            train: header.train,
            iteration: header.iteration,
            optimizer,
            trainer: header.trainer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let pos = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..pos], &bytes[pos + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use querysat_core::model::Architecture;

    fn model() -> Model {
        Model::new(ModelConfig::desk(Architecture::NeuroCoreQuery), 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = model();
        let opt = AdaBelief::new(Default::default(), model.params());
        let ck = Checkpoint {
            model,
            train: Some(TrainConfig::default()),
            iteration: 7,
            optimizer: Some(opt),
            trainer: None,
        };
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }

    #[test]
    fn header_damage_is_reported_without_a_partial_load() {
        let bytes = Checkpoint::model_only(model()).to_bytes();
        let mut wrong_version = bytes.clone();
        wrong_version[MAGIC.len() + 1] = b'9';
        assert!(matches!(Checkpoint::from_bytes(&wrong_version), Err(CheckpointError::Version { .. })));
        assert!(matches!(Checkpoint::from_bytes(b"hello\n"), Err(CheckpointError::BadMagic)));
        let mut broken = bytes.clone();
        let at = MAGIC.len() + 4;
        broken[at] = b'#';
        assert!(matches!(Checkpoint::from_bytes(&broken), Err(CheckpointError::Header(_))));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated { .. })
        ));
    }

    #[test]
    fn shape_table_must_match_the_config() {
        let ck = Checkpoint::model_only(model());
        let text = ck.to_bytes();
        let header_end = text.iter().skip(MAGIC.len() + 3).position(|&b| b == b'\n').unwrap() + MAGIC.len() + 3;
        let header = std::str::from_utf8(&text[MAGIC.len() + 3..header_end]).unwrap();
        let edited = header.replace("\"feature_maps\":32", "\"feature_maps\":16");
        let mut bytes = text[..MAGIC.len() + 3].to_vec();
        bytes.extend(edited.as_bytes());
        bytes.extend(&text[header_end..]);
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::Model(ModelError::ParameterMismatch(_)))
        ));
    }
}
