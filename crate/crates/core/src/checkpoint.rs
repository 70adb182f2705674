//! Trained parameters on disk: `checkpoint.json` (names, shapes, offsets,
//! configuration) and `weights.f32`, one little-endian `f32` blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedder::{EmbedderParams, Hidden};
use crate::error::{Error, Result};
use crate::fuzzy::FuzzyConfig;
use crate::tensor::Tensor;
use crate::trainer::{Model, TrainConfig};

pub const INDEX_FILE: &str = "checkpoint.json";
pub const BLOB_FILE: &str = "weights.f32";

/// A model at `f32` precision plus the settings it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub fuzzy: FuzzyConfig,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    epoch: usize,
    fuzzy: FuzzyConfig,
    config: TrainConfig,
    blob: String,
    tensors: Vec<Entry>,
}

impl Checkpoint {
    /// Rounds `model` to the stored precision, so evaluating the returned
    /// checkpoint and a reloaded copy gives identical results.
    pub fn new(model: &Model, fuzzy: FuzzyConfig, config: TrainConfig, epoch: usize) -> Self {
        let mut model = model.round_f32();
        model.embedder.train_hidden = model.embedder.hidden.is_some();
        model.embedder.train_projection = true;
        Checkpoint {
            model,
            fuzzy,
            config,
            epoch,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut blob = Vec::new();
        let mut tensors = Vec::new();
        for (name, t) in self.model.named_tensors() {
            tensors.push(Entry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset: blob.len() / 4,
            });
            blob.extend(t.data().iter().flat_map(|&x| (x as f32).to_le_bytes()));
        }
        let index = Index {
            epoch: self.epoch,
            fuzzy: self.fuzzy,
            config: self.config.clone(),
            blob: BLOB_FILE.into(),
            tensors,
        };
        let blob_path = dir.join(BLOB_FILE);
        fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
        let index_path = dir.join(INDEX_FILE);
        let text = serde_json::to_string_pretty(&index).expect("index serializes");
        fs::write(&index_path, text).map_err(|e| Error::io(&index_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: Index = serde_json::from_str(&text).map_err(|e| Error::json(&index_path, e))?;
        let blob_path = dir.join(&index.blob);
        let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Data(format!("{}: truncated weight blob", blob_path.display())));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();

        let take = |name: &str| -> Result<Option<Tensor>> {
            let Some(e) = index.tensors.iter().find(|e| e.name == name) else {
                return Ok(None);
            };
            let len: usize = e.shape.iter().product();
            let data = values
                .get(e.offset..e.offset + len)
                .ok_or_else(|| Error::Data(format!("tensor `{name}` runs past the end of the weight blob")))?;
            Ok(Some(Tensor::new(e.shape.clone(), data.to_vec())?))
        };
        let projection = take("projection")?.ok_or_else(|| Error::Data("checkpoint has no projection".into()))?;
        let hidden = match (take("hidden.weight")?, take("hidden.bias")?) {
            (Some(weight), Some(bias)) => Some(Hidden { weight, bias }),
            (None, None) => None,
            _ => return Err(Error::Data("checkpoint has half a hidden layer".into())),
        };
        let macro_attrs = take("macro_attributes")?;
        let input_mean = take("input_mean")?;
        let mut embedder = EmbedderParams::linear(projection)?;
        embedder.train_hidden = hidden.is_some();
        embedder.hidden = hidden;
        Ok(Checkpoint {
            model: Model {
                embedder,
                macro_attrs,
                input_mean,
            },
            fuzzy: index.fuzzy,
            config: index.config,
            epoch: index.epoch,
        })
    }
}
