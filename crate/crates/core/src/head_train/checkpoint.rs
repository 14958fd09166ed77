use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::model::TassModel;
use crate::error::{Result, TassError};
use crate::featureio::{read_tensor_file, write_tensor_file};
use crate::nn::ParamStore;

pub const INDEX_FILE: &str = "index.json";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointIndex {
    pub version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub answer_vocab: Vec<String>,
    pub params: Vec<ParamEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TassModel,
    pub train: TrainConfig,
    pub answer_vocab: Vec<String>,
}

/// Writes one tensor file per parameter and `index.json` into `dir`.
/// Values are stored at f32.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    model: &TassModel,
    train: &TrainConfig,
    answer_vocab: &[String],
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| TassError::io(dir, e))?;
    let mut params = Vec::with_capacity(model.params.len());
    for (name, t) in model.params.iter() {
        let file = format!("{name}.tass");
        write_tensor_file(t, dir.join(&file))?;
        params.push(ParamEntry {
            name: name.to_string(),
            file,
            shape: t.shape().to_vec(),
        });
    }
    let index = CheckpointIndex {
        version: CHECKPOINT_VERSION,
        model: model.config,
        train: train.clone(),
        answer_vocab: answer_vocab.to_vec(),
        params,
    };
    let path = dir.join(INDEX_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| TassError::io(&path, e))?;
    Ok(path)
}

/// Accepts the checkpoint directory or its `index.json`.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let (dir, index_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(INDEX_FILE))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let text = std::fs::read_to_string(&index_path).map_err(|e| TassError::io(&index_path, e))?;
    let index: CheckpointIndex = serde_json::from_str(&text)?;
    if index.version != CHECKPOINT_VERSION {
        return Err(TassError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            index.version
        )));
    }
    if index.answer_vocab.len() != index.model.vocab {
        return Err(TassError::Checkpoint(format!(
            "index lists {} answers but the model predicts {}",
            index.answer_vocab.len(),
            index.model.vocab
        )));
    }
    let mut store = ParamStore::new();
    for entry in &index.params {
        let t = read_tensor_file(dir.join(&entry.file))?;
        if t.shape() != entry.shape.as_slice() {
            return Err(TassError::Checkpoint(format!(
                "{} has shape {:?} on disk but {:?} in the index",
                entry.name,
                t.shape(),
                entry.shape
            )));
        }
        store.insert(entry.name.clone(), t);
    }
    Ok(Checkpoint {
        model: TassModel::from_params(index.model, store)?,
        train: index.train,
        answer_vocab: index.answer_vocab,
    })
}
