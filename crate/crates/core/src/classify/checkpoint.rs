use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TensorEntry;

use super::encoders::TextEncoder;
use super::model::{ClassifierConfig, RelationClassifier};

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "coherence-classifier";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: ClassifierConfig,
    text_encoder: TextEncoder,
    tensors: Vec<TensorEntry>,
}

/// Writes `weights.bin` (little-endian f64 tensors) and `manifest.json`.
pub fn save_classifier(model: &RelationClassifier, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tensors = model.params.write_weights(dir.join(WEIGHTS_FILE))?;
    let manifest = Manifest {
        format: FORMAT.into(),
        version: 1,
        config: model.config.clone(),
        text_encoder: model.text.clone(),
        tensors,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(dir.join(MANIFEST_FILE), bytes)?;
    Ok(())
}

pub fn load_classifier(dir: &Path) -> Result<RelationClassifier> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("not a classifier checkpoint: {}", manifest.format)));
    }
    let mut text = manifest.text_encoder;
    text.rebuild();
    let mut model = RelationClassifier::new(manifest.config, text)?;
    model.params.read_weights(dir.join(WEIGHTS_FILE), &manifest.tensors)?;
    Ok(model)
}
