use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TensorEntry;

use super::model::{Captioner, CaptionerConfig};
use super::vocab::Vocab;

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "coherence-captioner";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    step: u64,
    config: CaptionerConfig,
    vocab: Vocab,
    tensors: Vec<TensorEntry>,
}

pub fn save_captioner(model: &Captioner, step: u64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tensors = model.params.write_weights(dir.join(WEIGHTS_FILE))?;
    let manifest = Manifest {
        format: FORMAT.into(),
        version: 1,
        step,
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        tensors,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(dir.join(MANIFEST_FILE), bytes)?;
    Ok(())
}

/// Returns the model and the training step it was saved at.
pub fn load_captioner(dir: &Path) -> Result<(Captioner, u64)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("not a captioner checkpoint: {}", manifest.format)));
    }
    let mut vocab = manifest.vocab;
    vocab.rebuild();
    let mut model = Captioner::new(manifest.config, vocab)?;
    model.params.read_weights(dir.join(WEIGHTS_FILE), &manifest.tensors)?;
    Ok((model, manifest.step))
}
