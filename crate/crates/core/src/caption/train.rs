use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{cider_score, CiderConfig};
use crate::nn::tape::Tape;
use crate::nn::{Adam, AdamConfig, ParamStore};

use super::decode::{generate_caption, DecodeStrategy};
use super::model::{CaptionExample, CaptionInput, Captioner, CaptionerConfig};
use super::vocab::Vocab;

/// Owns a model and its optimizer state.
#[derive(Debug, Clone)]
pub struct CaptionTrainer {
    pub model: Captioner,
    adam: Adam,
    rng: ChaCha8Rng,
}

impl CaptionTrainer {
    pub fn new(model: Captioner) -> Self {
        let mut cfg = AdamConfig::with_lr(model.config.learning_rate);
        cfg.clip_norm = (model.config.clip_norm > 0.0).then_some(model.config.clip_norm);
        let rng = ChaCha8Rng::seed_from_u64(model.config.seed.wrapping_add(1));
        CaptionTrainer {
            model,
            adam: Adam::new(cfg),
            rng,
        }
    }

    pub fn steps(&self) -> u64 {
        self.adam.steps()
    }

    /// One teacher-forcing update; returns the loss before the update.
    pub fn step(&mut self, batch: &[&CaptionExample]) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.model.loss(&mut tape, batch, Some(&mut self.rng))?;
        let value = tape.scalar(loss);
        let grads = tape.backward(loss);
        if !value.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                at: format!("step {}", self.adam.steps() + 1),
                detail: format!("loss {value}, gradient norm {}", grads.global_norm()),
            });
        }
        self.adam.update(&mut self.model.params, grads);
        Ok(value)
    }
}

/// A validation image with its reference captions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationItem {
    pub input: CaptionInput,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointScore {
    pub step: u64,
    pub cider: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionTrainingLog {
    /// Loss of every step, in order.
    pub losses: Vec<f64>,
    pub checkpoints: Vec<CheckpointScore>,
    pub selected_step: u64,
}

/// Index of the highest-scoring checkpoint; equal scores go to the later
/// step.
pub fn select_checkpoint<C>(
    checkpoints: &[C],
    step_of: impl Fn(&C) -> u64,
    mut score: impl FnMut(&C) -> Result<f64>,
) -> Result<usize> {
    if checkpoints.is_empty() {
        return Err(Error::EmptyCheckpoints);
    }
    let mut best: Option<(usize, f64, u64)> = None;
    for (i, c) in checkpoints.iter().enumerate() {
        let s = score(c)?;
        let step = step_of(c);
        let better = match best {
            None => true,
            Some((_, bs, bstep)) => s > bs || (s == bs && step > bstep),
        };
        if better {
            best = Some((i, s, step));
        }
    }
    Ok(best.expect("non-empty").0)
}

/// Corpus CIDEr of greedy generations on a validation set.
pub fn validation_cider(model: &Captioner, validation: &[ValidationItem]) -> Result<f64> {
    let candidates: Vec<String> = validation
        .iter()
        .map(|v| generate_caption(model, &v.input, DecodeStrategy::Greedy).map(|g| g.text))
        .collect::<Result<_>>()?;
    let refs: Vec<Vec<String>> = validation.iter().map(|v| v.references.clone()).collect();
    Ok(cider_score(&candidates, &refs, &CiderConfig::default())?.corpus)
}

/// Trains for `steps` minibatch updates. With a validation set, a snapshot
/// is scored every `eval_every` steps (and at the end) and the best one by
/// CIDEr is returned.
pub fn train_captioner(
    config: &CaptionerConfig,
    vocab: Vocab,
    train: &[CaptionExample],
    validation: &[ValidationItem],
    steps: usize,
    eval_every: usize,
) -> Result<(Captioner, CaptionTrainingLog)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("caption training set".into()));
    }
    let mut trainer = CaptionTrainer::new(Captioner::new(config.clone(), vocab)?);
    let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(steps);
    let mut snapshots: Vec<(u64, ParamStore, f64)> = Vec::new();
    for s in 1..=steps {
        if cursor >= order.len() {
            order.shuffle(&mut shuffle);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let batch: Vec<&CaptionExample> = order[cursor..end].iter().map(|&i| &train[i]).collect();
        cursor = end;
        losses.push(trainer.step(&batch)?);
        let at_eval = eval_every > 0 && s % eval_every == 0;
        if !validation.is_empty() && (at_eval || s == steps) && snapshots.last().map(|c| c.0) != Some(s as u64) {
            let cider = validation_cider(&trainer.model, validation)?;
            snapshots.push((s as u64, trainer.model.params.clone(), cider));
        }
    }
    let mut model = trainer.model;
    let mut selected_step = steps as u64;
    if !snapshots.is_empty() {
        let i = select_checkpoint(&snapshots, |c| c.0, |c| Ok(c.2))?;
        selected_step = snapshots[i].0;
        model.params = snapshots[i].1.clone();
    }
    let checkpoints = snapshots
        .iter()
        .map(|(step, _, cider)| CheckpointScore {
            step: *step,
            cider: *cider,
        })
        .collect();
    Ok((
        model,
        CaptionTrainingLog {
            losses,
            checkpoints,
            selected_step,
        },
    ))
}
