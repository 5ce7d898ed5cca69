use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{multi_label_f1, single_label_f1, F1Report};
use crate::nn::tape::{Mat, Tape};
use crate::nn::{Adam, AdamConfig};

use super::encoders::TextEncoder;
use super::model::{ClassifierConfig, EncodedExample, LabelMode, RelationClassifier, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example training loss over the epoch's minibatches.
    pub train_loss: f64,
    pub dev_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (1-based).
    pub best_epoch: usize,
    pub best_dev_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEvaluation {
    pub mode: LabelMode,
    pub f1: F1Report,
}

fn mode_matches(mode: LabelMode, ex: &EncodedExample) -> bool {
    match mode {
        LabelMode::SingleLabel => ex.target.class_index().is_some(),
        LabelMode::MultiLabel => true,
    }
}

/// Trains with Adam on shuffled minibatches and returns the weights of the
/// epoch with the best dev weighted F1 (the train set stands in when the
/// dev set is empty).
pub fn train_classifier(
    config: &ClassifierConfig,
    text: TextEncoder,
    train: &[EncodedExample],
    dev: &[EncodedExample],
) -> Result<(RelationClassifier, TrainingLog)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    let mut model = RelationClassifier::new(config.clone(), text)?;
    for ex in train.iter().chain(dev) {
        model.check_example(ex)?;
        if !mode_matches(config.mode, ex) {
            return Err(Error::config("mode", format!("pair {} has a multi-label target", ex.pair_id)));
        }
    }
    let selection = if dev.is_empty() { train } else { dev };
    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainingLog {
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        best_dev_weighted_f1: f64::NEG_INFINITY,
    };
    let mut best = model.params.clone();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &train[i]).collect();
            let mut tape = Tape::new();
            let (logits, stats) = model.forward_batch(&mut tape, &batch, true, &mut rng);
            let summed = match config.mode {
                LabelMode::SingleLabel => {
                    let targets: Vec<usize> = batch
                        .iter()
                        .map(|ex| ex.target.class_index().expect("checked"))
                        .collect();
                    tape.cross_entropy(logits, &targets)
                }
                LabelMode::MultiLabel => {
                    let t = Mat::from_shape_fn((batch.len(), NUM_CLASSES), |(i, j)| {
                        f64::from(u8::from(batch[i].target.bits()[j]))
                    });
                    tape.bce_logits(logits, t)
                }
            };
            let loss = tape.scale(summed, 1.0 / batch.len() as f64);
            let value = tape.scalar(loss);
            let grads = tape.backward(loss);
            if !value.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    at: format!("epoch {epoch}, batch {b}"),
                    detail: format!(
                        "loss {value}, gradient norm {}, lr {}",
                        grads.global_norm(),
                        config.learning_rate
                    ),
                });
            }
            total += value * batch.len() as f64;
            adam.update(&mut model.params, grads);
            for (bn, s) in &stats {
                bn.update_running(&mut model.params, s);
            }
        }
        let f1 = evaluate_classifier(&model, selection)?.f1.weighted;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            dev_weighted_f1: f1,
        });
        if f1 > log.best_dev_weighted_f1 {
            log.best_dev_weighted_f1 = f1;
            log.best_epoch = epoch;
            best = model.params.clone();
        }
    }
    if config.epochs > 0 {
        model.params = best;
    } else {
        log.best_dev_weighted_f1 = evaluate_classifier(&model, selection)?.f1.weighted;
    }
    Ok((model, log))
}

pub fn evaluate_classifier(model: &RelationClassifier, test: &[EncodedExample]) -> Result<ClassifierEvaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("test set".into()));
    }
    let batch: Vec<&EncodedExample> = test.iter().collect();
    let f1 = match model.config.mode {
        LabelMode::SingleLabel => {
            let gold: Vec<usize> = test
                .iter()
                .map(|ex| {
                    ex.target
                        .class_index()
                        .ok_or_else(|| Error::config("mode", format!("pair {} is multi-label", ex.pair_id)))
                })
                .collect::<Result<_>>()?;
            let pred = model.predict_single(&batch)?;
            single_label_f1(&gold, &pred, NUM_CLASSES)?
        }
        LabelMode::MultiLabel => {
            let gold: Vec<Vec<bool>> = test.iter().map(|ex| ex.target.bits().to_vec()).collect();
            let pred = model.predict_multi(&batch)?;
            multi_label_f1(&gold, &pred)?
        }
    };
    Ok(ClassifierEvaluation {
        mode: model.config.mode,
        f1,
    })
}

/// Train/test sizes for `n` single-label rows, scaled from the published
/// 3400/510 split of 3910 rows.
pub fn split_sizes(n: usize) -> (usize, usize) {
    let test = ((n as f64) * 510.0 / 3910.0).round() as usize;
    (n - test, test)
}
