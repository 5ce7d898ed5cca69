use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelmap::SingleLabel;
use crate::nn::layers::{dropout, BatchNorm, Linear, Lstm};
use crate::nn::params::ParamId;
use crate::nn::tape::{self, Mat, Tape, Var};
use crate::nn::ParamStore;
use crate::relation::{CoherenceRelation, RelationSet};

use super::encoders::{ImageEncoderSpec, TextEncoder, TextEncoderSpec, TextFeatures};

/// Number of classifier target classes (the primary relations).
pub const NUM_CLASSES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    SingleLabel,
    MultiLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub mode: LabelMode,
    pub text: TextEncoderSpec,
    pub image: ImageEncoderSpec,
    /// Width of a batch-norm, dense, ReLU projection of the image vector
    /// before fusion. `None` concatenates the raw vector.
    pub image_head: Option<usize>,
    pub hidden_layers: Vec<usize>,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ClassifierConfig {
    /// Settings as published: three 256-unit layers, dropout 0.5, lr 1e-6.
    pub fn paper(mode: LabelMode) -> Self {
        ClassifierConfig {
            mode,
            text: TextEncoderSpec::ngram_default(),
            image: ImageEncoderSpec::None,
            image_head: None,
            hidden_layers: vec![256, 256, 256],
            dropout_p: 0.5,
            learning_rate: 1e-6,
            epochs: 50,
            batch_size: 16,
            seed: 0,
        }
    }

    /// Same network with lr 1e-3 so that small runs converge.
    pub fn desk(mode: LabelMode) -> Self {
        ClassifierConfig {
            learning_rate: 1e-3,
            epochs: 50,
            ..Self::paper(mode)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.text.validate()?;
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden_layers", "widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout_p", "must be in [0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.image_head == Some(0) {
            return Err(Error::config("image_head", "must be positive"));
        }
        if self.image_head.is_some() && self.image.dim() == 0 {
            return Err(Error::config("image_head", "no image encoder configured"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Single(SingleLabel),
    Multi([bool; NUM_CLASSES]),
}

impl Target {
    /// Primary relations of `rs` as a multi-hot target.
    pub fn multi_from_set(rs: &RelationSet) -> Result<Self> {
        let mut bits = [false; NUM_CLASSES];
        for r in rs.primary() {
            bits[r.primary_index().expect("primary")] = true;
        }
        if !bits.contains(&true) {
            return Err(Error::EmptyPrimarySet);
        }
        Ok(Target::Multi(bits))
    }

    pub fn class_index(&self) -> Option<usize> {
        match self {
            Target::Single(l) => Some(l.index()),
            Target::Multi(_) => None,
        }
    }

    pub fn bits(&self) -> [bool; NUM_CLASSES] {
        match *self {
            Target::Single(l) => {
                let mut b = [false; NUM_CLASSES];
                b[l.index()] = true;
                b
            }
            Target::Multi(b) => b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub pair_id: String,
    pub text: TextFeatures,
    /// Empty when the model is text-only.
    pub image_vec: Vec<f64>,
    pub target: Target,
}

#[derive(Debug, Clone)]
struct RecurrentBranch {
    embedding: ParamId,
    lstm: Lstm,
    norm: BatchNorm,
    dense: Linear,
}

#[derive(Debug, Clone)]
struct ImageHead {
    norm: BatchNorm,
    dense: Linear,
}

/// Feed-forward fusion network over concatenated text and image features.
#[derive(Debug, Clone)]
pub struct RelationClassifier {
    pub config: ClassifierConfig,
    pub text: TextEncoder,
    pub params: ParamStore,
    recurrent: Option<RecurrentBranch>,
    image_head: Option<ImageHead>,
    hidden: Vec<Linear>,
    output: Linear,
}

/// Batch-norm statistics gathered during a training forward pass.
pub(crate) type NormStats = Vec<(BatchNorm, (Vec<f64>, Vec<f64>))>;

impl RelationClassifier {
    /// Builds a freshly initialized network; initialization depends only on
    /// the config (including its seed) and the fitted text encoder.
    pub fn new(config: ClassifierConfig, text: TextEncoder) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let recurrent = match &text {
            TextEncoder::Recurrent {
                vocab,
                embed_dim,
                hidden_dim,
                out_dim,
            } => Some(RecurrentBranch {
                embedding: params.add_normal("text.embedding", vocab.len(), *embed_dim, 0.1, &mut rng),
                lstm: Lstm::new(&mut params, "text.lstm", *embed_dim, *hidden_dim, &mut rng),
                norm: BatchNorm::new(&mut params, "text.bn", *hidden_dim),
                dense: Linear::new(&mut params, "text.dense", *hidden_dim, *out_dim, &mut rng),
            }),
            _ => None,
        };
        let image_dim = config.image.dim();
        let image_head = config.image_head.map(|w| ImageHead {
            norm: BatchNorm::new(&mut params, "image.bn", image_dim),
            dense: Linear::new(&mut params, "image.dense", image_dim, w, &mut rng),
        });
        let mut width = text.output_dim() + config.image_head.unwrap_or(image_dim);
        let mut hidden = Vec::with_capacity(config.hidden_layers.len());
        for (i, &w) in config.hidden_layers.iter().enumerate() {
            hidden.push(Linear::new(&mut params, &format!("hidden{i}"), width, w, &mut rng));
            width = w;
        }
        let output = Linear::new(&mut params, "output", width, NUM_CLASSES, &mut rng);
        Ok(RelationClassifier {
            config,
            text,
            params,
            recurrent,
            image_head,
            hidden,
            output,
        })
    }

    pub fn image_dim(&self) -> usize {
        self.config.image.dim()
    }

    pub fn check_example(&self, ex: &EncodedExample) -> Result<()> {
        match (&ex.text, &self.text) {
            (TextFeatures::Tokens(ids), TextEncoder::Recurrent { vocab, .. }) => {
                if ids.is_empty() {
                    return Err(Error::dims("text tokens", 1, 0));
                }
                if let Some(&bad) = ids.iter().find(|&&i| i >= vocab.len()) {
                    return Err(Error::dims("token id bound", vocab.len(), bad));
                }
            }
            (TextFeatures::Dense(v), enc) if !matches!(enc, TextEncoder::Recurrent { .. }) => {
                if v.len() != enc.output_dim() {
                    return Err(Error::dims("text_vec", enc.output_dim(), v.len()));
                }
            }
            (TextFeatures::Tokens(_), _) => {
                return Err(Error::config("text", "token input needs a recurrent encoder"))
            }
            (TextFeatures::Dense(_), _) => {
                return Err(Error::config("text", "recurrent encoder needs token input"))
            }
        }
        if ex.image_vec.len() != self.image_dim() {
            return Err(Error::dims("image_vec", self.image_dim(), ex.image_vec.len()));
        }
        if let Target::Multi(bits) = ex.target {
            if !bits.contains(&true) {
                return Err(Error::EmptyPrimarySet);
            }
        }
        Ok(())
    }

    /// Logits for a batch, one row per example.
    pub(crate) fn forward_batch(
        &self,
        tape: &mut Tape,
        batch: &[&EncodedExample],
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> (Var, NormStats) {
        let mut stats = Vec::new();
        let p = &self.params;
        let text = match &self.recurrent {
            Some(branch) => {
                let table = tape.param(p, branch.embedding);
                let rows: Vec<Var> = batch
                    .iter()
                    .map(|ex| {
                        let TextFeatures::Tokens(ids) = &ex.text else {
                            unreachable!("checked")
                        };
                        let xs = tape.gather(table, ids);
                        branch.lstm.last_hidden(tape, p, xs)
                    })
                    .collect();
                let h = tape.concat_rows(&rows);
                let (h, s) = branch.norm.forward(tape, p, h, train);
                if let Some(s) = s {
                    stats.push((branch.norm.clone(), s));
                }
                let h = branch.dense.forward(tape, p, h);
                tape.tanh(h)
            }
            None => {
                let dim = self.text.output_dim();
                let m = Mat::from_shape_fn((batch.len(), dim), |(i, j)| match &batch[i].text {
                    TextFeatures::Dense(v) => v[j],
                    TextFeatures::Tokens(_) => unreachable!("checked"),
                });
                tape.constant(m)
            }
        };
        let mut parts = vec![text];
        let image_dim = self.image_dim();
        if image_dim > 0 {
            let m = Mat::from_shape_fn((batch.len(), image_dim), |(i, j)| batch[i].image_vec[j]);
            let mut img = tape.constant(m);
            if let Some(head) = &self.image_head {
                let (h, s) = head.norm.forward(tape, p, img, train);
                if let Some(s) = s {
                    stats.push((head.norm.clone(), s));
                }
                let h = head.dense.forward(tape, p, h);
                img = tape.relu(h);
            }
            parts.push(img);
        }
        let mut x = if parts.len() == 1 {
            parts[0]
        } else {
            tape.concat_cols(&parts)
        };
        let last = self.hidden.len().saturating_sub(1);
        for (i, layer) in self.hidden.iter().enumerate() {
            x = layer.forward(tape, p, x);
            // The final hidden layer stays linear.
            if i < last {
                x = tape.relu(x);
            }
            if train {
                x = dropout(tape, x, self.config.dropout_p, rng);
            }
        }
        (self.output.forward(tape, p, x), stats)
    }

    /// Class scores in evaluation mode: softmax rows for single-label,
    /// independent sigmoids for multi-label.
    pub fn scores(&self, batch: &[&EncodedExample]) -> Result<Vec<Vec<f64>>> {
        for ex in batch {
            self.check_example(ex)?;
        }
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (logits, _) = self.forward_batch(&mut tape, batch, false, &mut rng);
        let logits = tape.value(logits);
        let probs = match self.config.mode {
            LabelMode::SingleLabel => tape::softmax_rows(logits),
            LabelMode::MultiLabel => logits.mapv(tape::sigmoid),
        };
        Ok(probs.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Predicted class per example (argmax, ties to the lowest index).
    pub fn predict_single(&self, batch: &[&EncodedExample]) -> Result<Vec<usize>> {
        Ok(self
            .scores(batch)?
            .iter()
            .map(|s| crate::evaluate::argmax(s))
            .collect())
    }

    /// Labels whose sigmoid score is at least 0.5.
    pub fn predict_multi(&self, batch: &[&EncodedExample]) -> Result<Vec<Vec<bool>>> {
        Ok(self
            .scores(batch)?
            .iter()
            .map(|s| s.iter().map(|&p| p >= 0.5).collect())
            .collect())
    }
}

/// Scores for one example.
pub fn classify_forward(model: &RelationClassifier, example: &EncodedExample) -> Result<Vec<f64>> {
    Ok(model.scores(&[example])?.remove(0))
}

/// Target relation for a class index.
pub fn class_relation(index: usize) -> CoherenceRelation {
    CoherenceRelation::PRIMARY[index]
}
