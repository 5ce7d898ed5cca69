//! Pre-LN Transformer encoder-decoder conditioned on a relation label.
//!
//! Encoder sequence: projected image vector, projected object vectors, label
//! embedding. Decoder input: the label token followed by the target prefix.
//! A batch is stacked into one matrix per side; block masks keep examples
//! from attending to each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{causal_mask, dropout, sinusoidal_positions, LayerNorm, Linear, MultiHeadAttention};
use crate::nn::params::ParamId;
use crate::nn::tape::{Gradients, Mat, Tape, Var};
use crate::nn::ParamStore;

use super::vocab::{ConditionLabel, Vocab};

const MASKED: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionerConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    /// Maximum generated subtokens, EOS included.
    pub max_len: usize,
    pub image_dim: usize,
    pub object_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub merges: usize,
    pub seed: u64,
}

impl CaptionerConfig {
    /// Six encoder and decoder layers, eight heads, 512 dimensions.
    pub fn paper() -> Self {
        CaptionerConfig {
            enc_layers: 6,
            dec_layers: 6,
            heads: 8,
            model_dim: 512,
            ff_dim: 2048,
            max_len: 40,
            image_dim: 64,
            object_dim: 512,
            dropout: 0.1,
            learning_rate: 1e-4,
            clip_norm: 1.0,
            batch_size: 64,
            merges: 8000,
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        CaptionerConfig {
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            model_dim: 128,
            ff_dim: 256,
            dropout: 0.0,
            learning_rate: 1e-3,
            batch_size: 32,
            merges: 200,
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            _ => Err(Error::config("preset", format!("unknown preset {name:?}; expected paper or desk"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.model_dim == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::config("model_dim", "must be a positive multiple of heads"));
        }
        if self.ff_dim == 0 || self.max_len == 0 || self.batch_size == 0 {
            return Err(Error::config("ff_dim/max_len/batch_size", "must be positive"));
        }
        if self.image_dim == 0 || self.object_dim == 0 {
            return Err(Error::config("image_dim/object_dim", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must be in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        Ok(())
    }
}

/// Conditioning inputs for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionInput {
    pub image_vec: Vec<f64>,
    pub object_vecs: Vec<Vec<f64>>,
    pub label: ConditionLabel,
}

/// One training pair; `target_ids` ends with EOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionExample {
    pub input: CaptionInput,
    pub target_ids: Vec<usize>,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    norm1: LayerNorm,
    self_attn: MultiHeadAttention,
    norm2: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm3: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone)]
pub struct Captioner {
    pub config: CaptionerConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    image_proj: Linear,
    object_proj: Linear,
    label_table: ParamId,
    encoder: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    token_table: ParamId,
    decoder: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    output: Linear,
}

/// Encoder output for a batch; `spans[i]` is the row range of example `i`.
pub(crate) struct Memory {
    pub var: Var,
    pub spans: Vec<(usize, usize)>,
}

fn block_mask(rows: &[(usize, usize)], cols: &[(usize, usize)], causal: bool) -> Mat {
    let n = rows.last().map_or(0, |&(s, l)| s + l);
    let m = cols.last().map_or(0, |&(s, l)| s + l);
    let mut mask = Mat::from_elem((n, m), MASKED);
    for (&(rs, rl), &(cs, cl)) in rows.iter().zip(cols) {
        let block = if causal {
            causal_mask(rl)
        } else {
            Mat::zeros((rl, cl))
        };
        mask.slice_mut(ndarray::s![rs..rs + rl, cs..cs + cl]).assign(&block);
    }
    mask
}

fn spans_of(lengths: impl IntoIterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut start = 0;
    lengths
        .into_iter()
        .map(|l| {
            let s = (start, l);
            start += l;
            s
        })
        .collect()
}

impl Captioner {
    pub fn new(config: CaptionerConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParamStore::new();
        let d = config.model_dim;
        let image_proj = Linear::new(&mut p, "enc.image_proj", config.image_dim, d, &mut rng);
        let object_proj = Linear::new(&mut p, "enc.object_proj", config.object_dim, d, &mut rng);
        let label_table = p.add_normal("enc.label_embedding", ConditionLabel::COUNT, d, 1.0, &mut rng);
        let encoder = (0..config.enc_layers)
            .map(|i| {
                let n = format!("enc.layer{i}");
                EncoderLayer {
                    norm1: LayerNorm::new(&mut p, &format!("{n}.norm1"), d),
                    attn: MultiHeadAttention::new(&mut p, &format!("{n}.attn"), d, config.heads, &mut rng),
                    norm2: LayerNorm::new(&mut p, &format!("{n}.norm2"), d),
                    ff1: Linear::new(&mut p, &format!("{n}.ff1"), d, config.ff_dim, &mut rng),
                    ff2: Linear::new(&mut p, &format!("{n}.ff2"), config.ff_dim, d, &mut rng),
                }
            })
            .collect();
        let enc_norm = LayerNorm::new(&mut p, "enc.norm", d);
        let token_table = p.add_normal("dec.token_embedding", vocab.len(), d, 1.0, &mut rng);
        let decoder = (0..config.dec_layers)
            .map(|i| {
                let n = format!("dec.layer{i}");
                DecoderLayer {
                    norm1: LayerNorm::new(&mut p, &format!("{n}.norm1"), d),
                    self_attn: MultiHeadAttention::new(&mut p, &format!("{n}.self_attn"), d, config.heads, &mut rng),
                    norm2: LayerNorm::new(&mut p, &format!("{n}.norm2"), d),
                    cross_attn: MultiHeadAttention::new(&mut p, &format!("{n}.cross_attn"), d, config.heads, &mut rng),
                    norm3: LayerNorm::new(&mut p, &format!("{n}.norm3"), d),
                    ff1: Linear::new(&mut p, &format!("{n}.ff1"), d, config.ff_dim, &mut rng),
                    ff2: Linear::new(&mut p, &format!("{n}.ff2"), config.ff_dim, d, &mut rng),
                }
            })
            .collect();
        let dec_norm = LayerNorm::new(&mut p, "dec.norm", d);
        // Small output weights keep initial logits near zero.
        let output = Linear::with_std(&mut p, "dec.output", d, vocab.len(), 0.02 / (d as f64).sqrt(), &mut rng);
        Ok(Captioner {
            config,
            vocab,
            params: p,
            image_proj,
            object_proj,
            label_table,
            encoder,
            enc_norm,
            token_table,
            decoder,
            dec_norm,
            output,
        })
    }

    pub fn check_input(&self, input: &CaptionInput) -> Result<()> {
        if input.image_vec.len() != self.config.image_dim {
            return Err(Error::dims("image_vec", self.config.image_dim, input.image_vec.len()));
        }
        if let Some(o) = input.object_vecs.iter().find(|o| o.len() != self.config.object_dim) {
            return Err(Error::dims("object_vec", self.config.object_dim, o.len()));
        }
        Ok(())
    }

    fn maybe_dropout(&self, tape: &mut Tape, x: Var, rng: Option<&mut ChaCha8Rng>) -> Var {
        match rng {
            Some(rng) if self.config.dropout > 0.0 => dropout(tape, x, self.config.dropout, rng),
            _ => x,
        }
    }

    /// Encoder token sequence before the encoder layers, stacked over the
    /// batch: `[image, objects.., label]` per example.
    pub(crate) fn assemble(&self, tape: &mut Tape, inputs: &[&CaptionInput]) -> Result<(Var, Vec<(usize, usize)>)> {
        for i in inputs {
            self.check_input(i)?;
        }
        let p = &self.params;
        let b = inputs.len();
        let images = Mat::from_shape_fn((b, self.config.image_dim), |(i, j)| inputs[i].image_vec[j]);
        let images = tape.constant(images);
        let images = self.image_proj.forward(tape, p, images);
        let objects: Vec<&Vec<f64>> = inputs.iter().flat_map(|i| &i.object_vecs).collect();
        let label_rows: Vec<usize> = inputs.iter().map(|i| i.label.index()).collect();
        let table = tape.param(p, self.label_table);
        let labels = tape.gather(table, &label_rows);
        let mut parts = vec![images];
        if !objects.is_empty() {
            let m = Mat::from_shape_fn((objects.len(), self.config.object_dim), |(i, j)| objects[i][j]);
            let m = tape.constant(m);
            parts.push(self.object_proj.forward(tape, p, m));
        }
        parts.push(labels);
        let pool = tape.concat_rows(&parts);
        // Rows of `pool`: images 0..b, objects b..b+k, labels b+k..
        let mut order = Vec::new();
        let mut obj = b;
        let labels_at = b + objects.len();
        for (i, input) in inputs.iter().enumerate() {
            order.push(i);
            for _ in &input.object_vecs {
                order.push(obj);
                obj += 1;
            }
            order.push(labels_at + i);
        }
        let spans = spans_of(inputs.iter().map(|i| i.object_vecs.len() + 2));
        Ok((tape.gather(pool, &order), spans))
    }

    pub(crate) fn encode(
        &self,
        tape: &mut Tape,
        inputs: &[&CaptionInput],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Memory> {
        let p = &self.params;
        let (mut x, spans) = self.assemble(tape, inputs)?;
        let mask = tape.constant(block_mask(&spans, &spans, false));
        for layer in &self.encoder {
            let h = layer.norm1.forward(tape, p, x);
            let h = layer.attn.forward(tape, p, h, h, Some(mask));
            let h = self.maybe_dropout(tape, h, rng.as_deref_mut());
            x = tape.add(x, h);
            let h = layer.norm2.forward(tape, p, x);
            let h = layer.ff1.forward(tape, p, h);
            let h = tape.relu(h);
            let h = layer.ff2.forward(tape, p, h);
            let h = self.maybe_dropout(tape, h, rng.as_deref_mut());
            x = tape.add(x, h);
        }
        let var = self.enc_norm.forward(tape, p, x);
        Ok(Memory { var, spans })
    }

    /// Logits (one row per decoder position, stacked over the batch) for
    /// decoder inputs `dec_inputs[i]` attending to `memory` span `i`.
    pub(crate) fn decode(
        &self,
        tape: &mut Tape,
        memory: &Memory,
        dec_inputs: &[&[usize]],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Var {
        let p = &self.params;
        let d = self.config.model_dim;
        let ids: Vec<usize> = dec_inputs.iter().flat_map(|s| s.iter().copied()).collect();
        let spans = spans_of(dec_inputs.iter().map(|s| s.len()));
        let longest = dec_inputs.iter().map(|s| s.len()).max().unwrap_or(0);
        let table = sinusoidal_positions(longest, d);
        let mut pos = Mat::zeros((ids.len(), d));
        for &(s, l) in &spans {
            pos.slice_mut(ndarray::s![s..s + l, ..])
                .assign(&table.slice(ndarray::s![..l, ..]));
        }
        let tokens = tape.param(p, self.token_table);
        let emb = tape.gather(tokens, &ids);
        let pos = tape.constant(pos);
        let mut x = tape.add(emb, pos);
        let self_mask = tape.constant(block_mask(&spans, &spans, true));
        let cross_mask = tape.constant(block_mask(&spans, &memory.spans, false));
        for layer in &self.decoder {
            let h = layer.norm1.forward(tape, p, x);
            let h = layer.self_attn.forward(tape, p, h, h, Some(self_mask));
            let h = self.maybe_dropout(tape, h, rng.as_deref_mut());
            x = tape.add(x, h);
            let h = layer.norm2.forward(tape, p, x);
            let h = layer.cross_attn.forward(tape, p, h, memory.var, Some(cross_mask));
            let h = self.maybe_dropout(tape, h, rng.as_deref_mut());
            x = tape.add(x, h);
            let h = layer.norm3.forward(tape, p, x);
            let h = layer.ff1.forward(tape, p, h);
            let h = tape.relu(h);
            let h = layer.ff2.forward(tape, p, h);
            let h = self.maybe_dropout(tape, h, rng.as_deref_mut());
            x = tape.add(x, h);
        }
        let x = self.dec_norm.forward(tape, p, x);
        self.output.forward(tape, p, x)
    }

    /// Decoder input for a target: label token then all but the last target
    /// id.
    pub fn decoder_input(label: ConditionLabel, target_ids: &[usize]) -> Vec<usize> {
        std::iter::once(label.token_id())
            .chain(target_ids[..target_ids.len().saturating_sub(1)].iter().copied())
            .collect()
    }

    /// Mean teacher-forcing cross-entropy per target subtoken.
    pub(crate) fn loss(
        &self,
        tape: &mut Tape,
        batch: &[&CaptionExample],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset("caption batch".into()));
        }
        for ex in batch {
            if ex.target_ids.is_empty() {
                return Err(Error::EmptyDataset("target_ids".into()));
            }
            if let Some(&bad) = ex.target_ids.iter().find(|&&i| i >= self.vocab.len()) {
                return Err(Error::dims("target id bound", self.vocab.len(), bad));
            }
        }
        let inputs: Vec<&CaptionInput> = batch.iter().map(|e| &e.input).collect();
        let memory = self.encode(tape, &inputs, rng.as_deref_mut())?;
        let dec: Vec<Vec<usize>> = batch
            .iter()
            .map(|e| Self::decoder_input(e.input.label, &e.target_ids))
            .collect();
        let dec_refs: Vec<&[usize]> = dec.iter().map(Vec::as_slice).collect();
        let logits = self.decode(tape, &memory, &dec_refs, rng);
        let targets: Vec<usize> = batch.iter().flat_map(|e| e.target_ids.iter().copied()).collect();
        let total = tape.cross_entropy(logits, &targets);
        Ok(tape.scale(total, 1.0 / targets.len() as f64))
    }

    /// Loss without parameter updates or dropout.
    pub fn evaluate_loss(&self, batch: &[&CaptionExample]) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.loss(&mut tape, batch, None)?;
        Ok(tape.scalar(loss))
    }

    /// Loss and parameter gradients without dropout or updates.
    pub fn loss_and_gradients(&self, batch: &[&CaptionExample]) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let loss = self.loss(&mut tape, batch, None)?;
        Ok((tape.scalar(loss), tape.backward(loss)))
    }

    /// Next-token logits at every position for one example and an explicit
    /// decoder input (label token first).
    pub fn decoder_logits(&self, input: &CaptionInput, dec_input: &[usize]) -> Result<Mat> {
        let mut tape = Tape::new();
        let memory = self.encode(&mut tape, &[input], None)?;
        let logits = self.decode(&mut tape, &memory, &[dec_input], None);
        Ok(tape.value(logits).clone())
    }

    /// Encoder output rows for one input (`objects + 2` rows).
    pub fn encoder_states(&self, input: &CaptionInput) -> Result<Mat> {
        let mut tape = Tape::new();
        let memory = self.encode(&mut tape, &[input], None)?;
        Ok(tape.value(memory.var).clone())
    }

    /// Decoder logits given precomputed encoder states.
    pub(crate) fn logits_from_states(&self, states: &Mat, prefixes: &[&[usize]]) -> Mat {
        let mut tape = Tape::new();
        let rows = states.nrows();
        let stacked = if prefixes.len() == 1 {
            states.clone()
        } else {
            let views: Vec<_> = (0..prefixes.len()).map(|_| states.view()).collect();
            ndarray::concatenate(ndarray::Axis(0), &views).expect("same width")
        };
        let memory = Memory {
            var: tape.constant(stacked),
            spans: spans_of(prefixes.iter().map(|_| rows)),
        };
        let logits = self.decode(&mut tape, &memory, prefixes, None);
        tape.value(logits).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::vocab::build_vocab;
    use crate::labelmap::SingleLabel;
    use crate::relation::CoherenceRelation;

    pub(crate) fn tiny(d: usize) -> Captioner {
        let vocab = build_vocab(&["a cat sat", "the dog ran"], 4).unwrap();
        let cfg = CaptionerConfig {
            enc_layers: 2,
            dec_layers: 2,
            heads: 2,
            model_dim: d,
            ff_dim: 2 * d,
            image_dim: 6,
            object_dim: 5,
            ..CaptionerConfig::desk()
        };
        Captioner::new(cfg, vocab).unwrap()
    }

    fn input(objects: usize, label: ConditionLabel) -> CaptionInput {
        CaptionInput {
            image_vec: (0..6).map(|i| i as f64 * 0.1).collect(),
            object_vecs: (0..objects).map(|k| vec![k as f64 * 0.2 - 0.3; 5]).collect(),
            label,
        }
    }

    #[test]
    fn encoder_sequence_length() {
        let m = tiny(8);
        for k in [0, 1, 4] {
            let mut t = Tape::new();
            let inp = input(k, ConditionLabel::None);
            let (x, spans) = m.assemble(&mut t, &[&inp]).unwrap();
            assert_eq!(t.value(x).nrows(), k + 2);
            assert_eq!(spans, vec![(0, k + 2)]);
        }
    }

    #[test]
    fn label_row_is_last_encoder_token() {
        let m = tiny(8);
        let mut t = Tape::new();
        let a = input(2, ConditionLabel::None);
        let visible = ConditionLabel::Relation(SingleLabel::new(CoherenceRelation::Visible).unwrap());
        let b = input(2, visible);
        let (x, _) = m.assemble(&mut t, &[&a, &b]).unwrap();
        let x = t.value(x);
        let table = m.params.value(m.label_table);
        assert_eq!(x.row(3), table.row(0));
        assert_eq!(x.row(7), table.row(visible.index()));
        // Only the label row differs between the two examples.
        for r in 0..3 {
            assert_eq!(x.row(r), x.row(r + 4));
        }
    }

    #[test]
    fn dimension_checks() {
        let m = tiny(8);
        let mut bad = input(1, ConditionLabel::None);
        bad.image_vec.pop();
        assert!(matches!(m.encoder_states(&bad), Err(Error::DimensionMismatch { .. })));
        let mut bad = input(1, ConditionLabel::None);
        bad.object_vecs[0].push(0.0);
        assert!(matches!(m.encoder_states(&bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn batched_equals_single() {
        let m = tiny(8);
        let a = input(1, ConditionLabel::None);
        let b = input(3, ConditionLabel::Relation(SingleLabel::from_index(2).unwrap()));
        let da = [3usize, 12, 13];
        let db = [5usize, 11];
        let mut t = Tape::new();
        let mem = m.encode(&mut t, &[&a, &b], None).unwrap();
        let out = m.decode(&mut t, &mem, &[&da, &db], None);
        let both = t.value(out).clone();
        let la = m.decoder_logits(&a, &da).unwrap();
        let lb = m.decoder_logits(&b, &db).unwrap();
        for (x, y) in both.slice(ndarray::s![..3, ..]).iter().zip(la.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in both.slice(ndarray::s![3.., ..]).iter().zip(lb.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
