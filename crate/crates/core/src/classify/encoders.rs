//! Text and image feature extraction for the relation classifier.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::FeatureFile;
use crate::error::{Error, Result};
use crate::evaluate::cider::tokenize;
use crate::nn::params::gaussian;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextEncoderSpec {
    /// Counts of word n-grams for n in `min_n..=max_n` over a vocabulary of
    /// the `max_vocab` most frequent training n-grams.
    NgramBow {
        min_n: usize,
        max_n: usize,
        max_vocab: usize,
        oov_bucket: bool,
    },
    /// Trainable word embeddings, LSTM, batch norm, dense + tanh.
    RecurrentEmbedding {
        max_vocab: usize,
        embed_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
    },
    /// Vectors from a feature file.
    Precomputed { dim: usize },
}

impl TextEncoderSpec {
    pub fn ngram_default() -> Self {
        TextEncoderSpec::NgramBow {
            min_n: 1,
            max_n: 5,
            max_vocab: 20_000,
            oov_bucket: true,
        }
    }

    pub fn recurrent_default() -> Self {
        TextEncoderSpec::RecurrentEmbedding {
            max_vocab: 5_000,
            embed_dim: 32,
            hidden_dim: 32,
            out_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TextEncoderSpec::NgramBow {
                min_n,
                max_n,
                max_vocab,
                ..
            } => {
                if min_n == 0 || min_n > max_n {
                    return Err(Error::config("text.min_n", "need 1 <= min_n <= max_n"));
                }
                if max_vocab == 0 {
                    return Err(Error::config("text.max_vocab", "must be positive"));
                }
            }
            TextEncoderSpec::RecurrentEmbedding {
                max_vocab,
                embed_dim,
                hidden_dim,
                out_dim,
            } => {
                if max_vocab == 0 || embed_dim == 0 || hidden_dim == 0 || out_dim == 0 {
                    return Err(Error::config("text", "recurrent dimensions must be positive"));
                }
            }
            TextEncoderSpec::Precomputed { dim } => {
                if dim == 0 {
                    return Err(Error::config("text.dim", "must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageEncoderSpec {
    None,
    /// Unit-norm pseudo-random vector seeded by the image content hash.
    FixtureHash { dim: usize },
    Precomputed { dim: usize },
}

impl ImageEncoderSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ImageEncoderSpec::None => 0,
            ImageEncoderSpec::FixtureHash { dim } | ImageEncoderSpec::Precomputed { dim } => dim,
        }
    }
}

/// N-gram index fitted on training captions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramVocab {
    pub min_n: usize,
    pub max_n: usize,
    pub oov_bucket: bool,
    /// N-grams joined by a single space, in index order.
    pub entries: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

fn ngrams(tokens: &[String], min_n: usize, max_n: usize) -> impl Iterator<Item = String> + '_ {
    (min_n..=max_n).flat_map(move |n| {
        tokens
            .windows(n)
            .map(|w| w.join(" "))
            .collect::<Vec<_>>()
    })
}

impl NgramVocab {
    pub fn from_entries(min_n: usize, max_n: usize, oov_bucket: bool, entries: Vec<String>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        NgramVocab {
            min_n,
            max_n,
            oov_bucket,
            entries,
            index,
        }
    }

    /// Keeps the `max_vocab` most frequent n-grams; ties broken
    /// lexicographically.
    pub fn fit<'a>(
        captions: impl IntoIterator<Item = &'a str>,
        min_n: usize,
        max_n: usize,
        max_vocab: usize,
        oov_bucket: bool,
    ) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for c in captions {
            let toks = tokenize(c);
            for g in ngrams(&toks, min_n, max_n) {
                *counts.entry(g).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_vocab);
        Self::from_entries(min_n, max_n, oov_bucket, ranked.into_iter().map(|(g, _)| g).collect())
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
    }

    pub fn dim(&self) -> usize {
        self.entries.len() + usize::from(self.oov_bucket)
    }

    pub fn encode(&self, caption: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        let toks = tokenize(caption);
        for g in ngrams(&toks, self.min_n, self.max_n) {
            match self.index.get(&g) {
                Some(&i) => v[i] += 1.0,
                None if self.oov_bucket => v[self.entries.len()] += 1.0,
                None => {}
            }
        }
        v
    }
}

/// Word index for the recurrent encoder; id 0 is the unknown word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordVocab {
    pub words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl WordVocab {
    pub fn fit<'a>(captions: impl IntoIterator<Item = &'a str>, max_vocab: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for c in captions {
            for t in tokenize(c) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_vocab.saturating_sub(1));
        let mut v = WordVocab {
            words: std::iter::once("<unk>".to_string())
                .chain(ranked.into_iter().map(|(w, _)| w))
                .collect(),
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Token ids; an empty caption encodes as a single unknown token.
    pub fn encode(&self, caption: &str) -> Vec<usize> {
        let ids: Vec<usize> = tokenize(caption)
            .iter()
            .map(|t| self.index.get(t).copied().unwrap_or(0))
            .collect();
        if ids.is_empty() {
            vec![0]
        } else {
            ids
        }
    }
}

/// Text input to the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TextFeatures {
    Dense(Vec<f64>),
    Tokens(Vec<usize>),
}

/// A text encoder fitted on training captions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextEncoder {
    Ngram { vocab: NgramVocab },
    Recurrent { vocab: WordVocab, embed_dim: usize, hidden_dim: usize, out_dim: usize },
    Precomputed { dim: usize },
}

impl TextEncoder {
    pub fn fit<'a>(spec: &TextEncoderSpec, train_captions: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        spec.validate()?;
        Ok(match *spec {
            TextEncoderSpec::NgramBow {
                min_n,
                max_n,
                max_vocab,
                oov_bucket,
            } => TextEncoder::Ngram {
                vocab: NgramVocab::fit(train_captions, min_n, max_n, max_vocab, oov_bucket),
            },
            TextEncoderSpec::RecurrentEmbedding {
                max_vocab,
                embed_dim,
                hidden_dim,
                out_dim,
            } => TextEncoder::Recurrent {
                vocab: WordVocab::fit(train_captions, max_vocab),
                embed_dim,
                hidden_dim,
                out_dim,
            },
            TextEncoderSpec::Precomputed { dim } => TextEncoder::Precomputed { dim },
        })
    }

    /// Restores lookup tables after deserialization.
    pub fn rebuild(&mut self) {
        match self {
            TextEncoder::Ngram { vocab } => vocab.rebuild_index(),
            TextEncoder::Recurrent { vocab, .. } => vocab.rebuild_index(),
            TextEncoder::Precomputed { .. } => {}
        }
    }

    /// Width of the vector this encoder contributes to the fused input.
    pub fn output_dim(&self) -> usize {
        match self {
            TextEncoder::Ngram { vocab } => vocab.dim(),
            TextEncoder::Recurrent { out_dim, .. } => *out_dim,
            TextEncoder::Precomputed { dim } => *dim,
        }
    }

    pub fn encode(&self, pair_id: &str, caption: &str, features: Option<&FeatureFile>) -> Result<TextFeatures> {
        match self {
            TextEncoder::Ngram { vocab } => Ok(TextFeatures::Dense(vocab.encode(caption))),
            TextEncoder::Recurrent { vocab, .. } => Ok(TextFeatures::Tokens(vocab.encode(caption))),
            TextEncoder::Precomputed { dim } => {
                let entry = features
                    .ok_or_else(|| Error::MissingFeature(pair_id.to_string()))?
                    .get(pair_id)?;
                if entry.text_vec.len() != *dim {
                    return Err(Error::dims("text_vec", *dim, entry.text_vec.len()));
                }
                Ok(TextFeatures::Dense(entry.text_vec.clone()))
            }
        }
    }
}

/// Deterministic unit-norm stand-in for a pretrained image network.
pub fn fixture_image_vector(bytes: &[u8], dim: usize) -> Vec<f64> {
    let seed: [u8; 32] = Sha256::digest(bytes).into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub enum ImageInput<'a> {
    Bytes(&'a [u8]),
    Pair(&'a str),
}

pub fn encode_image(spec: &ImageEncoderSpec, input: ImageInput<'_>, features: Option<&FeatureFile>) -> Result<Vec<f64>> {
    match (*spec, input) {
        (ImageEncoderSpec::None, _) => Ok(Vec::new()),
        (ImageEncoderSpec::FixtureHash { dim }, ImageInput::Bytes(b)) => Ok(fixture_image_vector(b, dim)),
        (ImageEncoderSpec::FixtureHash { .. }, ImageInput::Pair(id)) => Err(Error::config(
            "image",
            format!("fixture_hash needs image bytes (pair {id})"),
        )),
        (ImageEncoderSpec::Precomputed { dim }, input) => {
            let id = match input {
                ImageInput::Pair(id) => id,
                ImageInput::Bytes(_) => {
                    return Err(Error::config("image", "precomputed features are keyed by pair id"))
                }
            };
            let entry = features
                .ok_or_else(|| Error::MissingFeature(id.to_string()))?
                .get(id)?;
            if entry.image_vec.len() != dim {
                return Err(Error::dims("image_vec", dim, entry.image_vec.len()));
            }
            Ok(entry.image_vec.clone())
        }
    }
}
