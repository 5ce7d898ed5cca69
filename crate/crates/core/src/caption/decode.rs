use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{CaptionInput, Captioner};
use super::vocab::EOS;

pub const MAX_BEAM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodeStrategy {
    Greedy,
    /// Keeps `k` hypotheses ranked by summed log-probability divided by
    /// `length^alpha`.
    Beam { k: usize, alpha: f64 },
}

impl DecodeStrategy {
    pub fn beam(k: usize) -> Self {
        DecodeStrategy::Beam { k, alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Generated subtoken ids without EOS.
    pub ids: Vec<usize>,
    pub text: String,
    pub log_prob: f64,
    /// True when `max_len` was reached before EOS.
    pub truncated: bool,
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

/// Next-subtoken log-probabilities after each prefix (label token first).
fn next_log_probs(model: &Captioner, states: &ndarray::Array2<f64>, prefixes: &[&[usize]]) -> Vec<Vec<f64>> {
    let logits = model.logits_from_states(states, prefixes);
    let mut row = 0;
    prefixes
        .iter()
        .map(|p| {
            row += p.len();
            log_softmax(&logits.row(row - 1).to_vec())
        })
        .collect()
}

/// Probability distribution over the vocabulary for the subtoken following
/// `prefix` (generated ids, without the label token).
pub fn next_token_distribution(model: &Captioner, input: &CaptionInput, prefix: &[usize]) -> Result<Vec<f64>> {
    let states = model.encoder_states(input)?;
    let dec: Vec<usize> = std::iter::once(input.label.token_id()).chain(prefix.iter().copied()).collect();
    Ok(next_log_probs(model, &states, &[&dec])
        .remove(0)
        .into_iter()
        .map(f64::exp)
        .collect())
}

fn finish(model: &Captioner, mut ids: Vec<usize>, log_prob: f64) -> Generation {
    let truncated = ids.last() != Some(&EOS);
    if !truncated {
        ids.pop();
    }
    Generation {
        text: model.vocab.decode(&ids),
        ids,
        log_prob,
        truncated,
    }
}

fn top_k(log_probs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..log_probs.len()).collect();
    idx.sort_by(|&a, &b| log_probs[b].total_cmp(&log_probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone)]
struct Hypothesis {
    ids: Vec<usize>,
    log_prob: f64,
}

impl Hypothesis {
    fn done(&self) -> bool {
        self.ids.last() == Some(&EOS)
    }

    fn score(&self, alpha: f64) -> f64 {
        self.log_prob / (self.ids.len().max(1) as f64).powf(alpha)
    }
}

pub fn generate_caption(model: &Captioner, input: &CaptionInput, strategy: DecodeStrategy) -> Result<Generation> {
    let states = model.encoder_states(input)?;
    let label = input.label.token_id();
    let max_len = model.config.max_len;
    match strategy {
        DecodeStrategy::Greedy => {
            let mut dec = vec![label];
            let mut log_prob = 0.0;
            while dec.len() <= max_len {
                let lp = next_log_probs(model, &states, &[&dec]).remove(0);
                let next = top_k(&lp, 1)[0];
                log_prob += lp[next];
                dec.push(next);
                if next == EOS {
                    break;
                }
            }
            Ok(finish(model, dec[1..].to_vec(), log_prob))
        }
        DecodeStrategy::Beam { k, alpha } => {
            if k == 0 || k > MAX_BEAM {
                return Err(Error::config("beam", format!("k must be in 1..={MAX_BEAM}")));
            }
            let mut beams = vec![Hypothesis {
                ids: Vec::new(),
                log_prob: 0.0,
            }];
            for _ in 0..max_len {
                if beams.iter().all(Hypothesis::done) {
                    break;
                }
                let active: Vec<&Hypothesis> = beams.iter().filter(|h| !h.done()).collect();
                let prefixes: Vec<Vec<usize>> = active
                    .iter()
                    .map(|h| std::iter::once(label).chain(h.ids.iter().copied()).collect())
                    .collect();
                let refs: Vec<&[usize]> = prefixes.iter().map(Vec::as_slice).collect();
                let all_lp = next_log_probs(model, &states, &refs);
                let mut candidates: Vec<Hypothesis> = beams.iter().filter(|h| h.done()).cloned().collect();
                for (h, lp) in active.iter().zip(&all_lp) {
                    for t in top_k(lp, k) {
                        let mut ids = h.ids.clone();
                        ids.push(t);
                        candidates.push(Hypothesis {
                            ids,
                            log_prob: h.log_prob + lp[t],
                        });
                    }
                }
                // Stable sort keeps earlier candidates first on equal scores.
                candidates.sort_by(|a, b| b.score(alpha).total_cmp(&a.score(alpha)));
                candidates.truncate(k);
                beams = candidates;
            }
            let best = beams
                .iter()
                .filter(|h| h.done())
                .chain(beams.iter().filter(|h| !h.done()))
                .next()
                .expect("at least one beam")
                .clone();
            Ok(finish(model, best.ids, best.log_prob))
        }
    }
}
