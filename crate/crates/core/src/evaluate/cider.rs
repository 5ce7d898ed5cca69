//! Consensus-based caption scoring (CIDEr and the CIDEr-D variant).
//!
//! For each n in 1..=n_max a caption becomes a TF-IDF vector over its
//! n-grams, with document frequency counted over the reference sets of the
//! whole corpus (one document per candidate). The score of a candidate is
//! the cosine similarity to each reference, averaged over references and
//! over n, times 10.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CiderVariant {
    Cider,
    /// Clipped n-gram counts plus a Gaussian length penalty with this sigma.
    CiderD { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiderConfig {
    pub n_max: usize,
    pub variant: CiderVariant,
}

impl Default for CiderConfig {
    fn default() -> Self {
        CiderConfig {
            n_max: 4,
            variant: CiderVariant::Cider,
        }
    }
}

impl CiderConfig {
    pub fn cider_d() -> Self {
        CiderConfig {
            n_max: 4,
            variant: CiderVariant::CiderD { sigma: 6.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiderResult {
    pub corpus: f64,
    pub per_example: Vec<f64>,
}

/// Lowercases and splits on anything that is not alphanumeric or an
/// apostrophe.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

type Ngram = Vec<String>;

fn ngram_counts(tokens: &[String], n_max: usize) -> Vec<HashMap<Ngram, f64>> {
    (1..=n_max)
        .map(|n| {
            let mut counts = HashMap::new();
            if tokens.len() >= n {
                for w in tokens.windows(n) {
                    *counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
                }
            }
            counts
        })
        .collect()
}

struct Vectorized {
    vecs: Vec<HashMap<Ngram, f64>>,
    norms: Vec<f64>,
    length: usize,
}

pub fn cider_score(
    candidates: &[String],
    references: &[Vec<String>],
    config: &CiderConfig,
) -> Result<CiderResult> {
    if candidates.len() != references.len() {
        return Err(Error::dims("reference sets", candidates.len(), references.len()));
    }
    if let Some(i) = references.iter().position(|r| r.is_empty()) {
        return Err(Error::EmptyReferences(format!("#{i}")));
    }
    if candidates.is_empty() {
        return Ok(CiderResult {
            corpus: 0.0,
            per_example: Vec::new(),
        });
    }
    let n_max = config.n_max;
    let ref_counts: Vec<Vec<(Vec<HashMap<Ngram, f64>>, usize)>> = references
        .iter()
        .map(|refs| {
            refs.iter()
                .map(|r| {
                    let toks = tokenize(r);
                    (ngram_counts(&toks, n_max), toks.len())
                })
                .collect()
        })
        .collect();

    let mut doc_freq: HashMap<&Ngram, f64> = HashMap::new();
    for refs in &ref_counts {
        let mut seen: std::collections::HashSet<&Ngram> = std::collections::HashSet::new();
        for (counts, _) in refs {
            for per_n in counts {
                seen.extend(per_n.keys());
            }
        }
        for g in seen {
            *doc_freq.entry(g).or_insert(0.0) += 1.0;
        }
    }
    let log_docs = (candidates.len() as f64).ln();

    let vectorize = |counts: &[HashMap<Ngram, f64>], length: usize| -> Vectorized {
        let mut vecs = Vec::with_capacity(counts.len());
        let mut norms = Vec::with_capacity(counts.len());
        for per_n in counts {
            let mut v = HashMap::with_capacity(per_n.len());
            let mut norm = 0.0;
            for (g, &tf) in per_n {
                let df = doc_freq.get(g).copied().unwrap_or(0.0).max(1.0);
                let w = tf * (log_docs - df.ln());
                norm += w * w;
                v.insert(g.clone(), w);
            }
            vecs.push(v);
            norms.push(norm.sqrt());
        }
        Vectorized {
            vecs,
            norms,
            length,
        }
    };

    let mut per_example = Vec::with_capacity(candidates.len());
    for (cand, refs) in candidates.iter().zip(&ref_counts) {
        let toks = tokenize(cand);
        let hyp = vectorize(&ngram_counts(&toks, n_max), toks.len());
        let mut per_n = vec![0.0; n_max];
        for (rc, rlen) in refs {
            let r = vectorize(rc, *rlen);
            for n in 0..n_max {
                let mut val = 0.0;
                for (g, &hw) in &hyp.vecs[n] {
                    if let Some(&rw) = r.vecs[n].get(g) {
                        val += match config.variant {
                            CiderVariant::Cider => hw * rw,
                            CiderVariant::CiderD { .. } => hw.min(rw) * rw,
                        };
                    }
                }
                if hyp.norms[n] != 0.0 && r.norms[n] != 0.0 {
                    val /= hyp.norms[n] * r.norms[n];
                }
                if let CiderVariant::CiderD { sigma } = config.variant {
                    let delta = hyp.length as f64 - r.length as f64;
                    val *= (-(delta * delta) / (2.0 * sigma * sigma)).exp();
                }
                per_n[n] += val;
            }
        }
        let mean_n = per_n.iter().sum::<f64>() / n_max as f64;
        per_example.push(mean_n / refs.len() as f64 * 10.0);
    }
    let corpus = per_example.iter().sum::<f64>() / per_example.len() as f64;
    Ok(CiderResult {
        corpus,
        per_example,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn tokenizer_strips_punctuation() {
        assert_eq!(tokenize("A Dog, running!"), s(&["a", "dog", "running"]));
    }

    #[test]
    fn disjoint_candidate_scores_zero() {
        let r = cider_score(
            &s(&["purple elephant", "a dog"]),
            &[s(&["a cat on a mat"]), s(&["a dog"])],
            &CiderConfig::default(),
        )
        .unwrap();
        assert_eq!(r.per_example[0], 0.0);
    }

    #[test]
    fn empty_reference_set_is_rejected() {
        let err = cider_score(&s(&["a"]), &[vec![]], &CiderConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyReferences(_)));
    }

    #[test]
    fn cider_d_penalizes_length() {
        let refs = [s(&["the cat sat on the mat"]), s(&["dogs run in parks"])];
        let base = cider_score(&s(&["the cat sat", "dogs run"]), &refs, &CiderConfig::default()).unwrap();
        let d = cider_score(&s(&["the cat sat", "dogs run"]), &refs, &CiderConfig::cider_d()).unwrap();
        assert!(d.per_example[0] < base.per_example[0]);
        assert!(d.per_example[0] > 0.0);
    }
}
