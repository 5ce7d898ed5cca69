//! Byte-pair subtoken vocabulary.
//!
//! Words are split on whitespace and spelled as a word-start marker `▁`
//! followed by their characters. Training repeatedly merges the most
//! frequent adjacent symbol pair; ties go to the lexicographically smallest
//! `(left, right)`. Characters never seen in training encode as UNK.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelmap::SingleLabel;
use crate::relation::CoherenceRelation;

pub const WORD_START: &str = "\u{2581}";

pub const PAD: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
pub const NONE: usize = 3;
const FIRST_LABEL: usize = 4;
pub const NUM_RESERVED: usize = FIRST_LABEL + 6;

/// Conditioning input of the captioner: a class label or the NONE symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionLabel {
    None,
    Relation(SingleLabel),
}

impl ConditionLabel {
    pub const COUNT: usize = 7;

    pub fn token_id(self) -> usize {
        match self {
            ConditionLabel::None => NONE,
            ConditionLabel::Relation(l) => FIRST_LABEL + l.index(),
        }
    }

    /// Row in the 7-row label tables: NONE is 0, classes follow.
    pub fn index(self) -> usize {
        self.token_id() - NONE
    }

    pub fn all() -> impl Iterator<Item = ConditionLabel> {
        std::iter::once(ConditionLabel::None).chain(SingleLabel::all().map(ConditionLabel::Relation))
    }
}

impl std::str::FromStr for ConditionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(ConditionLabel::None);
        }
        let r: CoherenceRelation = s.parse()?;
        SingleLabel::new(r)
            .map(ConditionLabel::Relation)
            .ok_or_else(|| Error::config("label", format!("{r} cannot condition generation")))
    }
}

impl std::fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConditionLabel::None => f.write_str("NONE"),
            ConditionLabel::Relation(l) => l.fmt(f),
        }
    }
}

fn reserved_symbols() -> Vec<String> {
    let mut v: Vec<String> = ["<pad>", "<eos>", "<unk>", "<none>"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend(CoherenceRelation::PRIMARY.iter().map(|r| format!("<{}>", r.as_str())));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    /// Symbol strings by id; the first [`NUM_RESERVED`] are reserved.
    pub symbols: Vec<String>,
    pub merges: Vec<(String, String)>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    ranks: HashMap<(String, String), usize>,
}

fn spell(word: &str) -> Vec<String> {
    std::iter::once(WORD_START.to_string())
        .chain(word.chars().map(|c| c.to_string()))
        .collect()
}

fn apply_merge(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let merged = format!("{left}{right}");
            symbols.splice(i..i + 2, std::iter::once(merged));
        }
        i += 1;
    }
}

pub fn build_vocab<S: AsRef<str>>(captions: &[S], merges: usize) -> Result<Vocab> {
    let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in captions {
        for w in c.as_ref().split_whitespace() {
            *word_counts.entry(w).or_insert(0) += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::EmptyDataset("caption corpus".into()));
    }
    let mut words: Vec<(Vec<String>, usize)> = word_counts.iter().map(|(w, &n)| (spell(w), n)).collect();
    let mut base: Vec<String> = words
        .iter()
        .flat_map(|(s, _)| s.iter().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut symbols = reserved_symbols();
    symbols.append(&mut base);
    let mut learned = Vec::with_capacity(merges);
    for _ in 0..merges {
        let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (s, n) in &words {
            for w in s.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_insert(0) += n;
            }
        }
        // BTreeMap iterates in key order, so the first maximum is the
        // lexicographically smallest pair.
        let Some(((l, r), _)) = pairs
            .into_iter()
            .fold(None::<((&str, &str), usize)>, |best, (k, n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((k, n)),
            })
        else {
            break;
        };
        let (l, r) = (l.to_string(), r.to_string());
        for (s, _) in &mut words {
            apply_merge(s, &l, &r);
        }
        let merged = format!("{l}{r}");
        if !symbols.contains(&merged) {
            symbols.push(merged);
        }
        learned.push((l, r));
    }
    let mut v = Vocab {
        symbols,
        merges: learned,
        index: HashMap::new(),
        ranks: HashMap::new(),
    };
    v.rebuild();
    Ok(v)
}

impl Vocab {
    pub fn rebuild(&mut self) {
        self.index = self
            .symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        self.ranks = self
            .merges
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    fn encode_word(&self, word: &str, out: &mut Vec<usize>) {
        let mut s = spell(word);
        loop {
            let best = s
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            apply_merge(&mut s, l, r);
        }
        out.extend(s.iter().map(|sym| self.id(sym).unwrap_or(UNK)));
    }

    /// Subtoken ids without the trailing EOS.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        for w in text.split_whitespace() {
            self.encode_word(w, &mut out);
        }
        out
    }

    /// Subtoken ids followed by EOS.
    pub fn encode_target(&self, text: &str) -> Vec<usize> {
        let mut ids = self.encode(text);
        ids.push(EOS);
        ids
    }

    /// Text for a sequence of ids; stops at EOS and drops other reserved ids
    /// except UNK.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut s = String::new();
        for &id in ids {
            match id {
                EOS => break,
                UNK => s.push_str("<unk>"),
                i if i < NUM_RESERVED => {}
                i => s.push_str(self.symbol(i).unwrap_or("<unk>")),
            }
        }
        s.replace(WORD_START, " ").trim().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_merge() {
        let v = build_vocab(&["aa aa"], 1).unwrap();
        assert_eq!(v.merges, vec![("a".to_string(), "a".to_string())]);
        assert!(v.id("aa").is_some());
        assert_eq!(v.len(), NUM_RESERVED + 2 + 1);
    }

    #[test]
    fn round_trip() {
        let corpus = ["a dog runs on the beach", "the dog sleeps", "a beach at dusk"];
        let v = build_vocab(&corpus, 20).unwrap();
        for c in corpus.iter().chain(&["dogs on a dusk beach", "the the the"]) {
            let ids = v.encode(c);
            assert_eq!(v.decode(&ids), *c);
            assert_eq!(v.encode(&v.decode(&ids)), ids);
        }
    }

    #[test]
    fn unseen_characters_are_unk() {
        let v = build_vocab(&["abc"], 0).unwrap();
        let ids = v.encode("abz");
        assert_eq!(*ids.last().unwrap(), UNK);
        assert!(ids[..ids.len() - 1].iter().all(|&i| i >= NUM_RESERVED));
    }

    #[test]
    fn reserved_ids_are_distinct() {
        let v = build_vocab(&["x"], 0).unwrap();
        let mut ids: Vec<usize> = ConditionLabel::all().map(|l| l.token_id()).collect();
        ids.extend([PAD, EOS, UNK]);
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), NUM_RESERVED);
        assert!(v.encode("x").iter().all(|&i| i >= NUM_RESERVED));
        assert_eq!("subjective".parse::<ConditionLabel>().unwrap().index(), 2);
        assert_eq!("NONE".parse::<ConditionLabel>().unwrap().token_id(), NONE);
    }

    #[test]
    fn empty_corpus() {
        assert!(build_vocab::<&str>(&[], 5).is_err());
        assert!(build_vocab(&["   "], 5).is_err());
    }
}
