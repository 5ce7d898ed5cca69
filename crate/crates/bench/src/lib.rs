//! Synthetic inputs shared by the benchmarks.

use coherence_core::corpus::AnnotationStore;
use coherence_core::labelmap::SplitMix64;
use coherence_core::{AnnotationRecord, CoherenceRelation, RelationSet};

const WORDS: [&str; 16] = [
    "a", "dog", "runs", "on", "the", "beach", "at", "sunset", "old", "man", "with", "red", "boat", "near",
    "river", "photo",
];

/// `n` pseudo-random captions of 6 to 15 words.
pub fn captions(n: usize, seed: u64) -> Vec<String> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let len = 6 + rng.below(10) as usize;
            (0..len)
                .map(|_| WORDS[rng.below(WORDS.len() as u64) as usize])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Every non-empty subset of the six primary relations.
pub fn primary_subsets() -> Vec<RelationSet> {
    (1u8..64).map(RelationSet::from_primary_mask).collect()
}

/// Two annotators labelling the same `pairs` pairs at random.
pub fn two_annotator_store(pairs: usize, seed: u64) -> AnnotationStore {
    let mut rng = SplitMix64::new(seed);
    let mut records = Vec::with_capacity(pairs * 2);
    for i in 0..pairs {
        for ann in ["a", "b"] {
            let mask = 1 + rng.below(63) as u8;
            let labels = RelationSet::from_primary_mask(mask);
            let labels = if labels.contains(CoherenceRelation::Irrelevant) {
                RelationSet::of([CoherenceRelation::Irrelevant])
            } else {
                labels
            };
            records.push(AnnotationRecord {
                pair_id: format!("p{i}"),
                annotator_id: ann.into(),
                labels,
                comment: None,
                timestamp: 0,
            });
        }
    }
    AnnotationStore::from_records(records).expect("valid records")
}
