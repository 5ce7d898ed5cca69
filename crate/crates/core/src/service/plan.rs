use std::collections::{BTreeSet, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of doubly annotated pairs.
pub const DEFAULT_OVERLAP: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorQueue {
    pub annotator_id: String,
    /// Pair ids in serving order.
    pub pair_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub queues: Vec<AnnotatorQueue>,
    /// Pairs given to two annotators, in input order.
    pub overlap: Vec<String>,
    pub overlap_count: usize,
    pub seed: u64,
}

impl AssignmentPlan {
    pub fn queue(&self, annotator_id: &str) -> Option<&[String]> {
        self.queues
            .iter()
            .find(|q| q.annotator_id == annotator_id)
            .map(|q| q.pair_ids.as_slice())
    }

    pub fn annotators(&self) -> impl Iterator<Item = &str> {
        self.queues.iter().map(|q| q.annotator_id.as_str())
    }

    pub fn total_assignments(&self) -> usize {
        self.queues.iter().map(|q| q.pair_ids.len()).sum()
    }

    /// The two annotators holding an overlap pair, in plan order.
    pub fn overlap_annotators(&self, pair_id: &str) -> Option<(&str, &str)> {
        let mut holders = self
            .queues
            .iter()
            .filter(|q| q.pair_ids.iter().any(|p| p == pair_id))
            .map(|q| q.annotator_id.as_str());
        match (holders.next(), holders.next(), holders.next()) {
            (Some(a), Some(b), None) => Some((a, b)),
            _ => None,
        }
    }
}

/// Picks a seeded uniform subset of `overlap_count` pairs for double
/// annotation and deals the rest round-robin. The k-th overlap pair goes to
/// annotators `k mod n` and `k+1 mod n`. Queues keep input order.
pub fn plan_assignments(
    pair_ids: &[String],
    annotators: &[String],
    overlap_count: usize,
    seed: u64,
) -> Result<AssignmentPlan> {
    if annotators.is_empty() {
        return Err(Error::InsufficientAnnotators("at least one annotator is required".into()));
    }
    if overlap_count > 0 && annotators.len() < 2 {
        return Err(Error::InsufficientAnnotators(
            "overlap requires at least two annotators".into(),
        ));
    }
    if overlap_count > pair_ids.len() {
        return Err(Error::OverlapTooLarge {
            overlap: overlap_count,
            pairs: pair_ids.len(),
        });
    }
    let mut seen = HashSet::new();
    if let Some(dup) = pair_ids.iter().find(|p| !seen.insert(p.as_str())) {
        return Err(Error::DuplicatePair(dup.clone()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = annotators.iter().find(|a| !seen.insert(a.as_str())) {
        return Err(Error::config("annotators", format!("duplicate annotator {dup}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: BTreeSet<usize> = rand::seq::index::sample(&mut rng, pair_ids.len(), overlap_count)
        .into_iter()
        .collect();

    let n = annotators.len();
    let mut queues: Vec<Vec<String>> = vec![Vec::new(); n];
    let (mut shared, mut exclusive) = (0usize, 0usize);
    for (i, pair) in pair_ids.iter().enumerate() {
        if chosen.contains(&i) {
            queues[shared % n].push(pair.clone());
            queues[(shared + 1) % n].push(pair.clone());
            shared += 1;
        } else {
            queues[exclusive % n].push(pair.clone());
            exclusive += 1;
        }
    }
    Ok(AssignmentPlan {
        queues: annotators
            .iter()
            .zip(queues)
            .map(|(a, q)| AnnotatorQueue {
                annotator_id: a.clone(),
                pair_ids: q,
            })
            .collect(),
        overlap: chosen.iter().map(|&i| pair_ids[i].clone()).collect(),
        overlap_count,
        seed,
    })
}
