//! Collapsing multi-label relation sets to one training label.
//!
//! 1. `Meta` in the set wins.
//! 2. Otherwise `Visible` wins when `Subjective` is absent.
//! 3. Otherwise a primary member is drawn uniformly with [`SplitMix64`]
//!    seeded by `seed ^ mix(primary_mask)`, so the draw depends only on the
//!    set contents and the seed.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotationStore;
use crate::error::{Error, Result};
use crate::relation::{CoherenceRelation, RelationSet};

/// SplitMix64 (Steele, Lea, Flood 2014). Fixed constants; output is
/// identical on every platform.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(Self::GAMMA);
        Self::mix(self.state)
    }

    /// Uniform integer in `0..n` by multiply-high.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

/// One of the six classifier classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SingleLabel(CoherenceRelation);

impl SingleLabel {
    pub fn new(r: CoherenceRelation) -> Option<Self> {
        r.is_primary().then_some(SingleLabel(r))
    }

    pub fn from_index(i: usize) -> Option<Self> {
        CoherenceRelation::PRIMARY.get(i).map(|&r| SingleLabel(r))
    }

    pub fn relation(self) -> CoherenceRelation {
        self.0
    }

    pub fn index(self) -> usize {
        self.0.primary_index().expect("primary")
    }

    pub fn all() -> impl Iterator<Item = SingleLabel> {
        CoherenceRelation::PRIMARY.into_iter().map(SingleLabel)
    }
}

impl fmt::Display for SingleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Serialize for SingleLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SingleLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = CoherenceRelation::deserialize(d)?;
        SingleLabel::new(r).ok_or_else(|| serde::de::Error::custom(format!("{r} is not a class")))
    }
}

/// Which heuristic rule decided a mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingRule {
    Meta,
    VisibleWithoutSubjective,
    Sampled,
}

pub fn applicable_rule(rs: &RelationSet) -> Result<MappingRule> {
    if rs.primary().next().is_none() {
        return Err(Error::EmptyPrimarySet);
    }
    Ok(if rs.contains(CoherenceRelation::Meta) {
        MappingRule::Meta
    } else if rs.contains(CoherenceRelation::Visible) && !rs.contains(CoherenceRelation::Subjective)
    {
        MappingRule::VisibleWithoutSubjective
    } else {
        MappingRule::Sampled
    })
}

pub fn map_to_single(rs: &RelationSet, seed: u64) -> Result<SingleLabel> {
    match applicable_rule(rs)? {
        MappingRule::Meta => Ok(SingleLabel(CoherenceRelation::Meta)),
        MappingRule::VisibleWithoutSubjective => Ok(SingleLabel(CoherenceRelation::Visible)),
        MappingRule::Sampled => {
            let candidates: Vec<CoherenceRelation> = rs.primary().collect();
            let mask = rs.primary_mask() as u64;
            let mut rng = SplitMix64::new(seed ^ SplitMix64::mix(mask));
            let pick = rng.below(candidates.len() as u64) as usize;
            Ok(SingleLabel(candidates[pick]))
        }
    }
}

/// Every label `map_to_single` may return for `rs`.
pub fn mapping_oracle(rs: &RelationSet) -> Result<Vec<SingleLabel>> {
    Ok(match applicable_rule(rs)? {
        MappingRule::Meta => vec![SingleLabel(CoherenceRelation::Meta)],
        MappingRule::VisibleWithoutSubjective => vec![SingleLabel(CoherenceRelation::Visible)],
        MappingRule::Sampled => rs.primary().map(SingleLabel).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleLabelRow {
    pub pair_id: String,
    pub label: SingleLabel,
}

/// Maps the label union of every annotated pair, in first-annotated order.
/// Pairs without a primary relation (only `Other*`) are skipped.
pub fn single_label_dataset(store: &AnnotationStore, seed: u64) -> Vec<SingleLabelRow> {
    store
        .pair_ids()
        .into_iter()
        .filter_map(|pair_id| {
            let labels = store.union_labels(&pair_id)?;
            let label = map_to_single(&labels, seed).ok()?;
            Some(SingleLabelRow { pair_id, label })
        })
        .collect()
}

/// Deterministic shuffle-then-cut split into `(train, test)` with exactly
/// `train_size` training rows.
pub fn train_test_split<T: Clone>(rows: &[T], train_size: usize, seed: u64) -> (Vec<T>, Vec<T>) {
    let train_size = train_size.min(rows.len());
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = SplitMix64::new(seed);
    for i in (1..order.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    let pick = |ix: &[usize]| ix.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
    (pick(&order[..train_size]), pick(&order[train_size..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::CoherenceRelation::*;

    fn label(r: CoherenceRelation) -> SingleLabel {
        SingleLabel::new(r).unwrap()
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 0 of the reference C implementation.
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(g.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn rule_one_meta() {
        let rs = RelationSet::of([Visible, Meta]);
        assert_eq!(map_to_single(&rs, 0).unwrap(), label(Meta));
        assert_eq!(
            mapping_oracle(&RelationSet::of([Meta, Subjective, Visible])).unwrap(),
            vec![label(Meta)]
        );
    }

    #[test]
    fn rule_two_visible() {
        let rs = RelationSet::of([Visible, Action]);
        assert_eq!(map_to_single(&rs, 0).unwrap(), label(Visible));
        assert_eq!(
            mapping_oracle(&RelationSet::of([Visible])).unwrap(),
            vec![label(Visible)]
        );
    }

    #[test]
    fn rule_three_samples_a_member() {
        let rs = RelationSet::of([Visible, Subjective]);
        let a = map_to_single(&rs, 0).unwrap();
        assert!([label(Visible), label(Subjective)].contains(&a));
        assert_eq!(map_to_single(&rs, 0).unwrap(), a);
        assert_eq!(
            mapping_oracle(&RelationSet::of([Story, Action])).unwrap(),
            vec![label(Action), label(Story)]
        );
    }

    #[test]
    fn other_only_has_no_primary() {
        assert!(matches!(
            map_to_single(&RelationSet::of([OtherText]), 0),
            Err(Error::EmptyPrimarySet)
        ));
    }

    #[test]
    fn split_sizes() {
        let rows: Vec<usize> = (0..3910).collect();
        let (train, test) = train_test_split(&rows, 3400, 1);
        assert_eq!((train.len(), test.len()), (3400, 510));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        assert_eq!(all, rows);
    }
}
