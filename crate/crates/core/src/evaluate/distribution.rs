use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotationStore;
use crate::error::{Error, Result};
use crate::relation::{CoherenceRelation, ImageCaptionPair, MetaFacet, RelationSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupBy {
    All,
    Origin,
    Domain,
    OriginAndDomain,
}

/// Label percentages for one group of pairs. A pair bears a label when
/// any of its annotators assigned it. Percentages are over annotated pairs
/// in the group, so label rows need not sum to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub group: String,
    /// Annotated pairs in the group.
    pub denominator: usize,
    pub label_counts: Vec<(CoherenceRelation, usize)>,
    /// Pairs bearing `Meta`; denominator of the facet percentages.
    pub meta_denominator: usize,
    pub facet_counts: Vec<(MetaFacet, usize)>,
}

impl DistributionReport {
    fn from_sets<'a>(group: String, sets: impl IntoIterator<Item = &'a RelationSet>) -> Self {
        let mut denominator = 0;
        let mut labels = [0usize; 8];
        let mut facets = [0usize; 3];
        let mut meta = 0;
        for rs in sets {
            denominator += 1;
            for (i, r) in CoherenceRelation::ALL.iter().enumerate() {
                if rs.contains(*r) {
                    labels[i] += 1;
                }
            }
            if rs.contains(CoherenceRelation::Meta) {
                meta += 1;
                for (i, f) in MetaFacet::ALL.iter().enumerate() {
                    if rs.has_facet(*f) {
                        facets[i] += 1;
                    }
                }
            }
        }
        DistributionReport {
            group,
            denominator,
            label_counts: CoherenceRelation::ALL.iter().copied().zip(labels).collect(),
            meta_denominator: meta,
            facet_counts: MetaFacet::ALL.iter().copied().zip(facets).collect(),
        }
    }

    pub fn count(&self, r: CoherenceRelation) -> usize {
        self.label_counts
            .iter()
            .find(|(l, _)| *l == r)
            .map_or(0, |(_, c)| *c)
    }

    pub fn percent(&self, r: CoherenceRelation) -> f64 {
        percent(self.count(r), self.denominator)
    }

    pub fn facet_count(&self, f: MetaFacet) -> usize {
        self.facet_counts
            .iter()
            .find(|(l, _)| *l == f)
            .map_or(0, |(_, c)| *c)
    }

    /// Facet percentage among `Meta` pairs.
    pub fn facet_percent(&self, f: MetaFacet) -> f64 {
        percent(self.facet_count(f), self.meta_denominator)
    }
}

fn percent(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64 * 100.0
    }
}

fn group_key(pair: &ImageCaptionPair, by: GroupBy) -> String {
    match by {
        GroupBy::All => "all".to_string(),
        GroupBy::Origin => pair.origin.as_str().to_string(),
        GroupBy::Domain => pair.source_domain.clone(),
        GroupBy::OriginAndDomain => format!("{}/{}", pair.origin.as_str(), pair.source_domain),
    }
}

/// Union of labels for every annotated pair, checking that each annotation
/// refers to a known pair.
pub fn labelled_pairs<'a>(
    store: &AnnotationStore,
    pairs: &'a [ImageCaptionPair],
) -> Result<Vec<(&'a ImageCaptionPair, RelationSet)>> {
    let index: HashMap<&str, &ImageCaptionPair> =
        pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    if let Some(r) = store
        .records()
        .iter()
        .find(|r| !index.contains_key(r.pair_id.as_str()))
    {
        return Err(Error::UnknownPair(r.pair_id.clone()));
    }
    Ok(pairs
        .iter()
        .filter_map(|p| store.union_labels(&p.pair_id).map(|rs| (p, rs)))
        .collect())
}

/// Per-group label distribution; groups are ordered by key.
pub fn relation_distribution(
    store: &AnnotationStore,
    pairs: &[ImageCaptionPair],
    group_by: GroupBy,
) -> Result<Vec<DistributionReport>> {
    let labelled = labelled_pairs(store, pairs)?;
    let mut groups: BTreeMap<String, Vec<&RelationSet>> = BTreeMap::new();
    for (pair, rs) in &labelled {
        groups.entry(group_key(pair, group_by)).or_default().push(rs);
    }
    Ok(groups
        .into_iter()
        .map(|(key, sets)| DistributionReport::from_sets(key, sets))
        .collect())
}

/// Distribution over explicit relation sets, e.g. judgments of generated
/// captions grouped by the requested relation.
pub fn distribution_of_sets<'a>(
    group: impl Into<String>,
    sets: impl IntoIterator<Item = &'a RelationSet>,
) -> DistributionReport {
    DistributionReport::from_sets(group.into(), sets)
}

/// Distribution per source domain, most frequent domain first.
pub fn genre_distribution(
    store: &AnnotationStore,
    pairs: &[ImageCaptionPair],
) -> Result<Vec<DistributionReport>> {
    let mut reports = relation_distribution(store, pairs, GroupBy::Domain)?;
    reports.sort_by(|a, b| {
        b.denominator
            .cmp(&a.denominator)
            .then_with(|| a.group.cmp(&b.group))
    });
    Ok(reports)
}

/// Denominator used by [`overlap_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverlapBase {
    /// All annotated pairs in the group.
    AllPairs,
    /// Pairs bearing the first label.
    FirstLabel,
    /// Pairs bearing the second label.
    SecondLabel,
}

impl OverlapBase {
    pub const ALL: [OverlapBase; 3] = [
        OverlapBase::AllPairs,
        OverlapBase::FirstLabel,
        OverlapBase::SecondLabel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OverlapBase::AllPairs => "all-pairs",
            OverlapBase::FirstLabel => "first-label",
            OverlapBase::SecondLabel => "second-label",
        }
    }
}

/// Percentage of pairs bearing both labels. `None` when the denominator is
/// zero.
pub fn overlap_rate<'a>(
    sets: impl IntoIterator<Item = &'a RelationSet>,
    label_a: CoherenceRelation,
    label_b: CoherenceRelation,
    base: OverlapBase,
) -> Option<f64> {
    let (mut total, mut with_a, mut with_b, mut both) = (0usize, 0usize, 0usize, 0usize);
    for rs in sets {
        total += 1;
        let a = rs.contains(label_a);
        let b = rs.contains(label_b);
        with_a += a as usize;
        with_b += b as usize;
        both += (a && b) as usize;
    }
    let denominator = match base {
        OverlapBase::AllPairs => total,
        OverlapBase::FirstLabel => with_a,
        OverlapBase::SecondLabel => with_b,
    };
    (denominator > 0).then(|| both as f64 / denominator as f64 * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{AnnotationRecord, CoherenceRelation::*, Origin};

    fn pair(id: &str, domain: &str, origin: Origin) -> ImageCaptionPair {
        ImageCaptionPair {
            pair_id: id.into(),
            image_ref: format!("http://{domain}/{id}.jpg"),
            caption: "c".into(),
            source_domain: domain.into(),
            origin,
        }
    }

    fn rec(id: &str, ann: &str, rs: RelationSet) -> AnnotationRecord {
        AnnotationRecord {
            pair_id: id.into(),
            annotator_id: ann.into(),
            labels: rs,
            comment: None,
            timestamp: 0,
        }
    }

    fn toy() -> (AnnotationStore, Vec<ImageCaptionPair>) {
        let pairs = vec![
            pair("a", "x.com", Origin::GroundTruth),
            pair("b", "x.com", Origin::GroundTruth),
            pair("c", "y.com", Origin::GroundTruth),
            pair("d", "y.com", Origin::GroundTruth),
        ];
        let store = AnnotationStore::from_records([
            rec("a", "1", RelationSet::of([Visible])),
            rec("b", "1", RelationSet::new([Visible, Meta], [MetaFacet::How])),
            rec("c", "1", RelationSet::of([Story])),
            rec("d", "1", RelationSet::of([Irrelevant])),
        ])
        .unwrap();
        (store, pairs)
    }

    #[test]
    fn two_of_four_visible_is_fifty_percent() {
        let (store, pairs) = toy();
        let r = relation_distribution(&store, &pairs, GroupBy::All).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].percent(Visible), 50.0);
        assert_eq!(r[0].percent(Meta), 25.0);
        assert_eq!(r[0].facet_percent(MetaFacet::How), 100.0);
    }

    #[test]
    fn unknown_pair_is_rejected() {
        let (mut store, pairs) = toy();
        store.append(rec("zzz", "1", RelationSet::of([Visible]))).unwrap();
        assert!(matches!(
            relation_distribution(&store, &pairs, GroupBy::All),
            Err(Error::UnknownPair(id)) if id == "zzz"
        ));
    }

    #[test]
    fn multi_annotator_union() {
        let (mut store, pairs) = toy();
        store.append(rec("c", "2", RelationSet::of([Visible]))).unwrap();
        let r = relation_distribution(&store, &pairs, GroupBy::All).unwrap();
        assert_eq!(r[0].count(Visible), 3);
        assert_eq!(r[0].count(Story), 1);
    }

    #[test]
    fn genre_sorted_and_zero_meta() {
        let (mut store, mut pairs) = toy();
        pairs.push(pair("e", "y.com", Origin::GroundTruth));
        store.append(rec("e", "1", RelationSet::of([Action]))).unwrap();
        let g = genre_distribution(&store, &pairs).unwrap();
        assert_eq!(g[0].group, "y.com");
        assert_eq!(g[0].denominator, 3);
        assert_eq!(g[0].percent(Meta), 0.0);
        assert_eq!(g[1].group, "x.com");
    }

    #[test]
    fn single_domain_equals_global() {
        let (store, mut pairs) = toy();
        for p in &mut pairs {
            p.source_domain = "only.com".into();
        }
        let g = genre_distribution(&store, &pairs).unwrap();
        let all = relation_distribution(&store, &pairs, GroupBy::All).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].label_counts, all[0].label_counts);
    }

    #[test]
    fn overlap_edges() {
        let disjoint = [RelationSet::of([Visible]), RelationSet::of([Meta])];
        for base in OverlapBase::ALL {
            assert_eq!(overlap_rate(&disjoint, Visible, Meta, base), Some(0.0));
        }
        let same = [RelationSet::of([Visible, Meta]), RelationSet::of([Visible, Meta])];
        for base in OverlapBase::ALL {
            assert_eq!(overlap_rate(&same, Visible, Meta, base), Some(100.0));
        }
        let none = [RelationSet::of([Story])];
        assert_eq!(overlap_rate(&none, Visible, Meta, OverlapBase::FirstLabel), None);
        assert_eq!(overlap_rate(&[], Visible, Meta, OverlapBase::AllPairs), None);
    }

    #[test]
    fn grouping_by_origin() {
        let (mut store, mut pairs) = toy();
        pairs.push(pair("model:0", "z.com", Origin::ModelOutput));
        store.append(rec("model:0", "1", RelationSet::of([Visible]))).unwrap();
        let r = relation_distribution(&store, &pairs, GroupBy::Origin).unwrap();
        let groups: Vec<&str> = r.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(groups, ["Ground-truth", "Model output"]);
        assert_eq!(r[1].percent(Visible), 100.0);
    }
}
