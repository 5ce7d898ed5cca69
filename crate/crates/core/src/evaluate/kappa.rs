//! Cohen's kappa over binary presence/absence decisions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotationStore;
use crate::error::{Error, Result};
use crate::relation::{CoherenceRelation, RelationSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Number of decisions compared.
    pub n: usize,
    pub observed: f64,
    pub expected: f64,
    /// `None` when expected agreement is 1 and kappa is undefined.
    pub kappa: Option<f64>,
}

/// Kappa from a 2×2 table: `both` yes, `only_a`, `only_b`, `neither`.
pub fn kappa_from_table(both: usize, only_a: usize, only_b: usize, neither: usize) -> AgreementReport {
    let n = both + only_a + only_b + neither;
    if n == 0 {
        return AgreementReport {
            n,
            observed: 0.0,
            expected: 1.0,
            kappa: None,
        };
    }
    let nf = n as f64;
    let observed = (both + neither) as f64 / nf;
    let a_yes = (both + only_a) as f64 / nf;
    let b_yes = (both + only_b) as f64 / nf;
    let expected = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    let kappa = if (1.0 - expected).abs() < 1e-15 {
        None
    } else {
        Some((observed - expected) / (1.0 - expected))
    };
    AgreementReport {
        n,
        observed,
        expected,
        kappa,
    }
}

/// Kappa over paired yes/no decisions.
pub fn binary_kappa(decisions: impl IntoIterator<Item = (bool, bool)>) -> AgreementReport {
    let mut t = [0usize; 4];
    for (a, b) in decisions {
        let idx = match (a, b) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        t[idx] += 1;
    }
    kappa_from_table(t[0], t[1], t[2], t[3])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSummary {
    pub pairs: usize,
    pub per_label: Vec<(CoherenceRelation, AgreementReport)>,
    /// Mean of the defined per-label kappas.
    pub mean_kappa: Option<f64>,
    /// One kappa over every (pair, label) decision.
    pub pooled: AgreementReport,
}

/// Per-label and pooled kappa for two aligned lists of relation sets.
pub fn kappa_for_sets(a: &[RelationSet], b: &[RelationSet]) -> Result<KappaSummary> {
    if a.len() != b.len() {
        return Err(Error::CoverageMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let per_label: Vec<(CoherenceRelation, AgreementReport)> = CoherenceRelation::ALL
        .iter()
        .map(|&r| {
            let report = binary_kappa(a.iter().zip(b).map(|(x, y)| (x.contains(r), y.contains(r))));
            (r, report)
        })
        .collect();
    let defined: Vec<f64> = per_label.iter().filter_map(|(_, r)| r.kappa).collect();
    let mean_kappa =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let pooled = binary_kappa(a.iter().zip(b).flat_map(|(x, y)| {
        CoherenceRelation::ALL
            .iter()
            .map(move |&r| (x.contains(r), y.contains(r)))
    }));
    Ok(KappaSummary {
        pairs: a.len(),
        per_label,
        mean_kappa,
        pooled,
    })
}

/// Agreement between two annotators, who must have annotated the same pairs.
pub fn cohen_kappa(store: &AnnotationStore, annotator_a: &str, annotator_b: &str) -> Result<KappaSummary> {
    let ids_a: BTreeSet<&str> = store.by_annotator(annotator_a).map(|r| r.pair_id.as_str()).collect();
    let ids_b: BTreeSet<&str> = store.by_annotator(annotator_b).map(|r| r.pair_id.as_str()).collect();
    if ids_a != ids_b {
        return Err(Error::CoverageMismatch {
            left: ids_a.len(),
            right: ids_b.len(),
        });
    }
    let sets = |ann: &str| -> Vec<RelationSet> {
        ids_a
            .iter()
            .map(|id| store.get(id, ann).expect("covered").labels.clone())
            .collect()
    };
    kappa_for_sets(&sets(annotator_a), &sets(annotator_b))
}

/// Kappa for one label between two annotators.
pub fn cohen_kappa_label(
    store: &AnnotationStore,
    annotator_a: &str,
    annotator_b: &str,
    label: CoherenceRelation,
) -> Result<AgreementReport> {
    let summary = cohen_kappa(store, annotator_a, annotator_b)?;
    Ok(summary
        .per_label
        .into_iter()
        .find(|(r, _)| *r == label)
        .map(|(_, rep)| rep)
        .expect("every label reported"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{AnnotationRecord, CoherenceRelation::*};

    #[test]
    fn hand_table() {
        let r = kappa_from_table(45, 5, 5, 45);
        assert!((r.observed - 0.90).abs() < 1e-12);
        assert!((r.expected - 0.50).abs() < 1e-12);
        assert!((r.kappa.unwrap() - 0.80).abs() < 1e-9);
    }

    #[test]
    fn degenerate_expected_is_flagged() {
        let r = kappa_from_table(10, 0, 0, 0);
        assert_eq!(r.kappa, None);
        assert_eq!(r.observed, 1.0);
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

    #[test]
    fn identical_annotators_agree_perfectly() {
        let sets = [
            RelationSet::of([Visible]),
            RelationSet::of([Visible, Meta]),
            RelationSet::of([Story]),
            RelationSet::of([Irrelevant]),
        ];
        let mut recs = Vec::new();
        for (i, s) in sets.iter().enumerate() {
            recs.push(rec(&i.to_string(), "a", s.clone()));
            recs.push(rec(&i.to_string(), "b", s.clone()));
        }
        let store = AnnotationStore::from_records(recs).unwrap();
        let k = cohen_kappa(&store, "a", "b").unwrap();
        assert_eq!(k.mean_kappa, Some(1.0));
        assert_eq!(k.pooled.kappa, Some(1.0));
        assert_eq!(
            cohen_kappa_label(&store, "a", "b", Visible).unwrap().kappa,
            Some(1.0)
        );
        // Never used by either annotator.
        assert_eq!(cohen_kappa_label(&store, "a", "b", Action).unwrap().kappa, None);
    }

    #[test]
    fn coverage_mismatch() {
        let store = AnnotationStore::from_records([
            rec("1", "a", RelationSet::of([Visible])),
            rec("2", "b", RelationSet::of([Visible])),
        ])
        .unwrap();
        assert!(matches!(
            cohen_kappa(&store, "a", "b"),
            Err(Error::CoverageMismatch { .. })
        ));
    }
}
