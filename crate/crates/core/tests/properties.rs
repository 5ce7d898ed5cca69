use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;

use coherence_core::corpus::{domain_of_url, AnnotationStore};
use coherence_core::evaluate::{
    cider_score, kappa_for_sets, relation_distribution, CiderConfig, GroupBy,
};
use coherence_core::labelmap::{map_to_single, mapping_oracle, train_test_split, SingleLabel};
use coherence_core::service::plan_assignments;
use coherence_core::{
    format_label, parse_label, AnnotationRecord, CoherenceRelation, ImageCaptionPair, MetaFacet, Origin,
    RelationSet,
};

fn primary_set() -> impl Strategy<Value = RelationSet> {
    (1u8..64).prop_map(RelationSet::from_primary_mask)
}

/// Sets that pass protocol validation: one exclusive label, or primary
/// labels with facets only under Meta.
fn any_set() -> impl Strategy<Value = RelationSet> {
    prop_oneof![
        1 => (5usize..8).prop_map(|i| RelationSet::of([CoherenceRelation::ALL[i]])),
        4 => (1u8..32, prop::collection::btree_set(0usize..MetaFacet::ALL.len(), 0..3)).prop_map(|(mask, facets)| {
            let mut rs = RelationSet::from_primary_mask(mask);
            if rs.contains(CoherenceRelation::Meta) {
                rs.facets = facets.into_iter().map(|i| MetaFacet::ALL[i]).collect();
            }
            rs
        }),
    ]
}

fn record(pair: usize, annotator: &str, labels: RelationSet, comment: Option<String>) -> AnnotationRecord {
    AnnotationRecord {
        pair_id: format!("p{pair}"),
        annotator_id: annotator.to_string(),
        labels,
        comment,
        timestamp: 1_000 + pair as i64,
    }
}

fn pair(i: usize) -> ImageCaptionPair {
    ImageCaptionPair {
        pair_id: format!("p{i}"),
        image_ref: format!("https://example.org/{i}.jpg"),
        caption: format!("caption {i}"),
        source_domain: "example.org".into(),
        origin: Origin::GroundTruth,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn labelmap_output_is_in_oracle(rs in primary_set(), seed in any::<u64>()) {
        let got = map_to_single(&rs, seed).unwrap();
        prop_assert!(mapping_oracle(&rs).unwrap().contains(&got));
        prop_assert_eq!(got, map_to_single(&rs, seed).unwrap());
    }

    #[test]
    fn labelmap_priority_rules(rs in primary_set(), seed in any::<u64>()) {
        use CoherenceRelation::*;
        let got = map_to_single(&rs, seed).unwrap().relation();
        if rs.contains(Meta) {
            prop_assert_eq!(got, Meta);
        } else if rs.contains(Visible) && !rs.contains(Subjective) {
            prop_assert_eq!(got, Visible);
        } else {
            prop_assert!(rs.contains(got));
        }
    }

    #[test]
    fn label_names_round_trip(i in 0usize..8) {
        let r = CoherenceRelation::ALL[i];
        prop_assert_eq!(parse_label(format_label(r)).unwrap(), r);
    }

    #[test]
    fn store_save_load_round_trip(
        sets in prop::collection::vec((any_set(), prop::option::of("[a-z ,\"]{0,12}")), 1..20)
    ) {
        let records: Vec<AnnotationRecord> = sets
            .into_iter()
            .enumerate()
            .map(|(i, (rs, c))| record(i, "ann", rs, c))
            .collect();
        let store = AnnotationStore::from_records(records.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        store.save(&path).unwrap();
        let back = AnnotationStore::load(&path).unwrap();
        prop_assert_eq!(back.records(), &records[..]);
    }

    #[test]
    fn distribution_ignores_pair_order(
        sets in prop::collection::vec(any_set(), 1..30),
        seed in any::<u64>()
    ) {
        let pairs: Vec<ImageCaptionPair> = (0..sets.len()).map(pair).collect();
        let store = AnnotationStore::from_records(
            sets.iter().cloned().enumerate().map(|(i, rs)| record(i, "ann", rs, None)),
        )
        .unwrap();
        let (shuffled, _) = train_test_split(&pairs, pairs.len(), seed);
        let a = relation_distribution(&store, &pairs, GroupBy::All).unwrap();
        let b = relation_distribution(&store, &shuffled, GroupBy::All).unwrap();
        prop_assert_eq!(&a, &b);
        for r in CoherenceRelation::ALL {
            let p = a[0].percent(r);
            prop_assert!((0.0..=100.0).contains(&p));
        }
    }

    #[test]
    fn kappa_is_symmetric_and_bounded(
        rows in prop::collection::vec((any_set(), any_set()), 1..40)
    ) {
        let (a, b): (Vec<RelationSet>, Vec<RelationSet>) = rows.into_iter().unzip();
        let ab = kappa_for_sets(&a, &b).unwrap();
        let ba = kappa_for_sets(&b, &a).unwrap();
        prop_assert_eq!(ab.pooled.kappa, ba.pooled.kappa);
        for ((_, x), (_, y)) in ab.per_label.iter().zip(&ba.per_label) {
            prop_assert_eq!(x.kappa, y.kappa);
        }
        if let Some(k) = ab.pooled.kappa {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
        }
        let same = kappa_for_sets(&a, &a).unwrap();
        prop_assert!(same.pooled.kappa.is_none_or(|k| (k - 1.0).abs() < 1e-12));
    }

    #[test]
    fn reference_is_the_best_candidate(
        refs in prop::collection::vec(prop::collection::vec(0usize..6, 1..8), 2..5),
        other in prop::collection::vec(0usize..6, 1..8),
    ) {
        let words = ["a", "dog", "runs", "on", "the", "beach"];
        let text = |ix: &[usize]| ix.iter().map(|&i| words[i]).collect::<Vec<_>>().join(" ");
        let references: Vec<Vec<String>> = refs.iter().map(|r| vec![text(r)]).collect();
        let mut own: Vec<String> = references.iter().map(|r| r[0].clone()).collect();
        let best = cider_score(&own, &references, &CiderConfig::default()).unwrap();
        own[0] = text(&other);
        let alt = cider_score(&own, &references, &CiderConfig::default()).unwrap();
        prop_assert!(best.per_example[0] + 1e-9 >= alt.per_example[0]);
    }

    #[test]
    fn cider_matches_naive_computation(
        corpus in prop::collection::vec(
            (
                prop::collection::vec(0usize..5, 1..7),
                prop::collection::vec(prop::collection::vec(0usize..5, 1..7), 1..4),
            ),
            1..5,
        )
    ) {
        let words = ["red", "car", "on", "a", "road"];
        let text = |ix: &Vec<usize>| ix.iter().map(|&i| words[i]).collect::<Vec<_>>().join(" ");
        let cands: Vec<String> = corpus.iter().map(|(c, _)| text(c)).collect();
        let refs: Vec<Vec<String>> = corpus.iter().map(|(_, rs)| rs.iter().map(text).collect()).collect();
        let got = cider_score(&cands, &refs, &CiderConfig::default()).unwrap();
        let want = naive_cider(&cands, &refs);
        for (g, w) in got.per_example.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-9, "{} vs {}", g, w);
        }
    }

    #[test]
    fn domain_extraction_is_idempotent(
        host in "[a-z]{1,8}(\\.[a-z]{2,5}){1,2}",
        www in any::<bool>(),
        upper in any::<bool>(),
    ) {
        let mut h = if www { format!("www.{host}") } else { host.clone() };
        if upper {
            h = h.to_uppercase();
        }
        let d = domain_of_url(&format!("https://{h}/img/1.jpg")).unwrap();
        prop_assert_eq!(&d, &host);
        prop_assert_eq!(domain_of_url(&format!("http://{d}/x")).unwrap(), d);
    }

    #[test]
    fn assignment_plan_invariants(
        n_pairs in 1usize..200,
        n_ann in 2usize..6,
        overlap_frac in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let pairs: Vec<String> = (0..n_pairs).map(|i| format!("p{i}")).collect();
        let anns: Vec<String> = (0..n_ann).map(|i| format!("a{i}")).collect();
        let overlap = (n_pairs as f64 * overlap_frac) as usize;
        let plan = plan_assignments(&pairs, &anns, overlap, seed).unwrap();
        prop_assert_eq!(plan.total_assignments(), n_pairs + overlap);
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for q in &plan.queues {
            let unique: BTreeSet<&String> = q.pair_ids.iter().collect();
            prop_assert_eq!(unique.len(), q.pair_ids.len());
            for p in &q.pair_ids {
                *seen.entry(p.as_str()).or_default() += 1;
            }
        }
        let overlap_set: BTreeSet<&str> = plan.overlap.iter().map(String::as_str).collect();
        prop_assert_eq!(overlap_set.len(), overlap);
        for p in &pairs {
            let want = if overlap_set.contains(p.as_str()) { 2 } else { 1 };
            prop_assert_eq!(seen.get(p.as_str()).copied(), Some(want));
        }
    }

    #[test]
    fn split_is_a_partition(n in 0usize..300, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let rows: Vec<usize> = (0..n).collect();
        let k = (n as f64 * frac) as usize;
        let (train, test) = train_test_split(&rows, k, seed);
        prop_assert_eq!(train.len(), k);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, rows.clone());
        prop_assert_eq!(train_test_split(&rows, k, seed), (train, test));
    }
}

#[test]
fn every_primary_subset_maps_inside_its_oracle() {
    for mask in 1u8..64 {
        let rs = RelationSet::from_primary_mask(mask);
        let oracle: BTreeSet<SingleLabel> = mapping_oracle(&rs).unwrap().into_iter().collect();
        let hits: BTreeSet<SingleLabel> = (0..200).map(|s| map_to_single(&rs, s).unwrap()).collect();
        assert!(hits.is_subset(&oracle), "mask {mask:#08b}");
        // Sampled sets should reach every member over enough seeds.
        assert_eq!(hits, oracle, "mask {mask:#08b}");
    }
}

/// Straightforward CIDEr over string-joined n-grams, written without
/// sharing any code with the library.
fn naive_cider(cands: &[String], refs: &[Vec<String>]) -> Vec<f64> {
    fn grams(s: &str, n: usize) -> BTreeMap<String, f64> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        let mut m = BTreeMap::new();
        if toks.len() >= n {
            for i in 0..=toks.len() - n {
                *m.entry(toks[i..i + n].join(" ")).or_insert(0.0) += 1.0;
            }
        }
        m
    }
    let docs = cands.len() as f64;
    let mut scores = vec![0.0; cands.len()];
    for n in 1..=4 {
        let mut df: BTreeMap<String, f64> = BTreeMap::new();
        for rs in refs {
            let mut keys = BTreeSet::new();
            for r in rs {
                keys.extend(grams(r, n).into_keys());
            }
            for k in keys {
                *df.entry(k).or_insert(0.0) += 1.0;
            }
        }
        let weigh = |m: BTreeMap<String, f64>| -> BTreeMap<String, f64> {
            m.into_iter()
                .map(|(k, tf)| {
                    let d = df.get(&k).copied().unwrap_or(0.0).max(1.0);
                    (k, tf * (docs.ln() - d.ln()))
                })
                .collect()
        };
        let norm = |m: &BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
        for (i, (c, rs)) in cands.iter().zip(refs).enumerate() {
            let cv = weigh(grams(c, n));
            let mut sum = 0.0;
            for r in rs {
                let rv = weigh(grams(r, n));
                let dot: f64 = cv.iter().filter_map(|(k, v)| rv.get(k).map(|w| v * w)).sum();
                let (a, b) = (norm(&cv), norm(&rv));
                sum += if a != 0.0 && b != 0.0 { dot / (a * b) } else { dot };
            }
            scores[i] += sum / rs.len() as f64 / 4.0 * 10.0;
        }
    }
    scores
}
