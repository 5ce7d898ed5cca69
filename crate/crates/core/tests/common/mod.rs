#![allow(dead_code)]

use std::path::PathBuf;

use coherence_core::caption::{
    build_vocab, fixture_caption_input, CaptionExample, CaptionerConfig, ConditionLabel, Vocab,
};
use coherence_core::corpus::{load_captions_tsv, synthetic_image_bytes, AnnotationStore, CaptionCorpus, Split};
use coherence_core::labelmap::map_to_single;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/golden")
}

pub fn golden_corpus() -> CaptionCorpus {
    load_captions_tsv(golden_dir().join("ground_truth.tsv"), Split::Eval).unwrap()
}

pub fn golden_store() -> AnnotationStore {
    AnnotationStore::load(golden_dir().join("annotations.jsonl")).unwrap()
}

pub fn image_bytes(image_ref: &str) -> Vec<u8> {
    synthetic_image_bytes(image_ref, 256)
}

/// The first `n` golden pairs that have a primary relation, conditioned on
/// their mapped label.
pub fn memorization_set(n: usize, config: &CaptionerConfig) -> (Vocab, Vec<CaptionExample>) {
    let corpus = golden_corpus();
    let store = golden_store();
    let mut rows = Vec::new();
    for pair in &corpus.pairs {
        let labels = store.union_labels(&pair.pair_id).unwrap();
        if let Ok(l) = map_to_single(&labels, 0) {
            rows.push((pair.clone(), ConditionLabel::Relation(l)));
        }
        if rows.len() == n {
            break;
        }
    }
    let captions: Vec<&str> = rows.iter().map(|(p, _)| p.caption.as_str()).collect();
    let vocab = build_vocab(&captions, config.merges).unwrap();
    let examples = rows
        .iter()
        .map(|(p, l)| CaptionExample {
            input: fixture_caption_input(&image_bytes(&p.image_ref), *l, config),
            target_ids: vocab.encode_target(&p.caption),
        })
        .collect();
    (vocab, examples)
}

pub const MARKER: &str = "beautiful";

const SUBJECTS: [&str; 8] = ["a dog", "two boats", "an old man", "a red car", "a child", "the bridge", "a horse", "three birds"];
const PLACES: [&str; 6] = ["on the beach", "in the park", "near a lake", "at night", "in the snow", "by the road"];

pub fn visible() -> ConditionLabel {
    "Visible".parse().unwrap()
}

pub fn subjective() -> ConditionLabel {
    "Subjective".parse().unwrap()
}

fn scene(i: usize) -> (String, String) {
    let s = SUBJECTS[i % SUBJECTS.len()];
    let p = PLACES[(i / SUBJECTS.len() + i) % PLACES.len()];
    (format!("cond-image-{i}"), format!("{s} {p}"))
}

/// Every training image appears twice: with a plain caption under Visible
/// and with the marker word under Subjective. Returns the vocabulary, the
/// training examples, and held-out image keys.
pub fn conditioning_corpus(
    train_images: usize,
    held_out: usize,
    config: &CaptionerConfig,
) -> (Vocab, Vec<CaptionExample>, Vec<Vec<u8>>) {
    let mut captions = Vec::new();
    let mut rows = Vec::new();
    for i in 0..train_images {
        let (key, plain) = scene(i);
        let marked = format!("a {MARKER} view of {plain}");
        rows.push((key.clone(), visible(), plain.clone()));
        rows.push((key, subjective(), marked.clone()));
        captions.push(plain);
        captions.push(marked);
    }
    let vocab = build_vocab(&captions, config.merges).unwrap();
    let examples = rows
        .iter()
        .map(|(key, label, text)| CaptionExample {
            input: fixture_caption_input(&image_bytes(key), *label, config),
            target_ids: vocab.encode_target(text),
        })
        .collect();
    let held = (train_images..train_images + held_out)
        .map(|i| image_bytes(&scene(i).0))
        .collect();
    (vocab, examples, held)
}
