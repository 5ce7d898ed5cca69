//! File helpers shared by the commands.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use coherence_core::corpus::{
    load_captions_tsv, load_model_outputs_tsv, AnnotationStore, CaptionCorpus, FetchMode, ImageFetcher, Split,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn ground_truth(path: &Path) -> Result<CaptionCorpus> {
    load_captions_tsv(path, Split::Eval).with_context(|| format!("loading {}", path.display()))
}

pub fn model_outputs(path: &Path) -> Result<CaptionCorpus> {
    load_model_outputs_tsv(path, Split::Eval).with_context(|| format!("loading {}", path.display()))
}

pub fn annotations(path: &Path) -> Result<AnnotationStore> {
    AnnotationStore::load(path).with_context(|| format!("loading {}", path.display()))
}

/// Records of `store` whose pair is in `corpus`, in store order.
pub fn restrict(store: &AnnotationStore, corpus: &CaptionCorpus) -> Result<AnnotationStore> {
    let ids: HashSet<&str> = corpus.pairs.iter().map(|p| p.pair_id.as_str()).collect();
    Ok(AnnotationStore::from_records(
        store
            .records()
            .iter()
            .filter(|r| ids.contains(r.pair_id.as_str()))
            .cloned(),
    )?)
}

pub fn fixture_image(cache_dir: &Path, image_ref: &str) -> Result<Vec<u8>> {
    ImageFetcher::new(cache_dir, FetchMode::Fixture)
        .fetch(image_ref)
        .with_context(|| format!("cache {} has no image (run `ingest --seed-fixtures`)", cache_dir.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    create_parent(path)?;
    let mut out = BufWriter::new(fs::File::create(path).with_context(|| format!("writing {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?);
    }
    Ok(rows)
}
