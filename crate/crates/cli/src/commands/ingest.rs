use std::path::Path;

use anyhow::Result;
use coherence_core::corpus::{synthetic_image_bytes, FetchMode, ImageFetcher};
use serde::Serialize;

use crate::args::IngestArgs;
use crate::data;
use crate::manifest::{self, Manifest};

#[derive(Debug, Serialize)]
struct IngestConfig<'a> {
    captions: &'a Path,
    model_outputs: Option<&'a Path>,
    seed_fixtures: bool,
    fixture_bytes: usize,
    fetch: bool,
    cache_dir: &'a Path,
}

#[derive(Debug, Serialize)]
struct FetchFailure {
    image_ref: String,
    error: String,
    retryable: bool,
}

#[derive(Debug, Serialize)]
struct ImageSummary {
    seeded: usize,
    fetched: usize,
    transport_calls: usize,
    failures: Vec<FetchFailure>,
}

pub fn run(args: &IngestArgs, cache_dir: &Path) -> Result<()> {
    let mut pairs = data::ground_truth(&args.captions)?.pairs;
    if let Some(p) = &args.model_outputs {
        pairs.extend(data::model_outputs(p)?.pairs);
    }
    let mut summary = ImageSummary {
        seeded: 0,
        fetched: 0,
        transport_calls: 0,
        failures: Vec::new(),
    };
    if args.seed_fixtures {
        for p in &pairs {
            ImageFetcher::seed_fixture(cache_dir, &p.image_ref, &synthetic_image_bytes(&p.image_ref, args.fixture_bytes))?;
            summary.seeded += 1;
        }
    }
    if args.fetch {
        let fetcher = ImageFetcher::new(cache_dir, FetchMode::Network);
        for p in &pairs {
            match fetcher.fetch(&p.image_ref) {
                Ok(_) => summary.fetched += 1,
                Err(e) => summary.failures.push(FetchFailure {
                    image_ref: p.image_ref.clone(),
                    retryable: e.is_retryable(),
                    error: e.to_string(),
                }),
            }
        }
        summary.transport_calls = fetcher.transport_calls();
    }

    let pairs_path = args.out.join("pairs.jsonl");
    let images_path = args.out.join("images.json");
    data::write_jsonl(&pairs_path, &pairs)?;
    data::write_json(&images_path, &summary)?;
    eprintln!(
        "ingested {} pairs; {} fixtures seeded, {} fetched, {} failed",
        pairs.len(),
        summary.seeded,
        summary.fetched,
        summary.failures.len()
    );

    let config = IngestConfig {
        captions: &args.captions,
        model_outputs: args.model_outputs.as_deref(),
        seed_fixtures: args.seed_fixtures,
        fixture_bytes: args.fixture_bytes,
        fetch: args.fetch,
        cache_dir,
    };
    let mut m = Manifest::new("ingest", &config)?;
    m.input(&args.captions)?.inputs(&args.model_outputs)?;
    m.output(&pairs_path).output(&images_path);
    m.write(&manifest::for_dir(&args.out))
}
