use std::collections::HashMap;
use std::path::Path;

use anyhow::Result;
use coherence_core::evaluate::{cider_score, CiderConfig};
use serde::Serialize;

use crate::args::{ScoreArgs, VariantArg};
use crate::data;
use crate::manifest::{self, Manifest};

#[derive(Debug, Serialize)]
struct ScoreConfig<'a> {
    candidates: &'a Path,
    references: &'a Path,
    cider: CiderConfig,
}

#[derive(Debug, Serialize)]
struct Scored {
    image_ref: String,
    caption: String,
    references: usize,
    cider: f64,
}

#[derive(Debug, Serialize)]
struct Scores {
    cider: CiderConfig,
    corpus: f64,
    per_example: Vec<Scored>,
}

pub fn run(args: &ScoreArgs) -> Result<()> {
    let cider = match args.variant {
        VariantArg::Cider => CiderConfig::default(),
        VariantArg::CiderD => CiderConfig::cider_d(),
    };
    let candidates = data::model_outputs(&args.candidates)?.pairs;
    let references = data::ground_truth(&args.references)?.pairs;
    let mut by_image: HashMap<&str, Vec<String>> = HashMap::new();
    for r in &references {
        by_image.entry(r.image_ref.as_str()).or_default().push(r.caption.clone());
    }
    let texts: Vec<String> = candidates.iter().map(|c| c.caption.clone()).collect();
    let refs: Vec<Vec<String>> = candidates
        .iter()
        .map(|c| by_image.get(c.image_ref.as_str()).cloned().unwrap_or_default())
        .collect();
    let result = cider_score(&texts, &refs, &cider)?;
    eprintln!("corpus CIDEr {:.4} over {} candidates", result.corpus, texts.len());
    let scores = Scores {
        cider,
        corpus: result.corpus,
        per_example: candidates
            .iter()
            .zip(&refs)
            .zip(&result.per_example)
            .map(|((c, r), s)| Scored {
                image_ref: c.image_ref.clone(),
                caption: c.caption.clone(),
                references: r.len(),
                cider: *s,
            })
            .collect(),
    };
    data::write_json(&args.out, &scores)?;
    let mut m = Manifest::new(
        "score",
        &ScoreConfig {
            candidates: &args.candidates,
            references: &args.references,
            cider,
        },
    )?;
    m.input(&args.candidates)?.input(&args.references)?.output(&args.out);
    m.write(&manifest::beside(&args.out))
}
