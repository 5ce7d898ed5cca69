use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use coherence_core::corpus::AnnotationStore;
use coherence_core::service::{self, plan_assignments, AnnotationService};
use serde::Serialize;

use crate::args::ServeArgs;
use crate::data;
use crate::manifest::{self, Manifest};

#[derive(Debug, Serialize)]
struct ServeConfig<'a> {
    pairs: &'a Path,
    model_outputs: Option<&'a Path>,
    annotations: &'a Path,
    annotators: &'a [String],
    overlap: usize,
    seed: u64,
    addr: &'a str,
    proxy_images: bool,
    cache_dir: &'a Path,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "annotations".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn run(args: &ServeArgs, cache_dir: &Path) -> Result<()> {
    let mut pairs = data::ground_truth(&args.pairs)?.pairs;
    if let Some(p) = &args.model_outputs {
        pairs.extend(data::model_outputs(p)?.pairs);
    }
    let ids: Vec<String> = pairs.iter().map(|p| p.pair_id.clone()).collect();
    let plan = plan_assignments(&ids, &args.annotators, args.overlap, args.seed)?;
    let plan_path = sibling(&args.annotations, "plan.json");
    data::write_json(&plan_path, &plan)?;

    let config = ServeConfig {
        pairs: &args.pairs,
        model_outputs: args.model_outputs.as_deref(),
        annotations: &args.annotations,
        annotators: &args.annotators,
        overlap: args.overlap,
        seed: args.seed,
        addr: &args.addr,
        proxy_images: args.proxy_images,
        cache_dir,
    };
    let mut m = Manifest::new("serve", &config)?;
    m.input(&args.pairs)?.inputs(&args.model_outputs)?;
    m.output(&plan_path).output(&args.annotations);
    m.write(&manifest::beside(&plan_path))?;
    eprintln!(
        "plan: {} queues, {} assignments, {} overlap pairs -> {}",
        plan.queues.len(),
        plan.total_assignments(),
        plan.overlap.len(),
        plan_path.display()
    );
    if args.plan_only {
        return Ok(());
    }

    let store = AnnotationStore::open(&args.annotations)
        .with_context(|| format!("opening {}", args.annotations.display()))?;
    let mut svc = AnnotationService::new(plan, pairs, store)?;
    if args.proxy_images {
        svc = svc.with_image_cache(cache_dir);
    }
    let state = Arc::new(Mutex::new(svc));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        service::serve(listener, state).await?;
        Ok(())
    })
}
