use anyhow::Result;
use coherence_core::labelmap::single_label_dataset;
use serde::Serialize;

use crate::args::MapLabelsArgs;
use crate::data;
use crate::manifest::{self, Manifest};

#[derive(Debug, Serialize)]
struct MapLabelsConfig<'a> {
    input: &'a std::path::Path,
    seed: u64,
}

pub fn run(args: &MapLabelsArgs) -> Result<()> {
    let store = data::annotations(&args.input)?;
    let rows = single_label_dataset(&store, args.seed);
    data::write_jsonl(&args.out, &rows)?;
    eprintln!(
        "mapped {} of {} annotated pairs (others carry no primary relation)",
        rows.len(),
        store.pair_ids().len()
    );
    let mut m = Manifest::new(
        "map-labels",
        &MapLabelsConfig {
            input: &args.input,
            seed: args.seed,
        },
    )?;
    m.input(&args.input)?.output(&args.out);
    m.write(&manifest::beside(&args.out))
}
