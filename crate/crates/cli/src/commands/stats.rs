use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use coherence_core::caption::ConditionLabel;
use coherence_core::corpus::AnnotationStore;
use coherence_core::evaluate::{
    cohen_kappa, distribution_of_sets, emit_report, facet_table, genre_distribution, label_table, labelled_pairs,
    overlap_rate, relation_distribution, DistributionReport, GroupBy, OverlapBase, ReportFormat, Table,
};
use coherence_core::labelmap::single_label_dataset;
use coherence_core::{CoherenceRelation, ImageCaptionPair, Origin, RelationSet};
use serde::{Deserialize, Serialize};

use crate::args::{FormatArg, StatsArgs};
use crate::config::usage;
use crate::data;
use crate::manifest::{self, Manifest};

const KNOWN_TABLES: [&str; 5] = ["1", "2", "4-gt", "5", "genre"];

#[derive(Debug, Serialize)]
struct StatsConfig<'a> {
    annotations: &'a Path,
    pairs: &'a Path,
    model_outputs: Option<&'a Path>,
    requested: Option<&'a Path>,
    tables: Vec<String>,
    format: &'static str,
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct RequestedRow {
    pair_id: String,
    label: String,
}

#[derive(Debug, Serialize)]
struct Agreement {
    annotator_a: String,
    annotator_b: String,
    pairs: usize,
    pooled_kappa: Option<f64>,
    mean_kappa: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SingleLabelSummary {
    seed: u64,
    rows: usize,
    counts: Vec<(CoherenceRelation, usize)>,
    train_test: (usize, usize),
}

#[derive(Debug, Serialize)]
struct Summary {
    annotated_pairs: BTreeMap<String, usize>,
    /// Percent of ground-truth pairs bearing both Visible and Meta, per
    /// denominator convention.
    visible_meta_overlap: BTreeMap<&'static str, Option<f64>>,
    agreement: Vec<Agreement>,
    single_label: Option<SingleLabelSummary>,
}

fn parse_tables(spec: &str) -> Result<Vec<String>> {
    let tables: Vec<String> = spec.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
    if let Some(bad) = tables.iter().find(|t| !KNOWN_TABLES.contains(&t.as_str())) {
        return Err(usage(format!("--tables: unknown table {bad:?}; known: {}", KNOWN_TABLES.join(", "))));
    }
    if tables.is_empty() {
        return Err(usage("--tables: no tables requested"));
    }
    Ok(tables)
}

/// Agreement for every annotator pair over the pairs both annotated.
fn agreements(store: &AnnotationStore) -> Result<Vec<Agreement>> {
    let annotators = {
        let mut a = store.annotators();
        a.sort();
        a
    };
    let mut out = Vec::new();
    for (i, a) in annotators.iter().enumerate() {
        for b in &annotators[i + 1..] {
            let shared: Vec<_> = store
                .by_annotator(a)
                .filter(|r| store.get(&r.pair_id, b).is_some())
                .flat_map(|r| [r.clone(), store.get(&r.pair_id, b).expect("shared").clone()])
                .collect();
            if shared.is_empty() {
                continue;
            }
            let sub = AnnotationStore::from_records(shared)?;
            let k = cohen_kappa(&sub, a, b)?;
            out.push(Agreement {
                annotator_a: a.clone(),
                annotator_b: b.clone(),
                pairs: k.pairs,
                pooled_kappa: k.pooled.kappa,
                mean_kappa: k.mean_kappa,
            });
        }
    }
    Ok(out)
}

fn single_label_table(counts: &[(CoherenceRelation, usize)], total: usize) -> Table {
    Table {
        name: "table4_gt".into(),
        title: "Single-label distribution of ground-truth pairs".into(),
        columns: vec!["Relation".into(), "Ground-truth".into()],
        rows: counts
            .iter()
            .map(|(r, c)| {
                let pct = if total == 0 { 0.0 } else { *c as f64 / total as f64 * 100.0 };
                vec![r.as_str().to_string(), coherence_core::evaluate::report::fmt_pct(pct)]
            })
            .collect(),
    }
}

fn requested_table(rows: &[RequestedRow], labelled: &[(&ImageCaptionPair, RelationSet)]) -> Result<Table> {
    let sets: BTreeMap<&str, &RelationSet> = labelled.iter().map(|(p, rs)| (p.pair_id.as_str(), rs)).collect();
    let mut groups: BTreeMap<usize, Vec<&RelationSet>> = BTreeMap::new();
    for r in rows {
        let label: ConditionLabel = r.label.parse()?;
        if let Some(rs) = sets.get(r.pair_id.as_str()) {
            groups.entry(label.index()).or_default().push(rs);
        }
    }
    let reports: Vec<DistributionReport> = ConditionLabel::all()
        .filter_map(|l| groups.get(&l.index()).map(|g| distribution_of_sets(l.to_string(), g.iter().copied())))
        .collect();
    Ok(label_table(
        "table5",
        "Judged relations of generated captions by requested relation",
        &reports,
    ))
}

pub fn run(args: &StatsArgs) -> Result<()> {
    let tables = parse_tables(&args.tables)?;
    if tables.iter().any(|t| t == "5") && args.requested.is_none() {
        return Err(usage("table 5 needs --requested"));
    }
    let store = data::annotations(&args.annotations)?;
    let mut pairs = data::ground_truth(&args.pairs)?.pairs;
    if let Some(p) = &args.model_outputs {
        pairs.extend(data::model_outputs(p)?.pairs);
    }
    let labelled = labelled_pairs(&store, &pairs)?;
    let gt_sets: Vec<&RelationSet> = labelled
        .iter()
        .filter(|(p, _)| p.origin == Origin::GroundTruth)
        .map(|(_, rs)| rs)
        .collect();

    let by_origin = relation_distribution(&store, &pairs, GroupBy::Origin)?;
    let mut out_tables = Vec::new();
    let mut single_label = None;
    for t in &tables {
        match t.as_str() {
            "1" => out_tables.push(label_table("table1", "Relation distribution by origin", &by_origin)),
            "2" => out_tables.push(facet_table("table2", "Meta facets by origin", &by_origin)),
            "4-gt" => {
                let rows = single_label_dataset(&store, args.seed);
                let gt: std::collections::HashSet<&str> = labelled
                    .iter()
                    .filter(|(p, _)| p.origin == Origin::GroundTruth)
                    .map(|(p, _)| p.pair_id.as_str())
                    .collect();
                let rows: Vec<_> = rows.into_iter().filter(|r| gt.contains(r.pair_id.as_str())).collect();
                let counts: Vec<(CoherenceRelation, usize)> = CoherenceRelation::PRIMARY
                    .iter()
                    .map(|&r| (r, rows.iter().filter(|row| row.label.relation() == r).count()))
                    .collect();
                out_tables.push(single_label_table(&counts, rows.len()));
                single_label = Some(SingleLabelSummary {
                    seed: args.seed,
                    rows: rows.len(),
                    counts,
                    train_test: coherence_core::classify::split_sizes(rows.len()),
                });
            }
            "5" => {
                let requested: Vec<RequestedRow> = data::read_jsonl(args.requested.as_deref().expect("checked"))?;
                out_tables.push(requested_table(&requested, &labelled)?);
            }
            "genre" => {
                let gt_pairs: Vec<ImageCaptionPair> =
                    pairs.iter().filter(|p| p.origin == Origin::GroundTruth).cloned().collect();
                let gt_store = data::restrict(&store, &coherence_core::corpus::CaptionCorpus {
                    split: coherence_core::corpus::Split::Eval,
                    pairs: gt_pairs.clone(),
                })?;
                let mut reports = genre_distribution(&gt_store, &gt_pairs)?;
                reports.truncate(4);
                out_tables.push(label_table("genre", "Relation distribution in the top four domains", &reports));
            }
            _ => unreachable!("validated"),
        }
    }

    let format = match args.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Markdown => ReportFormat::Markdown,
        FormatArg::PlotdataJson => ReportFormat::PlotJson,
    };
    let mut written = emit_report(&out_tables, format, &args.out)?;

    let mut annotated_pairs = BTreeMap::new();
    for (p, _) in &labelled {
        *annotated_pairs.entry(p.origin.as_str().to_string()).or_insert(0) += 1;
    }
    let summary = Summary {
        annotated_pairs,
        visible_meta_overlap: OverlapBase::ALL
            .iter()
            .map(|&b| {
                (
                    b.as_str(),
                    overlap_rate(gt_sets.iter().copied(), CoherenceRelation::Visible, CoherenceRelation::Meta, b),
                )
            })
            .collect(),
        agreement: agreements(&store)?,
        single_label,
    };
    let summary_path = args.out.join("summary.json");
    data::write_json(&summary_path, &summary)?;
    written.push(summary_path);
    for p in &written {
        eprintln!("wrote {}", p.display());
    }

    let config = StatsConfig {
        annotations: &args.annotations,
        pairs: &args.pairs,
        model_outputs: args.model_outputs.as_deref(),
        requested: args.requested.as_deref(),
        tables,
        format: match args.format {
            FormatArg::Csv => "csv",
            FormatArg::Markdown => "markdown",
            FormatArg::PlotdataJson => "plotdata-json",
        },
        seed: args.seed,
    };
    let mut m = Manifest::new("stats", &config)?;
    m.input(&args.annotations)?.input(&args.pairs)?;
    m.inputs(&args.model_outputs)?.inputs(&args.requested)?;
    for p in &written {
        m.output(p);
    }
    m.write(&manifest::for_dir(&args.out))
}
