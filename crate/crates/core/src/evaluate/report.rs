use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::relation::{CoherenceRelation, MetaFacet};

use super::distribution::DistributionReport;

/// A rendered table: first column holds the row labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Markdown,
    Csv,
    PlotJson,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "plotdata-json" | "json" => Ok(ReportFormat::PlotJson),
            _ => Err(Error::config("format", format!("unknown report format {s:?}"))),
        }
    }
}

pub fn fmt_pct(v: f64) -> String {
    format!("{v:.2}")
}

/// One row per relation label, one column per group.
pub fn label_table(name: &str, title: &str, reports: &[DistributionReport]) -> Table {
    let mut columns = vec!["Relation".to_string()];
    columns.extend(reports.iter().map(|r| r.group.clone()));
    let rows = CoherenceRelation::ALL
        .iter()
        .map(|&l| {
            let mut row = vec![l.as_str().to_string()];
            row.extend(reports.iter().map(|r| fmt_pct(r.percent(l))));
            row
        })
        .collect();
    Table {
        name: name.into(),
        title: title.into(),
        columns,
        rows,
    }
}

/// One row per Meta facet, one column per group.
pub fn facet_table(name: &str, title: &str, reports: &[DistributionReport]) -> Table {
    let mut columns = vec!["Facet".to_string()];
    columns.extend(reports.iter().map(|r| r.group.clone()));
    let rows = MetaFacet::ALL
        .iter()
        .map(|&f| {
            let mut row = vec![f.as_str().to_string()];
            row.extend(reports.iter().map(|r| fmt_pct(r.facet_percent(f))));
            row
        })
        .collect();
    Table {
        name: name.into(),
        title: title.into(),
        columns,
        rows,
    }
}

fn markdown(table: &Table) -> String {
    let mut out = format!("## {}\n\n", table.title);
    out.push_str(&format!("| {} |\n", table.columns.join(" | ")));
    out.push_str(&format!(
        "|{}\n",
        table.columns.iter().map(|_| "---|").collect::<String>()
    ));
    for row in &table.rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

fn csv_bytes(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn plot_json(table: &Table) -> Result<Vec<u8>> {
    let categories: Vec<&str> = table.rows.iter().map(|r| r[0].as_str()).collect();
    let series: Vec<_> = table
        .columns
        .iter()
        .enumerate()
        .skip(1)
        .map(|(c, name)| {
            let values: Vec<Option<f64>> = table
                .rows
                .iter()
                .map(|r| r.get(c).and_then(|v| v.parse().ok()))
                .collect();
            json!({ "name": name, "values": values })
        })
        .collect();
    let doc = json!({
        "title": table.title,
        "categories": categories,
        "series": series,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes one file per table and returns the written paths in table order.
pub fn emit_report(tables: &[Table], format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if tables.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(tables.len());
    for t in tables {
        let (ext, bytes) = match format {
            ReportFormat::Markdown => ("md", markdown(t).into_bytes()),
            ReportFormat::Csv => ("csv", csv_bytes(t)?),
            ReportFormat::PlotJson => ("json", plot_json(t)?),
        };
        let path = out_dir.join(format!("{}.{ext}", t.name));
        fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a CSV written by [`emit_report`] back into a table.
pub fn read_csv_table(path: &Path, name: &str, title: &str) -> Result<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let columns = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Table {
        name: name.into(),
        title: title.into(),
        columns,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::distribution::distribution_of_sets;
    use crate::relation::{CoherenceRelation::*, RelationSet};

    fn sample() -> Table {
        let sets = [
            RelationSet::of([Visible]),
            RelationSet::new([Visible, Meta], [MetaFacet::How]),
        ];
        label_table("t1", "Relations", &[distribution_of_sets("gt", &sets)])
    }

    #[test]
    fn empty_list_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r");
        assert!(emit_report(&[], ReportFormat::Csv, &out).unwrap().is_empty());
        assert!(!out.exists());
    }

    #[test]
    fn markdown_rows_match_labels() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&[sample()], ReportFormat::Markdown, dir.path()).unwrap();
        let text = fs::read_to_string(&files[0]).unwrap();
        let body_rows = text.lines().filter(|l| l.starts_with("| ")).count() - 1;
        assert_eq!(body_rows, CoherenceRelation::ALL.len());
        assert!(text.contains("| Visible | 100.00 |"));
    }

    #[test]
    fn csv_round_trips_and_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let t = sample();
        let a = emit_report(std::slice::from_ref(&t), ReportFormat::Csv, &dir.path().join("a")).unwrap();
        let b = emit_report(std::slice::from_ref(&t), ReportFormat::Csv, &dir.path().join("b")).unwrap();
        assert_eq!(fs::read(&a[0]).unwrap(), fs::read(&b[0]).unwrap());
        assert_eq!(read_csv_table(&a[0], "t1", "Relations").unwrap(), t);
    }

    #[test]
    fn plot_json_has_series() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&[sample()], ReportFormat::PlotJson, dir.path()).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&fs::read(&files[0]).unwrap()).unwrap();
        assert_eq!(v["series"][0]["name"], "gt");
        assert_eq!(v["series"][0]["values"][4], 50.0);
        assert_eq!(v["categories"].as_array().unwrap().len(), 8);
    }
}
