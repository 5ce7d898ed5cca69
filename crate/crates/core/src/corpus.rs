//! Caption corpus ingestion, the annotation store, precomputed feature files
//! and the image cache.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::relation::{
    validate_relation_set, AnnotationRecord, CoherenceRelation, ImageCaptionPair, MetaFacet,
    Origin, RelationSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "val" | "dev" => Ok(Split::Validation),
            "eval" | "test" => Ok(Split::Eval),
            _ => Err(Error::config("split", format!("unknown split {s:?}"))),
        }
    }
}

/// Ordered pairs loaded from one caption file.
#[derive(Debug, Clone)]
pub struct CaptionCorpus {
    pub split: Split,
    pub pairs: Vec<ImageCaptionPair>,
}

impl CaptionCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, pair_id: &str) -> Option<&ImageCaptionPair> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }

    pub fn index(&self) -> HashMap<&str, &ImageCaptionPair> {
        self.pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect()
    }
}

/// Prefix of pair ids for machine-authored captions.
pub const MODEL_PREFIX: &str = "model";

/// Loads a `caption<TAB>url` file of human-authored captions. Pair ids are
/// `<split>:<zero-based line>`.
pub fn load_captions_tsv(path: impl AsRef<Path>, split: Split) -> Result<CaptionCorpus> {
    let pairs = read_tsv(path.as_ref(), split.as_str(), Origin::GroundTruth)?;
    Ok(CaptionCorpus { split, pairs })
}

/// Loads machine-authored captions in the same format; pair ids are
/// `model:<zero-based line>`.
pub fn load_model_outputs_tsv(path: impl AsRef<Path>, split: Split) -> Result<CaptionCorpus> {
    let pairs = read_tsv(path.as_ref(), MODEL_PREFIX, Origin::ModelOutput)?;
    Ok(CaptionCorpus { split, pairs })
}

fn read_tsv(path: &Path, prefix: &str, origin: Origin) -> Result<Vec<ImageCaptionPair>> {
    let text = fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let malformed = |line: usize, reason: &str| Error::MalformedLine {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    };
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let (caption, url) = line
            .split_once('\t')
            .ok_or_else(|| malformed(i, "expected caption<TAB>url"))?;
        if url.contains('\t') {
            return Err(malformed(i, "more than two columns"));
        }
        let caption = caption.trim();
        if caption.is_empty() {
            return Err(malformed(i, "empty caption"));
        }
        let url = url.trim();
        let source_domain = domain_of_url(url).map_err(|_| malformed(i, "invalid url"))?;
        pairs.push(ImageCaptionPair {
            pair_id: format!("{prefix}:{i}"),
            image_ref: url.to_string(),
            caption: caption.to_string(),
            source_domain,
            origin,
        });
    }
    Ok(pairs)
}

/// Lowercased hostname with a leading `www.` removed.
pub fn domain_of_url(raw: &str) -> Result<String> {
    let parsed = url::Url::parse(raw.trim()).map_err(|_| Error::InvalidUrl(raw.to_string()))?;
    let host = parsed
        .host_str()
        .filter(|h| !h.is_empty())
        .ok_or_else(|| Error::InvalidUrl(raw.to_string()))?
        .to_ascii_lowercase();
    Ok(host.strip_prefix("www.").unwrap_or(&host).to_string())
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serialized field order of the annotation JSON-lines schema.
#[derive(Serialize)]
struct AnnotationLine<'a> {
    pair_id: &'a str,
    annotator_id: &'a str,
    relations: Vec<&'static str>,
    facets: Vec<&'static str>,
    comment: Option<&'a str>,
    timestamp: i64,
}

pub fn annotation_to_json(record: &AnnotationRecord) -> String {
    let line = AnnotationLine {
        pair_id: &record.pair_id,
        annotator_id: &record.annotator_id,
        relations: record.labels.relations.iter().map(|r| r.as_str()).collect(),
        facets: record.labels.facets.iter().map(|f| f.as_str()).collect(),
        comment: record.comment.as_deref(),
        timestamp: record.timestamp,
    };
    serde_json::to_string(&line).expect("annotation serializes")
}

const ANNOTATION_KEYS: [&str; 6] = [
    "pair_id",
    "annotator_id",
    "relations",
    "facets",
    "comment",
    "timestamp",
];

/// Parses one JSON line; `line` is only used for error reporting.
pub fn annotation_from_json(text: &str, line: usize) -> Result<AnnotationRecord> {
    let violation = |field: &str, reason: String| Error::SchemaViolation {
        line,
        field: field.to_string(),
        reason,
    };
    let value: Value =
        serde_json::from_str(text).map_err(|e| violation("<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| violation("<record>", "expected a JSON object".into()))?;
    if let Some(extra) = obj.keys().find(|k| !ANNOTATION_KEYS.contains(&k.as_str())) {
        return Err(violation(extra, "unexpected key".into()));
    }
    let string_field = |key: &str| -> Result<String> {
        match obj.get(key) {
            Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
            Some(Value::String(_)) => Err(violation(key, "must not be empty".into())),
            Some(_) => Err(violation(key, "expected a string".into())),
            None => Err(violation(key, "missing".into())),
        }
    };
    let string_array = |key: &str| -> Result<Vec<String>> {
        match obj.get(key) {
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| violation(key, "expected an array of strings".into()))
                })
                .collect(),
            Some(_) => Err(violation(key, "expected an array".into())),
            None => Err(violation(key, "missing".into())),
        }
    };

    let pair_id = string_field("pair_id")?;
    let annotator_id = string_field("annotator_id")?;
    let relations = string_array("relations")?
        .iter()
        .map(|s| s.parse::<CoherenceRelation>())
        .collect::<Result<_>>()
        .map_err(|e| violation("relations", e.to_string()))?;
    let facets = string_array("facets")?
        .iter()
        .map(|s| s.parse::<MetaFacet>())
        .collect::<Result<_>>()
        .map_err(|e| violation("facets", e.to_string()))?;
    let comment = match obj.get("comment") {
        Some(Value::Null) | None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(violation("comment", "expected a string or null".into())),
    };
    let timestamp = match obj.get("timestamp") {
        Some(v) => v
            .as_i64()
            .ok_or_else(|| violation("timestamp", "expected an integer".into()))?,
        None => return Err(violation("timestamp", "missing".into())),
    };
    let labels = RelationSet { relations, facets };
    if let Err(violations) = validate_relation_set(&labels) {
        let field = if violations
            .iter()
            .any(|v| matches!(v, crate::relation::Violation::FacetWithoutMeta))
        {
            "facets"
        } else {
            "relations"
        };
        let reason = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(violation(field, reason));
    }
    Ok(AnnotationRecord {
        pair_id,
        annotator_id,
        labels,
        comment,
        timestamp,
    })
}

/// Append-only collection of annotation records, optionally backed by a
/// JSON-lines file that every append is flushed to before returning.
#[derive(Debug, Default)]
pub struct AnnotationStore {
    records: Vec<AnnotationRecord>,
    by_key: HashMap<(String, String), usize>,
    by_pair: HashMap<String, Vec<usize>>,
    sink: Option<PathBuf>,
}

impl Clone for AnnotationStore {
    /// Clones the records; the clone is detached from any backing file.
    fn clone(&self) -> Self {
        AnnotationStore {
            records: self.records.clone(),
            by_key: self.by_key.clone(),
            by_pair: self.by_pair.clone(),
            sink: None,
        }
    }
}

impl PartialEq for AnnotationStore {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl AnnotationStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads every record from a JSON-lines file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        let mut store = AnnotationStore::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = annotation_from_json(&line, i + 1)?;
            store.insert(record)?;
        }
        Ok(store)
    }

    /// Loads `path` if it exists (an empty store otherwise) and persists all
    /// subsequent appends to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut store = if path.exists() {
            Self::load(path)?
        } else {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            File::create(path)?;
            AnnotationStore::new()
        };
        store.sink = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn from_records(records: impl IntoIterator<Item = AnnotationRecord>) -> Result<Self> {
        let mut store = AnnotationStore::new();
        for r in records {
            store.append(r)?;
        }
        Ok(store)
    }

    fn insert(&mut self, record: AnnotationRecord) -> Result<()> {
        let key = (record.pair_id.clone(), record.annotator_id.clone());
        if self.by_key.contains_key(&key) {
            return Err(Error::DuplicateAnnotation {
                pair_id: key.0,
                annotator_id: key.1,
            });
        }
        let idx = self.records.len();
        self.by_pair
            .entry(record.pair_id.clone())
            .or_default()
            .push(idx);
        self.by_key.insert(key, idx);
        self.records.push(record);
        Ok(())
    }

    /// Validates and appends a record. With a backing file the record is
    /// written and synced before this returns.
    pub fn append(&mut self, record: AnnotationRecord) -> Result<()> {
        validate_relation_set(&record.labels)
            .map_err(|v| Error::Validation(v.iter().map(|v| v.to_string()).collect()))?;
        let key = (record.pair_id.clone(), record.annotator_id.clone());
        if self.by_key.contains_key(&key) {
            return Err(Error::DuplicateAnnotation {
                pair_id: key.0,
                annotator_id: key.1,
            });
        }
        if let Some(path) = &self.sink {
            let mut file = OpenOptions::new().append(true).create(true).open(path)?;
            writeln!(file, "{}", annotation_to_json(&record))?;
            file.sync_data()?;
        }
        self.insert(record)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for r in &self.records {
            writeln!(out, "{}", annotation_to_json(r))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, pair_id: &str, annotator_id: &str) -> Option<&AnnotationRecord> {
        self.by_key
            .get(&(pair_id.to_string(), annotator_id.to_string()))
            .map(|&i| &self.records[i])
    }

    pub fn for_pair(&self, pair_id: &str) -> impl Iterator<Item = &AnnotationRecord> {
        self.by_pair
            .get(pair_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    pub fn by_annotator<'a>(
        &'a self,
        annotator_id: &'a str,
    ) -> impl Iterator<Item = &'a AnnotationRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.annotator_id == annotator_id)
    }

    pub fn annotators(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.annotator_id.as_str()))
            .map(|r| r.annotator_id.clone())
            .collect()
    }

    /// Pair ids in first-annotated order.
    pub fn pair_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.pair_id.as_str()))
            .map(|r| r.pair_id.clone())
            .collect()
    }

    /// Union of every annotator's labels for a pair.
    pub fn union_labels(&self, pair_id: &str) -> Option<RelationSet> {
        self.for_pair(pair_id)
            .map(|r| r.labels.clone())
            .reduce(|a, b| a.union(&b))
    }
}

/// Precomputed text and image vectors keyed by pair id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureFile {
    entries: HashMap<String, FeatureEntry>,
    order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub pair_id: String,
    pub text_vec: Vec<f64>,
    pub image_vec: Vec<f64>,
}

impl FeatureFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = &FeatureEntry> {
        self.order.iter().map(|id| &self.entries[id])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        let mut features = FeatureFile::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FeatureEntry =
                serde_json::from_str(&line).map_err(|e| Error::SchemaViolation {
                    line: i + 1,
                    field: "<record>".into(),
                    reason: e.to_string(),
                })?;
            features.insert(entry)?;
        }
        Ok(features)
    }

    pub fn insert(&mut self, entry: FeatureEntry) -> Result<()> {
        if self.entries.contains_key(&entry.pair_id) {
            return Err(Error::DuplicatePair(entry.pair_id));
        }
        self.order.push(entry.pair_id.clone());
        self.entries.insert(entry.pair_id.clone(), entry);
        Ok(())
    }

    pub fn get(&self, pair_id: &str) -> Result<&FeatureEntry> {
        self.entries
            .get(pair_id)
            .ok_or_else(|| Error::MissingFeature(pair_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for id in &self.order {
            serde_json::to_writer(&mut out, &self.entries[id])?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchMode {
    Network,
    Fixture,
}

/// Source of image bytes in network mode.
pub trait ImageTransport: Send + Sync {
    fn get(&self, image_ref: &str) -> Result<Vec<u8>>;
}

/// Reads local paths and `file://` URLs; other schemes are reported as
/// network failures so callers can plug in a real client.
#[derive(Debug, Default)]
pub struct LocalTransport;

impl ImageTransport for LocalTransport {
    fn get(&self, image_ref: &str) -> Result<Vec<u8>> {
        let path = image_ref.strip_prefix("file://").unwrap_or(image_ref);
        if path.contains("://") {
            return Err(Error::Network {
                url: image_ref.to_string(),
                reason: "no network transport configured".into(),
            });
        }
        fs::read(path).map_err(|e| Error::Network {
            url: image_ref.to_string(),
            reason: e.to_string(),
        })
    }
}

/// Image cache. Blobs are stored under `blobs/<sha256 of bytes>`; a
/// reference index maps `sha256(image_ref)` to the blob. Fixture mode reads
/// `fixtures/<sha256(image_ref)>` and never calls the transport.
pub struct ImageFetcher {
    cache_dir: PathBuf,
    mode: FetchMode,
    transport: Box<dyn ImageTransport>,
    transport_calls: AtomicUsize,
}

impl ImageFetcher {
    pub fn new(cache_dir: impl Into<PathBuf>, mode: FetchMode) -> Self {
        Self::with_transport(cache_dir, mode, Box::new(LocalTransport))
    }

    pub fn with_transport(
        cache_dir: impl Into<PathBuf>,
        mode: FetchMode,
        transport: Box<dyn ImageTransport>,
    ) -> Self {
        ImageFetcher {
            cache_dir: cache_dir.into(),
            mode,
            transport,
            transport_calls: AtomicUsize::new(0),
        }
    }

    pub fn transport_calls(&self) -> usize {
        self.transport_calls.load(Ordering::SeqCst)
    }

    pub fn fixture_path(cache_dir: &Path, image_ref: &str) -> PathBuf {
        cache_dir
            .join("fixtures")
            .join(content_hash(image_ref.as_bytes()))
    }

    /// Writes a fixture for `image_ref`.
    pub fn seed_fixture(cache_dir: &Path, image_ref: &str, bytes: &[u8]) -> Result<()> {
        let path = Self::fixture_path(cache_dir, image_ref);
        fs::create_dir_all(path.parent().expect("fixture dir"))?;
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn fetch(&self, image_ref: &str) -> Result<Vec<u8>> {
        match self.mode {
            FetchMode::Fixture => {
                let path = Self::fixture_path(&self.cache_dir, image_ref);
                fs::read(&path).map_err(|_| Error::MissingFixture(image_ref.to_string()))
            }
            FetchMode::Network => {
                let ref_path = self
                    .cache_dir
                    .join("refs")
                    .join(content_hash(image_ref.as_bytes()));
                if let Ok(blob_id) = fs::read_to_string(&ref_path) {
                    if let Ok(bytes) = fs::read(self.cache_dir.join("blobs").join(blob_id.trim()))
                    {
                        return Ok(bytes);
                    }
                }
                self.transport_calls.fetch_add(1, Ordering::SeqCst);
                let bytes = self.transport.get(image_ref)?;
                let blob_id = content_hash(&bytes);
                fs::create_dir_all(self.cache_dir.join("blobs"))?;
                fs::create_dir_all(self.cache_dir.join("refs"))?;
                fs::write(self.cache_dir.join("blobs").join(&blob_id), &bytes)?;
                fs::write(ref_path, blob_id)?;
                Ok(bytes)
            }
        }
    }
}

/// Deterministic stand-in image content for fixture corpora.
pub fn synthetic_image_bytes(image_ref: &str, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut block = Sha256::digest(image_ref.as_bytes());
    while out.len() < len {
        out.extend_from_slice(&block);
        block = Sha256::digest(block);
    }
    out.truncate(len);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::CoherenceRelation::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loads_tsv_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.tsv",
            "forest on a sunny day\thttp://x.example/a.jpg\nactor at the premiere\thttps://www.GettyImages.com/p/1\n",
        );
        let corpus = load_captions_tsv(&p, Split::Train).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.pairs[0].caption, "forest on a sunny day");
        assert_eq!(corpus.pairs[0].pair_id, "train:0");
        assert_eq!(corpus.pairs[1].pair_id, "train:1");
        assert_eq!(corpus.pairs[1].source_domain, "gettyimages.com");
        assert_eq!(corpus.pairs[0].origin, Origin::GroundTruth);
    }

    #[test]
    fn model_outputs_get_model_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.tsv", "a dog\thttp://img.example/1.jpg\n");
        let corpus = load_model_outputs_tsv(&p, Split::Eval).unwrap();
        assert_eq!(corpus.pairs[0].pair_id, "model:0");
        assert_eq!(corpus.pairs[0].origin, Origin::ModelOutput);
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.tsv", "");
        assert!(matches!(
            load_captions_tsv(&p, Split::Train),
            Err(Error::EmptyFile(_))
        ));
    }

    #[test]
    fn missing_tab_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "m.tsv",
            "ok\thttp://a.example/x\nno tab here\n",
        );
        match load_captions_tsv(&p, Split::Train) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn domains() {
        assert_eq!(
            domain_of_url("https://www.gettyimages.com/p/1").unwrap(),
            "gettyimages.com"
        );
        assert_eq!(
            domain_of_url("http://DAILYMAIL.co.uk/x").unwrap(),
            "dailymail.co.uk"
        );
        assert!(matches!(
            domain_of_url("not a url"),
            Err(Error::InvalidUrl(_))
        ));
    }

    fn record(pair: &str, annotator: &str, labels: RelationSet) -> AnnotationRecord {
        AnnotationRecord {
            pair_id: pair.into(),
            annotator_id: annotator.into(),
            labels,
            comment: None,
            timestamp: 1_600_000_000,
        }
    }

    #[test]
    fn append_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let mut store = AnnotationStore::open(&path).unwrap();
        let mut r = record(
            "train:0",
            "ann1",
            RelationSet::new([Visible, Meta], [MetaFacet::Where]),
        );
        r.comment = Some("minor error".into());
        store.append(r.clone()).unwrap();
        let loaded = AnnotationStore::load(&path).unwrap();
        assert_eq!(loaded.records(), &[r]);
    }

    #[test]
    fn duplicate_append_rejected() {
        let mut store = AnnotationStore::new();
        store
            .append(record("p", "a", RelationSet::of([Visible])))
            .unwrap();
        let err = store
            .append(record("p", "a", RelationSet::of([Story])))
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateAnnotation { .. }));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn facet_without_meta_is_a_schema_violation() {
        let line = r#"{"pair_id":"p","annotator_id":"a","relations":["Visible"],"facets":["When"],"comment":null,"timestamp":1}"#;
        match annotation_from_json(line, 3) {
            Err(Error::SchemaViolation { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "facets");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_keys_are_exact() {
        let r = record("p", "a", RelationSet::new([Meta], [MetaFacet::How]));
        assert_eq!(
            annotation_to_json(&r),
            r#"{"pair_id":"p","annotator_id":"a","relations":["Meta"],"facets":["How"],"comment":null,"timestamp":1600000000}"#
        );
        let extra = r#"{"pair_id":"p","annotator_id":"a","relations":["Meta"],"facets":[],"comment":null,"timestamp":1,"x":2}"#;
        assert!(matches!(
            annotation_from_json(extra, 1),
            Err(Error::SchemaViolation { field, .. }) if field == "x"
        ));
    }

    #[test]
    fn union_labels_merges_annotators() {
        let store = AnnotationStore::from_records([
            record("p", "a", RelationSet::of([Visible])),
            record("p", "b", RelationSet::new([Meta], [MetaFacet::When])),
        ])
        .unwrap();
        assert_eq!(
            store.union_labels("p").unwrap(),
            RelationSet::new([Visible, Meta], [MetaFacet::When])
        );
        assert!(store.union_labels("q").is_none());
    }

    #[test]
    fn fixture_fetch_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = synthetic_image_bytes("http://x.example/a.jpg", 100);
        ImageFetcher::seed_fixture(dir.path(), "http://x.example/a.jpg", &bytes).unwrap();
        let f = ImageFetcher::new(dir.path(), FetchMode::Fixture);
        let a = f.fetch("http://x.example/a.jpg").unwrap();
        let b = f.fetch("http://x.example/a.jpg").unwrap();
        assert_eq!(a, bytes);
        assert_eq!(a, b);
        assert_eq!(f.transport_calls(), 0);
        assert!(matches!(
            f.fetch("http://x.example/unknown.jpg"),
            Err(Error::MissingFixture(_))
        ));
    }

    struct Counting(Vec<u8>);

    impl ImageTransport for Counting {
        fn get(&self, _: &str) -> Result<Vec<u8>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn cache_hit_skips_transport() {
        let dir = tempfile::tempdir().unwrap();
        let f = ImageFetcher::with_transport(
            dir.path(),
            FetchMode::Network,
            Box::new(Counting(vec![1, 2, 3])),
        );
        assert_eq!(f.fetch("http://a.example/1.jpg").unwrap(), vec![1, 2, 3]);
        assert_eq!(f.fetch("http://a.example/1.jpg").unwrap(), vec![1, 2, 3]);
        assert_eq!(f.transport_calls(), 1);
        assert!(dir
            .path()
            .join("blobs")
            .join(content_hash(&[1, 2, 3]))
            .exists());
    }

    #[test]
    fn remote_ref_without_transport_is_retryable() {
        let dir = tempfile::tempdir().unwrap();
        let f = ImageFetcher::new(dir.path(), FetchMode::Network);
        let err = f.fetch("http://a.example/1.jpg").unwrap_err();
        assert!(err.is_retryable());
    }

    #[test]
    fn feature_file_round_trip_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let mut ff = FeatureFile::new();
        ff.insert(FeatureEntry {
            pair_id: "p".into(),
            text_vec: vec![0.5, 1.0],
            image_vec: vec![0.25; 64],
        })
        .unwrap();
        let path = dir.path().join("f.jsonl");
        ff.save(&path).unwrap();
        let back = FeatureFile::load(&path).unwrap();
        assert_eq!(back, ff);
        assert!(matches!(back.get("q"), Err(Error::MissingFeature(_))));
    }
}
