use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotationStore;
use crate::error::{Error, Result};
use crate::evaluate::{kappa_for_sets, KappaSummary};
use crate::relation::{
    validate_relation_set, AnnotationRecord, CoherenceRelation, ImageCaptionPair, MetaFacet, RelationSet,
};

use super::plan::AssignmentPlan;

/// One selectable label as the annotation UI renders it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDescriptor {
    pub name: String,
    pub help: String,
    /// Must be the only label on a pair when selected.
    pub exclusive: bool,
    /// Sub-choices offered once this label is selected.
    pub facets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    pub labels: Vec<LabelDescriptor>,
    pub allows_comment: bool,
}

impl SchemaDescriptor {
    /// The coherence relation taxonomy with Meta facets.
    pub fn coherence() -> Self {
        SchemaDescriptor {
            labels: CoherenceRelation::ALL
                .iter()
                .map(|&r| LabelDescriptor {
                    name: r.as_str().to_string(),
                    help: r.help_text().to_string(),
                    exclusive: r.is_exclusive(),
                    facets: if r == CoherenceRelation::Meta {
                        MetaFacet::ALL.iter().map(|f| f.as_str().to_string()).collect()
                    } else {
                        Vec::new()
                    },
                })
                .collect(),
            allows_comment: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextItem {
    Item {
        pair_id: String,
        caption: String,
        image_url: String,
        /// Path of the locally cached copy, when the server proxies images.
        image_cache: Option<String>,
        /// Zero-based position in the annotator's queue.
        position: usize,
        queue_len: usize,
        schema: SchemaDescriptor,
    },
    Done {
        completed: usize,
        queue_len: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub pair_id: String,
    pub relations: Vec<String>,
    #[serde(default)]
    pub facets: Vec<String>,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub pair_id: String,
    pub annotator_id: String,
    pub timestamp: i64,
    /// True when this repeated an already stored payload.
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub annotator_id: String,
    pub assigned: usize,
    pub completed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressReport {
    pub annotators: Vec<AnnotatorProgress>,
    pub assigned: usize,
    pub completed: usize,
    pub pairs: usize,
    /// Pairs with every assignment completed.
    pub pairs_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStatus {
    pub overlap_pairs: usize,
    /// Overlap pairs annotated by both assigned annotators.
    pub completed_pairs: usize,
    /// False when no overlap pair is complete or kappa is undefined.
    pub defined: bool,
    /// Pooled kappa over every (pair, label) decision.
    pub kappa: Option<f64>,
    pub summary: Option<KappaSummary>,
}

type Clock = Box<dyn Fn() -> i64 + Send + Sync>;

/// Annotation backend state: plan, pair lookup and the durable store.
pub struct AnnotationService {
    plan: AssignmentPlan,
    pairs: HashMap<String, ImageCaptionPair>,
    store: AnnotationStore,
    schema: SchemaDescriptor,
    image_cache: Option<PathBuf>,
    clock: Clock,
}

fn now() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

impl AnnotationService {
    /// Every planned pair must be present in `pairs`.
    pub fn new(plan: AssignmentPlan, pairs: impl IntoIterator<Item = ImageCaptionPair>, store: AnnotationStore) -> Result<Self> {
        let pairs: HashMap<String, ImageCaptionPair> =
            pairs.into_iter().map(|p| (p.pair_id.clone(), p)).collect();
        for q in &plan.queues {
            if let Some(missing) = q.pair_ids.iter().find(|p| !pairs.contains_key(*p)) {
                return Err(Error::UnknownPair(missing.clone()));
            }
        }
        Ok(AnnotationService {
            plan,
            pairs,
            store,
            schema: SchemaDescriptor::coherence(),
            image_cache: None,
            clock: Box::new(now),
        })
    }

    /// Serves cached image bytes from `dir` (see [`crate::corpus::ImageFetcher`]).
    pub fn with_image_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.image_cache = Some(dir.into());
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> i64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn plan(&self) -> &AssignmentPlan {
        &self.plan
    }

    pub fn store(&self) -> &AnnotationStore {
        &self.store
    }

    pub fn schema(&self) -> &SchemaDescriptor {
        &self.schema
    }

    pub fn image_cache(&self) -> Option<&PathBuf> {
        self.image_cache.as_ref()
    }

    pub fn pair(&self, pair_id: &str) -> Option<&ImageCaptionPair> {
        self.pairs.get(pair_id)
    }

    fn queue(&self, annotator_id: &str) -> Result<&[String]> {
        self.plan
            .queue(annotator_id)
            .ok_or_else(|| Error::UnknownAnnotator(annotator_id.to_string()))
    }

    /// Earliest queued pair the annotator has not annotated yet.
    pub fn next_item(&self, annotator_id: &str) -> Result<NextItem> {
        let queue = self.queue(annotator_id)?;
        let open = queue
            .iter()
            .enumerate()
            .find(|(_, p)| self.store.get(p, annotator_id).is_none());
        Ok(match open {
            None => NextItem::Done {
                completed: queue.len(),
                queue_len: queue.len(),
            },
            Some((position, pair_id)) => {
                let pair = &self.pairs[pair_id];
                NextItem::Item {
                    pair_id: pair_id.clone(),
                    caption: pair.caption.clone(),
                    image_url: pair.image_ref.clone(),
                    image_cache: self.image_cache.as_ref().map(|_| format!("/image/{pair_id}")),
                    position,
                    queue_len: queue.len(),
                    schema: self.schema.clone(),
                }
            }
        })
    }

    fn parse_request(req: &SubmitRequest) -> Result<RelationSet> {
        let mut errors = Vec::new();
        let relations: Vec<CoherenceRelation> = req
            .relations
            .iter()
            .filter_map(|r| r.parse().map_err(|e: Error| errors.push(e.to_string())).ok())
            .collect();
        let facets: Vec<MetaFacet> = req
            .facets
            .iter()
            .filter_map(|f| f.parse().map_err(|e: Error| errors.push(e.to_string())).ok())
            .collect();
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let set = RelationSet::new(relations, facets);
        validate_relation_set(&set).map_err(|v| Error::Validation(v.iter().map(|v| v.to_string()).collect()))?;
        Ok(set)
    }

    /// Validates and durably appends a judgment. Repeating the stored payload
    /// returns the original acknowledgement.
    pub fn submit(&mut self, annotator_id: &str, req: &SubmitRequest) -> Result<SubmitAck> {
        let queue = self.queue(annotator_id)?;
        if !queue.contains(&req.pair_id) {
            return Err(Error::NotAssigned {
                pair_id: req.pair_id.clone(),
                annotator_id: annotator_id.to_string(),
            });
        }
        let labels = Self::parse_request(req)?;
        if let Some(prior) = self.store.get(&req.pair_id, annotator_id) {
            if prior.labels == labels && prior.comment == req.comment {
                return Ok(SubmitAck {
                    pair_id: prior.pair_id.clone(),
                    annotator_id: prior.annotator_id.clone(),
                    timestamp: prior.timestamp,
                    duplicate: true,
                });
            }
            return Err(Error::AlreadyAnnotated {
                pair_id: req.pair_id.clone(),
                annotator_id: annotator_id.to_string(),
            });
        }
        let record = AnnotationRecord {
            pair_id: req.pair_id.clone(),
            annotator_id: annotator_id.to_string(),
            labels,
            comment: req.comment.clone(),
            timestamp: (self.clock)(),
        };
        let timestamp = record.timestamp;
        self.store.append(record)?;
        Ok(SubmitAck {
            pair_id: req.pair_id.clone(),
            annotator_id: annotator_id.to_string(),
            timestamp,
            duplicate: false,
        })
    }

    pub fn progress(&self) -> ProgressReport {
        let annotators: Vec<AnnotatorProgress> = self
            .plan
            .queues
            .iter()
            .map(|q| AnnotatorProgress {
                annotator_id: q.annotator_id.clone(),
                assigned: q.pair_ids.len(),
                completed: q
                    .pair_ids
                    .iter()
                    .filter(|p| self.store.get(p, &q.annotator_id).is_some())
                    .count(),
            })
            .collect();
        let mut holders: HashMap<&str, (usize, usize)> = HashMap::new();
        for q in &self.plan.queues {
            for p in &q.pair_ids {
                let e = holders.entry(p.as_str()).or_default();
                e.0 += 1;
                if self.store.get(p, &q.annotator_id).is_some() {
                    e.1 += 1;
                }
            }
        }
        ProgressReport {
            assigned: annotators.iter().map(|a| a.assigned).sum(),
            completed: annotators.iter().map(|a| a.completed).sum(),
            pairs: holders.len(),
            pairs_completed: holders.values().filter(|(n, done)| n == done).count(),
            annotators,
        }
    }

    /// Kappa over overlap pairs that both assigned annotators have completed.
    pub fn agreement(&self) -> Result<AgreementStatus> {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for pair in &self.plan.overlap {
            let Some((a, b)) = self.plan.overlap_annotators(pair) else {
                continue;
            };
            if let (Some(x), Some(y)) = (self.store.get(pair, a), self.store.get(pair, b)) {
                first.push(x.labels.clone());
                second.push(y.labels.clone());
            }
        }
        let completed_pairs = first.len();
        let summary = (completed_pairs > 0)
            .then(|| kappa_for_sets(&first, &second))
            .transpose()?;
        let kappa = summary.as_ref().and_then(|s| s.pooled.kappa);
        Ok(AgreementStatus {
            overlap_pairs: self.plan.overlap.len(),
            completed_pairs,
            defined: kappa.is_some(),
            kappa,
            summary,
        })
    }
}
