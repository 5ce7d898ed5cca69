//! Coherence relations between images and their captions.
//!
//! - [`relation`]: relation labels, relation sets and annotation records.
//! - [`corpus`]: caption files, the annotation store, feature files, image cache.
//! - [`labelmap`]: multi-label to single-label mapping.
//! - [`classify`]: text/image encoders and the fusion relation classifier.
//! - [`caption`]: subword vocabulary and the relation-conditioned captioner.
//! - [`evaluate`]: distributions, agreement, F1, CIDEr and report emission.
//! - [`service`]: annotation assignment and the JSON HTTP API.

pub mod caption;
pub mod classify;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod labelmap;
pub mod nn;
pub mod relation;
pub mod service;

pub use error::{Error, Result};
pub use relation::{
    format_label, parse_label, validate_relation_set, AnnotationRecord, CoherenceRelation,
    ImageCaptionPair, MetaFacet, Origin, RelationSet, Violation,
};
