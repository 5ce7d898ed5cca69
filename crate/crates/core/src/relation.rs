//! Coherence relations between an image and its caption, and the records
//! annotators produce about them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A coherence relation label. The first six members are the classifier
/// target classes; the two `Other*` members only appear in annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoherenceRelation {
    Visible,
    Subjective,
    Action,
    Story,
    Meta,
    Irrelevant,
    OtherText,
    OtherGibberish,
}

impl CoherenceRelation {
    pub const ALL: [CoherenceRelation; 8] = [
        CoherenceRelation::Visible,
        CoherenceRelation::Subjective,
        CoherenceRelation::Action,
        CoherenceRelation::Story,
        CoherenceRelation::Meta,
        CoherenceRelation::Irrelevant,
        CoherenceRelation::OtherText,
        CoherenceRelation::OtherGibberish,
    ];

    pub const PRIMARY: [CoherenceRelation; 6] = [
        CoherenceRelation::Visible,
        CoherenceRelation::Subjective,
        CoherenceRelation::Action,
        CoherenceRelation::Story,
        CoherenceRelation::Meta,
        CoherenceRelation::Irrelevant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CoherenceRelation::Visible => "Visible",
            CoherenceRelation::Subjective => "Subjective",
            CoherenceRelation::Action => "Action",
            CoherenceRelation::Story => "Story",
            CoherenceRelation::Meta => "Meta",
            CoherenceRelation::Irrelevant => "Irrelevant",
            CoherenceRelation::OtherText => "Other-Text",
            CoherenceRelation::OtherGibberish => "Other-Gibberish",
        }
    }

    pub fn is_primary(self) -> bool {
        self.primary_index().is_some()
    }

    /// Class index in `PRIMARY`, or `None` for the `Other*` labels.
    pub fn primary_index(self) -> Option<usize> {
        Self::PRIMARY.iter().position(|&r| r == self)
    }

    /// Labels that must be the only member of a set when present.
    pub fn is_exclusive(self) -> bool {
        matches!(
            self,
            CoherenceRelation::Irrelevant
                | CoherenceRelation::OtherText
                | CoherenceRelation::OtherGibberish
        )
    }

    pub fn help_text(self) -> &'static str {
        match self {
            CoherenceRelation::Visible => {
                "Caption recognizably characterizes what is depicted in the image."
            }
            CoherenceRelation::Subjective => {
                "Caption gives the speaker's reaction to or evaluation of the image."
            }
            CoherenceRelation::Action => {
                "Caption describes an extended process of which the image is a snapshot."
            }
            CoherenceRelation::Story => {
                "Caption is a free-standing description of circumstances or background."
            }
            CoherenceRelation::Meta => {
                "Caption speaks about how, when or where the photo was produced or presented."
            }
            CoherenceRelation::Irrelevant => "Image and caption do not correlate.",
            CoherenceRelation::OtherText => "Image contains text relevant to the caption.",
            CoherenceRelation::OtherGibberish => "Caption is incomplete or unintelligible.",
        }
    }
}

impl fmt::Display for CoherenceRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn fold(s: &str) -> String {
    s.trim()
        .chars()
        .filter(|c| !matches!(c, '-' | '_' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for CoherenceRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = fold(s);
        Self::ALL
            .iter()
            .copied()
            .find(|r| fold(r.as_str()) == key)
            .ok_or_else(|| {
                let accepted: Vec<&str> = Self::ALL.iter().map(|r| r.as_str()).collect();
                Error::UnknownLabel(s.to_string(), accepted.join(", "))
            })
    }
}

pub fn parse_label(text: &str) -> Result<CoherenceRelation> {
    text.parse()
}

pub fn format_label(relation: CoherenceRelation) -> &'static str {
    relation.as_str()
}

impl Serialize for CoherenceRelation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CoherenceRelation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Fine-grained sub-relation of `Meta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetaFacet {
    When,
    How,
    Where,
}

impl MetaFacet {
    pub const ALL: [MetaFacet; 3] = [MetaFacet::When, MetaFacet::How, MetaFacet::Where];

    pub fn as_str(self) -> &'static str {
        match self {
            MetaFacet::When => "When",
            MetaFacet::How => "How",
            MetaFacet::Where => "Where",
        }
    }
}

impl fmt::Display for MetaFacet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetaFacet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = fold(s);
        Self::ALL
            .iter()
            .copied()
            .find(|f| fold(f.as_str()) == key)
            .ok_or_else(|| Error::UnknownFacet(s.to_string()))
    }
}

impl Serialize for MetaFacet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for MetaFacet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The set of relations (and Meta facets) an annotator assigned to one pair.
///
/// Construction never validates; call [`validate_relation_set`] to check the
/// annotation protocol rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationSet {
    pub relations: BTreeSet<CoherenceRelation>,
    #[serde(default)]
    pub facets: BTreeSet<MetaFacet>,
}

impl RelationSet {
    pub fn new(
        relations: impl IntoIterator<Item = CoherenceRelation>,
        facets: impl IntoIterator<Item = MetaFacet>,
    ) -> Self {
        RelationSet {
            relations: relations.into_iter().collect(),
            facets: facets.into_iter().collect(),
        }
    }

    pub fn of(relations: impl IntoIterator<Item = CoherenceRelation>) -> Self {
        Self::new(relations, [])
    }

    pub fn contains(&self, r: CoherenceRelation) -> bool {
        self.relations.contains(&r)
    }

    pub fn has_facet(&self, f: MetaFacet) -> bool {
        self.facets.contains(&f)
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn primary(&self) -> impl Iterator<Item = CoherenceRelation> + '_ {
        self.relations.iter().copied().filter(|r| r.is_primary())
    }

    /// Six-bit presence vector over `CoherenceRelation::PRIMARY`.
    pub fn primary_mask(&self) -> u8 {
        self.primary()
            .filter_map(|r| r.primary_index())
            .fold(0u8, |m, i| m | (1 << i))
    }

    pub fn from_primary_mask(mask: u8) -> Self {
        Self::of(
            CoherenceRelation::PRIMARY
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, r)| *r),
        )
    }

    /// Union of relations and facets.
    pub fn union(&self, other: &RelationSet) -> RelationSet {
        RelationSet {
            relations: self.relations.union(&other.relations).copied().collect(),
            facets: self.facets.union(&other.facets).copied().collect(),
        }
    }
}

/// Protocol rule broken by a relation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Violation {
    Empty,
    NotExclusive(CoherenceRelation),
    FacetWithoutMeta,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => f.write_str("relation set must not be empty"),
            Violation::NotExclusive(r) => write!(f, "{r} must be exclusive"),
            Violation::FacetWithoutMeta => f.write_str("facet without Meta"),
        }
    }
}

pub fn validate_relation_set(rs: &RelationSet) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if rs.relations.is_empty() {
        violations.push(Violation::Empty);
    }
    if rs.relations.len() > 1 {
        violations.extend(
            rs.relations
                .iter()
                .filter(|r| r.is_exclusive())
                .map(|&r| Violation::NotExclusive(r)),
        );
    }
    if !rs.facets.is_empty() && !rs.contains(CoherenceRelation::Meta) {
        violations.push(Violation::FacetWithoutMeta);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    GroundTruth,
    ModelOutput,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::GroundTruth => "Ground-truth",
            Origin::ModelOutput => "Model output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageCaptionPair {
    pub pair_id: String,
    pub image_ref: String,
    pub caption: String,
    pub source_domain: String,
    pub origin: Origin,
}

/// One annotator's judgment on one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub pair_id: String,
    pub annotator_id: String,
    pub labels: RelationSet,
    pub comment: Option<String>,
    pub timestamp: i64,
}
