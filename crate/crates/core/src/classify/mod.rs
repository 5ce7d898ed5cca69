//! Relation classifiers: encoders, the fusion network, training, and an
//! SVM baseline.

pub mod checkpoint;
pub mod encoders;
pub mod model;
pub mod svm;
pub mod train;

pub use checkpoint::{load_classifier, save_classifier};
pub use encoders::{
    encode_image, fixture_image_vector, ImageEncoderSpec, ImageInput, NgramVocab, TextEncoder,
    TextEncoderSpec, TextFeatures, WordVocab,
};
pub use model::{
    classify_forward, ClassifierConfig, EncodedExample, LabelMode, RelationClassifier, Target,
    NUM_CLASSES,
};
pub use svm::{LinearSvm, SvmConfig};
pub use train::{
    evaluate_classifier, split_sizes, train_classifier, ClassifierEvaluation, EpochRecord,
    TrainingLog,
};

use crate::corpus::FeatureFile;
use crate::error::Result;

/// Raw inputs for one example before encoding.
#[derive(Debug, Clone, Copy)]
pub struct RawExample<'a> {
    pub pair_id: &'a str,
    pub caption: &'a str,
    /// Image bytes for `fixture_hash`; ignored by other image encoders.
    pub image_bytes: Option<&'a [u8]>,
    pub target: Target,
}

pub fn encode_example(
    text: &TextEncoder,
    image: &ImageEncoderSpec,
    features: Option<&FeatureFile>,
    raw: RawExample<'_>,
) -> Result<EncodedExample> {
    let input = match raw.image_bytes {
        Some(b) => ImageInput::Bytes(b),
        None => ImageInput::Pair(raw.pair_id),
    };
    Ok(EncodedExample {
        pair_id: raw.pair_id.to_string(),
        text: text.encode(raw.pair_id, raw.caption, features)?,
        image_vec: encode_image(image, input, features)?,
        target: raw.target,
    })
}
