//! Relation-conditioned caption generation.

pub mod checkpoint;
pub mod decode;
pub mod model;
pub mod objects;
pub mod train;
pub mod vocab;

pub use checkpoint::{load_captioner, save_captioner};
pub use decode::{generate_caption, next_token_distribution, DecodeStrategy, Generation, MAX_BEAM};
pub use model::{CaptionExample, CaptionInput, Captioner, CaptionerConfig};
pub use objects::{detect_objects, fixture_caption_input, object_vector, FIXTURE_OBJECTS};
pub use train::{
    select_checkpoint, train_captioner, validation_cider, CaptionTrainer, CaptionTrainingLog,
    CheckpointScore, ValidationItem,
};
pub use vocab::{build_vocab, ConditionLabel, Vocab};
