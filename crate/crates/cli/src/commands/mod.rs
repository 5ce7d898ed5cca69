pub mod captioner;
pub mod classifier;
pub mod ingest;
pub mod map_labels;
pub mod score;
pub mod serve;
pub mod stats;
