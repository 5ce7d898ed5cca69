//! Deterministic stand-ins for the object detector and the pretrained
//! image and object-label encoders.

use sha2::{Digest, Sha256};

use crate::classify::fixture_image_vector;

use super::model::{CaptionInput, CaptionerConfig};
use super::vocab::ConditionLabel;

pub const FIXTURE_OBJECTS: [&str; 24] = [
    "person", "dog", "cat", "car", "tree", "building", "sky", "water", "flower", "chair", "table", "boat",
    "bird", "horse", "mountain", "beach", "food", "book", "street", "bicycle", "child", "phone", "cup",
    "window",
];

/// Up to `max` distinct object labels chosen by the image content hash.
pub fn detect_objects(image_bytes: &[u8], max: usize) -> Vec<String> {
    let h = Sha256::digest(image_bytes);
    let count = usize::from(h[0]) % (max + 1);
    let mut out: Vec<String> = Vec::with_capacity(count);
    for &b in h[1..].iter() {
        if out.len() == count {
            break;
        }
        let name = FIXTURE_OBJECTS[usize::from(b) % FIXTURE_OBJECTS.len()];
        if !out.iter().any(|o| o == name) {
            out.push(name.to_string());
        }
    }
    out
}

/// Fixed unit vector for an object label.
pub fn object_vector(label: &str, dim: usize) -> Vec<f64> {
    fixture_image_vector(format!("object:{label}").as_bytes(), dim)
}

/// Captioner input for raw image bytes using the fixture encoders.
pub fn fixture_caption_input(image_bytes: &[u8], label: ConditionLabel, config: &CaptionerConfig) -> CaptionInput {
    CaptionInput {
        image_vec: fixture_image_vector(image_bytes, config.image_dim),
        object_vecs: detect_objects(image_bytes, 3)
            .iter()
            .map(|o| object_vector(o, config.object_dim))
            .collect(),
        label,
    }
}
