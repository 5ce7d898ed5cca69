//! Minimal neural-network toolkit: a differentiation tape, parameter
//! storage with Adam, and the layers the classifier and captioner use.

pub mod layers;
pub mod params;
pub mod tape;

pub use layers::{causal_mask, dropout, BatchNorm, LayerNorm, Linear, Lstm, MultiHeadAttention};
pub use params::{Adam, AdamConfig, ParamId, ParamStore, TensorEntry};
pub use tape::{Gradients, Mat, Tape, Var};
