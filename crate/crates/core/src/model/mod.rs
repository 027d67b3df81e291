//! The cross-attention saliency network: key/query/value projections, cosine
//! cross-attention against the frozen negative keys, saliency-informed
//! attention pooling and the bag classifier.

mod bag;
mod forward;
mod params;

pub use bag::InstanceBag;
pub use forward::{
    forward, forward_with, predict, predict_with, project_keys, top_bottom_indices, ForwardTrace,
    Pooling,
};
pub use params::{CasiiParams, Gradients, BLOCK_NAMES, DEFAULT_LATENT_DIM};
