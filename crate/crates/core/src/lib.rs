//! Multiple-instance learning with cross-attention saliency inference.
//!
//! Bags of instance embeddings are scored by correlating every instance with
//! a frozen matrix of representative negative instances (selected by column
//! leverage scores), turning those correlations into saliency logits, and
//! pooling instance values with the resulting attention weights.
//!
//! Modules:
//! - [`linalg`]: Gram eigendecomposition, leverage scores, stable softmax.
//! - [`nrl`]: negative key extraction and the key file format.
//! - [`model`]: parameters, checkpoints and the forward pass.
//! - [`train`]: losses, analytic gradients, Adam, early stopping.
//! - [`synthdata`]: synthetic bag generator and dataset file format.
//! - [`eval`]: AUC and threshold metrics, witness-group accuracy, attention export.
//! - [`cli`]: the `casii` command-line front end.

mod binio;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod nrl;
pub mod synthdata;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use linalg::Matrix;
pub use model::{CasiiParams, ForwardTrace, InstanceBag, Pooling};
pub use nrl::KeyMatrix;
pub use synthdata::{Dataset, SynthConfig};
pub use train::{TrainConfig, TrainHistory};
