//! Sequence learning with a temporal contextual attention layer.
//!
//! Everything is implemented from scratch on a small dense [`Matrix`] type
//! with explicit forward caches and hand-written backward passes:
//!
//! * [`tcl`]: the temporal contextual layer, whose attention over input
//!   frames is computed from the entire input sequence;
//! * [`ffatt`]: a per-step feed-forward attention baseline;
//! * [`model`]: autoencoder and classifier architectures plus checkpoints;
//! * [`train`]: losses, attention sparsity penalty, SGD/Adam, early stopping;
//! * [`data`]: deterministic synthetic tasks and CSV dataset I/O;
//! * [`metrics`]: horizon MSE, confusion matrices, attention entropy,
//!   key-frame detection and heatmap export;
//! * [`cli`]: the `tempattn` command-line front end.

pub mod cli;
pub mod data;
pub mod error;
pub mod ffatt;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod suite;
pub mod tcl;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Matrix;
