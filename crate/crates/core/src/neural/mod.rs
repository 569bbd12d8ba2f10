//! Small feed-forward network engine: batched forward passes with recorded
//! intermediates, reverse-mode gradients, Adam, and binary checkpoints.
//!
//! Complex quantities enter and leave networks as real parts followed by
//! imaginary parts.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Activation, Dense, Gradients, Mlp, Tape, RELU_FLOOR};
