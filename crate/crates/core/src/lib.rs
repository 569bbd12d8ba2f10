//! Integrated sensing and communication workbench.
//!
//! A single transmitter serves a co-located monostatic radar and a remote
//! single-antenna receiver. The crate provides the channel models, a learned
//! end-to-end transceiver, model-based reference designs, and the Monte-Carlo
//! machinery used to compare them at a fixed false-alarm rate.

pub mod ae;
pub mod baselines;
pub mod channels;
pub mod error;
pub mod eval;
pub mod neural;
pub mod rng;
pub mod signal;

pub use channels::{ScenarioConfig, SceneSample};
pub use error::{IsacError, Result};
pub use rng::Rng;
pub use signal::{ArrayGeometry, ComplexVec, C64};
