//! Deep attributed-graph clustering with a weight-shared graph auto-encoder.
//!
//! The pipeline pretrains a transform-input graph auto-encoder
//! ([`tigae`]), then alternates a gradient-free prediction pass with
//! structure fine-tuning ([`refine`]) and a recorded pass on the refined
//! graph that optimizes reconstruction plus a self-supervised clustering
//! objective ([`clustering`], [`train`]).

pub mod checkpoint;
pub mod cli;
pub mod clustering;
pub mod config;
pub mod datasets;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod refine;
pub mod tensor;
pub mod tigae;
pub mod train;

pub use config::{SfSwitches, TrainConfig, Variant};
pub use error::{Error, Result};
pub use graph::Graph;
pub use tensor::{Matrix, Rng};
