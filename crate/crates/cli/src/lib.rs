//! Multi-level refinement pipeline: region proposals from scene-level logits,
//! joint CRF refinement with region-level logits, evaluation, parameter search,
//! and a synthetic data generator.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gridsearch;
pub mod manifest;
pub mod pipeline;
pub mod synth;

pub use config::{Preset, RunConfig};
pub use error::{PipelineError, Result};
