//! Multi-level segmentation refinement for binary waste-object segmentation.
//!
//! Scene-level class scores are fused with object-level scores computed on
//! proposal regions, then refined by mean-field inference in a fully connected CRF
//! whose pairwise terms follow colour, position and depth affinities.

pub mod densecrf;
pub mod depthfill;
pub mod error;
pub mod imagedata;
pub mod metrics;
pub mod proposer;
pub mod unary;

pub use error::{Error, Result};
