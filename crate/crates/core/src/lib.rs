//! Optimization-free multi-view, multi-person human reconstruction.
//!
//! The pipeline consumes per-view detections (token embedding, body
//! parameters, 2D keypoints, depth sample) plus cameras and produces fused
//! world-space humans under global identities:
//!
//! 1. [`scale`]: head-pelvis ratio rescales the scene to metric.
//! 2. [`tracking`]: per-view token matching and displacement filtering.
//! 3. [`association`]: cross-view tracklet matching into global identities.
//! 4. [`fusion`]: averaged shape/pose, averaged root rotation, triangulated head.
//!
//! [`metrics`] implements the world-space evaluation protocols and chunk
//! stitching; [`synth`] generates seeded ground-truth scenarios.

pub mod association;
pub mod bodymodel;
pub mod config;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod observation;
pub mod pipeline;
pub mod scale;
pub mod synth;
pub mod tracking;
mod serde_util;

pub use error::{Error, Result};
