//! Geometry-aware score distillation.
//!
//! The crate builds per-view Gaussian noise maps from a noise field anchored
//! on a point cloud, so that every map is standard normal while views of the
//! same scene receive correlated noise at corresponding pixels. Around that
//! it provides depth-based warping between views, a cosine consistency loss
//! between gradient maps, and a small score-distillation loop over a colored
//! point cloud driven by a pluggable denoiser.

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod io;
pub mod noising;
pub mod optimize;
pub mod raster;
pub mod scenes;
pub mod score;
pub mod warping;

pub use error::{Error, Result};
