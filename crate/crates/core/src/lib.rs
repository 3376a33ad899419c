//! Boundary attention maps from garment landmarks, plus the evaluation and
//! loss kernels used around them.
//!
//! - [`geometry`]: exact-integer convex boundary of quantized landmarks.
//! - [`raster`]: Bresenham lines, scanline fill, Gaussian blur, resampling, PGM.
//! - [`attention`]: the landmark-to-map pipeline, feature modulation and
//!   channel concatenation.
//! - [`losses`]: MSE, softmax cross-entropy and positive-weighted BCE with
//!   analytic gradients; Gaussian heatmap targets.
//! - [`metrics`]: top-k accuracy, top-k recall, normalized landmark error.
//! - [`ingest`]: annotation/score file formats and crop transforms.
//! - [`cli`]: the `battn` command-line front end.

pub mod attention;
pub mod cli;
pub mod geometry;
pub mod ingest;
pub mod losses;
pub mod metrics;
pub mod raster;

pub use attention::{
    apply_attention, build_attention_map, concat_channels, ApplyMode, AttentionConfig, FeatureGrid,
    Landmark, LandmarkSet, Visibility,
};
pub use geometry::{convex_boundary, ConvexBoundary, Point};
pub use raster::{BlurConfig, Grid, Sigma};
