//! Pixel-level machinery: line rasterization, polygon fill, Gaussian blur,
//! resampling and PGM encoding.

mod blur;
mod fill;
mod grid;
mod line;

pub use blur::{gaussian_blur, gaussian_kernel, kernel_radius, BlurConfig, Sigma};
pub use fill::{rasterize_boundary, scanline_fill};
pub use grid::{normalize, normalize_in_place, resample_bilinear, Grid};
pub use line::bresenham;
