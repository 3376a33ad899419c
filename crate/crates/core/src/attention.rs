//! Landmark-driven attention maps and their application to feature volumes.
//!
//! The map pipeline is: visibility filter, pixel quantization, convex
//! boundary, scanline fill (plus the landmark pixels themselves), Gaussian blur, max-normalization, and finally a
//! remap into `[floor, 1]`. Configurations that do not span an area (fewer than
//! three distinct points, or all collinear) fall back to a sum of Gaussian
//! stamps so that every input yields a usable map.

use std::fmt;

use thiserror::Error;

use crate::geometry::{convex_boundary, Point};
use crate::raster::{
    bresenham, gaussian_blur, normalize_in_place, resample_bilinear, scanline_fill, BlurConfig,
    Grid,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttentionError {
    #[error("spatial mismatch: {found_w}x{found_h} vs {want_w}x{want_h}; resample first")]
    SpatialMismatch {
        want_w: usize,
        want_h: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("feature volume of {channels}x{height}x{width} needs {expected} values, got {got}")]
    BadShape {
        channels: usize,
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
}

/// Landmark visibility code as used by the annotation files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    Visible = 0,
    Occluded = 1,
    Missing = 2,
}

impl Visibility {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Visibility::Visible),
            1 => Some(Visibility::Occluded),
            2 => Some(Visibility::Missing),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub visibility: Visibility,
}

impl Landmark {
    pub fn new(x: f64, y: f64, visibility: Visibility) -> Self {
        Landmark { x, y, visibility }
    }

    pub fn visible(x: f64, y: f64) -> Self {
        Landmark::new(x, y, Visibility::Visible)
    }
}

/// Landmarks of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub image_id: String,
    pub points: Vec<Landmark>,
}

impl LandmarkSet {
    pub fn new(image_id: impl Into<String>, points: Vec<Landmark>) -> Self {
        LandmarkSet {
            image_id: image_id.into(),
            points,
        }
    }

    /// Points that take part in map construction: never missing ones, occluded
    /// ones only when `include_occluded`, and only finite coordinates.
    pub fn usable(&self, include_occluded: bool) -> impl Iterator<Item = &Landmark> + '_ {
        self.points.iter().filter(move |p| {
            let wanted = match p.visibility {
                Visibility::Visible => true,
                Visibility::Occluded => include_occluded,
                Visibility::Missing => false,
            };
            wanted && p.x.is_finite() && p.y.is_finite()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConfig {
    pub include_occluded: bool,
    pub blur: BlurConfig,
    /// Lowest value of the output map; must be below 1.
    pub floor: f64,
    /// Stamp width used by the degenerate-configuration fallback.
    pub fallback_sigma: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            include_occluded: true,
            blur: BlurConfig::auto(),
            floor: 0.0,
            fallback_sigma: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackReason {
    /// No usable landmark at all.
    NoLandmarks,
    /// One or two distinct points, or all collinear.
    Degenerate,
    /// The filled boundary does not intersect the grid.
    OffGrid,
}

impl fmt::Display for FallbackReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FallbackReason::NoLandmarks => "no-landmarks",
            FallbackReason::Degenerate => "degenerate",
            FallbackReason::OffGrid => "off-grid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapOutcome {
    Boundary,
    Fallback(FallbackReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub grid: Grid,
    pub outcome: MapOutcome,
}

/// Builds the attention map of `lm` on a `width x height` grid.
pub fn build_attention_map(
    lm: &LandmarkSet,
    width: usize,
    height: usize,
    cfg: &AttentionConfig,
) -> Grid {
    attention_map(lm, width, height, cfg).grid
}

/// Like [`build_attention_map`], also reporting which path produced the map.
pub fn attention_map(
    lm: &LandmarkSet,
    width: usize,
    height: usize,
    cfg: &AttentionConfig,
) -> AttentionMap {
    let points: Vec<Point> = lm
        .usable(cfg.include_occluded)
        .map(|p| Point::quantize(p.x, p.y))
        .collect();

    let Ok(boundary) = convex_boundary(&points) else {
        return AttentionMap {
            grid: Grid::filled(width, height, cfg.floor),
            outcome: MapOutcome::Fallback(FallbackReason::NoLandmarks),
        };
    };

    let (raw, outcome) = if boundary.is_degenerate() {
        let mut centers: Vec<Point> = boundary.vertices().to_vec();
        centers.extend(boundary.dropped().iter().copied());
        if let ([a, b], []) = (boundary.vertices(), boundary.dropped()) {
            centers.extend(bresenham(*a, *b));
        }
        (
            stamp_gaussians(&centers, width, height, cfg.fallback_sigma),
            MapOutcome::Fallback(FallbackReason::Degenerate),
        )
    } else {
        let mut mask = scanline_fill(&boundary, width, height);
        for p in &points {
            mask.set_clipped(p.x.into(), p.y.into(), 1.0);
        }
        if mask.max() > 0.0 {
            (gaussian_blur(&mask, &cfg.blur), MapOutcome::Boundary)
        } else {
            let mut centers = boundary.vertices().to_vec();
            centers.extend(boundary.dropped().iter().copied());
            (
                stamp_gaussians(&centers, width, height, cfg.fallback_sigma),
                MapOutcome::Fallback(FallbackReason::OffGrid),
            )
        }
    };

    AttentionMap {
        grid: {
            let mut grid = raw;
            normalize_in_place(&mut grid);
            lift_floor(grid, cfg.floor)
        },
        outcome,
    }
}

/// Stamps are cut off beyond this many sigmas, where `exp(-40.5) < 3e-18`.
const STAMP_CUTOFF: f64 = 9.0;

/// Sum of isotropic Gaussians centred on the distinct `centers`, evaluated at
/// integer pixel positions. A non-positive sigma marks single pixels.
fn stamp_gaussians(centers: &[Point], width: usize, height: usize, sigma: f64) -> Grid {
    let mut distinct: Vec<Point> = centers.to_vec();
    distinct.sort_unstable();
    distinct.dedup();

    let mut grid = Grid::new(width, height);
    if sigma.is_nan() || sigma <= 0.0 {
        for p in &distinct {
            grid.set_clipped(p.x.into(), p.y.into(), 1.0);
        }
        return grid;
    }

    let denom = 2.0 * sigma * sigma;
    let cutoff = STAMP_CUTOFF * sigma;
    let profile = |n: usize, c: i32| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let d = i as f64 - f64::from(c);
                if d.abs() > cutoff {
                    0.0
                } else {
                    (-d * d / denom).exp()
                }
            })
            .collect()
    };

    // Each center is the outer product of a row and a column profile. Centers
    // sharing a coordinate on the axis with fewer distinct values share one
    // profile, and their other profiles are summed first.
    let mut xs: Vec<i32> = distinct.iter().map(|p| p.x).collect();
    let mut ys: Vec<i32> = distinct.iter().map(|p| p.y).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let by_row = ys.len() <= xs.len();
    let keys = if by_row { ys } else { xs };
    let groups: Vec<(Vec<f64>, Vec<f64>)> = keys
        .iter()
        .map(|&key| {
            let mut acc = vec![0.0; if by_row { width } else { height }];
            for p in &distinct {
                let (k, other) = if by_row { (p.y, p.x) } else { (p.x, p.y) };
                if k == key {
                    let prof = profile(acc.len(), other);
                    acc.iter_mut().zip(prof).for_each(|(a, v)| *a += v);
                }
            }
            if by_row {
                (profile(height, key), acc)
            } else {
                (acc, profile(width, key))
            }
        })
        .collect();

    let spans: Vec<Option<(usize, usize)>> = groups
        .iter()
        .map(|(_, gx)| {
            let lo = gx.iter().position(|&v| v != 0.0)?;
            let hi = gx.iter().rposition(|&v| v != 0.0)?;
            Some((lo, hi))
        })
        .collect();
    for (y, row) in grid.values_mut().chunks_exact_mut(width).enumerate() {
        for ((gy, gx), span) in groups.iter().zip(&spans) {
            let wy = gy[y];
            let Some((lo, hi)) = *span else { continue };
            if wy == 0.0 {
                continue;
            }
            for (v, &wx) in row[lo..=hi].iter_mut().zip(&gx[lo..=hi]) {
                *v += wy * wx;
            }
        }
    }
    grid
}

/// `v + floor * (1 - v)`: keeps 1 at exactly 1 and 0 at exactly `floor`.
fn lift_floor(mut grid: Grid, floor: f64) -> Grid {
    if floor != 0.0 {
        for v in grid.values_mut() {
            *v = (*v + floor * (1.0 - *v)).clamp(floor, 1.0);
        }
    }
    grid
}

/// A `channels x height x width` feature volume, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    channels: usize,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        FeatureGrid {
            channels,
            width,
            height,
            values: vec![0.0; channels * width * height],
        }
    }

    pub fn from_vec(
        channels: usize,
        width: usize,
        height: usize,
        values: Vec<f64>,
    ) -> Result<Self, AttentionError> {
        let expected = channels * width * height;
        if values.len() != expected {
            return Err(AttentionError::BadShape {
                channels,
                width,
                height,
                expected,
                got: values.len(),
            });
        }
        Ok(FeatureGrid {
            channels,
            width,
            height,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &FeatureGrid) -> bool {
        (self.channels, self.width, self.height) == (other.channels, other.width, other.height)
    }

    /// Splits into channels `[0, at)` and `[at, channels)`.
    pub fn split_channels(&self, at: usize) -> (FeatureGrid, FeatureGrid) {
        let at = at.min(self.channels);
        let cut = at * self.plane_len();
        (
            FeatureGrid {
                channels: at,
                width: self.width,
                height: self.height,
                values: self.values[..cut].to_vec(),
            },
            FeatureGrid {
                channels: self.channels - at,
                width: self.width,
                height: self.height,
                values: self.values[cut..].to_vec(),
            },
        )
    }
}

/// How an attention map modulates features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApplyMode {
    /// `f * A`
    Multiply,
    /// `f * (1 + A)`
    #[default]
    Residual,
}

/// Modulates every channel of `features` by `map`, resampling the map to the
/// feature resolution first.
pub fn apply_attention(
    features: &FeatureGrid,
    map: &Grid,
    mode: ApplyMode,
) -> Result<FeatureGrid, AttentionError> {
    let map = resample_bilinear(map, features.width, features.height);
    if (map.width(), map.height()) != (features.width, features.height) {
        return Err(AttentionError::SpatialMismatch {
            want_w: features.width,
            want_h: features.height,
            found_w: map.width(),
            found_h: map.height(),
        });
    }
    let weights = map.values();
    let mut out = features.clone();
    if out.plane_len() == 0 {
        return Ok(out);
    }
    for plane in out.values.chunks_exact_mut(weights.len()) {
        for (f, &a) in plane.iter_mut().zip(weights) {
            *f = match mode {
                ApplyMode::Multiply => *f * a,
                ApplyMode::Residual => *f * (1.0 + a),
            };
        }
    }
    Ok(out)
}

/// Stacks `b`'s channels after `a`'s. Both must share the same spatial size.
pub fn concat_channels(a: &FeatureGrid, b: &FeatureGrid) -> Result<FeatureGrid, AttentionError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(AttentionError::SpatialMismatch {
            want_w: a.width,
            want_h: a.height,
            found_w: b.width,
            found_h: b.height,
        });
    }
    let mut values = Vec::with_capacity(a.values.len() + b.values.len());
    values.extend_from_slice(&a.values);
    values.extend_from_slice(&b.values);
    Ok(FeatureGrid {
        channels: a.channels + b.channels,
        width: a.width,
        height: a.height,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[(f64, f64)]) -> LandmarkSet {
        LandmarkSet::new(
            "t",
            points
                .iter()
                .map(|&(x, y)| Landmark::visible(x, y))
                .collect(),
        )
    }

    fn no_blur() -> AttentionConfig {
        AttentionConfig {
            blur: BlurConfig::fixed(0.0),
            ..AttentionConfig::default()
        }
    }

    #[test]
    fn full_grid_corners_give_all_ones() {
        let lm = set(&[(0.0, 0.0), (15.0, 0.0), (15.0, 11.0), (0.0, 11.0)]);
        let m = attention_map(&lm, 16, 12, &no_blur());
        assert_eq!(m.outcome, MapOutcome::Boundary);
        assert!(m.grid.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_landmark_peaks_at_its_pixel() {
        let lm = set(&[(10.2, 9.6)]);
        let m = attention_map(&lm, 21, 21, &AttentionConfig::default());
        assert_eq!(m.outcome, MapOutcome::Fallback(FallbackReason::Degenerate));
        assert_eq!(m.grid.get(10, 10), 1.0);
        assert_eq!(m.grid.max(), 1.0);
        assert!(m.grid.get(0, 0) < m.grid.get(5, 5));
    }

    #[test]
    fn no_usable_landmarks_gives_floor() {
        let lm = LandmarkSet::new("e", vec![Landmark::new(3.0, 3.0, Visibility::Missing)]);
        let cfg = AttentionConfig {
            floor: 0.25,
            ..AttentionConfig::default()
        };
        let m = attention_map(&lm, 5, 4, &cfg);
        assert_eq!(m.outcome, MapOutcome::Fallback(FallbackReason::NoLandmarks));
        assert!(m.grid.values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn occluded_points_follow_config() {
        let lm = LandmarkSet::new(
            "o",
            vec![
                Landmark::visible(2.0, 2.0),
                Landmark::visible(12.0, 2.0),
                Landmark::new(7.0, 12.0, Visibility::Occluded),
            ],
        );
        let with = attention_map(&lm, 16, 16, &no_blur());
        assert_eq!(with.outcome, MapOutcome::Boundary);
        let without = attention_map(
            &lm,
            16,
            16,
            &AttentionConfig {
                include_occluded: false,
                ..no_blur()
            },
        );
        assert_eq!(
            without.outcome,
            MapOutcome::Fallback(FallbackReason::Degenerate)
        );
    }

    #[test]
    fn two_points_stamp_along_segment() {
        let lm = set(&[(4.0, 4.0), (20.0, 4.0)]);
        let cfg = AttentionConfig {
            fallback_sigma: 1.0,
            ..AttentionConfig::default()
        };
        let g = build_attention_map(&lm, 25, 9, &cfg);
        let mid = g.get(12, 4);
        assert!(mid > 0.9, "segment midpoint {mid}");
        assert!(g.get(12, 0) < 0.1);
    }

    #[test]
    fn collinear_triples_stamp_points_only() {
        let lm = set(&[(4.0, 4.0), (12.0, 4.0), (20.0, 4.0)]);
        let cfg = AttentionConfig {
            fallback_sigma: 1.0,
            ..AttentionConfig::default()
        };
        let g = build_attention_map(&lm, 25, 9, &cfg);
        assert_eq!(g.get(12, 4), 1.0);
        assert!(g.get(8, 4) < 0.01);
    }

    #[test]
    fn off_grid_hull_falls_back() {
        let lm = set(&[(40.0, 40.0), (50.0, 40.0), (45.0, 48.0)]);
        let m = attention_map(&lm, 32, 32, &AttentionConfig::default());
        assert_eq!(m.outcome, MapOutcome::Fallback(FallbackReason::OffGrid));
        assert_eq!(m.grid.max(), 1.0);
    }

    #[test]
    fn floor_remap_bounds() {
        let lm = set(&[(3.0, 3.0), (28.0, 5.0), (15.0, 27.0)]);
        let cfg = AttentionConfig {
            floor: 0.3,
            blur: BlurConfig::fixed(2.0),
            ..AttentionConfig::default()
        };
        let g = build_attention_map(&lm, 32, 32, &cfg);
        assert_eq!(g.max(), 1.0);
        assert!(g.min() >= 0.3);
    }

    #[test]
    fn apply_modes() {
        let f = FeatureGrid::from_vec(2, 2, 1, vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let zero = Grid::new(2, 1);
        let one = Grid::filled(2, 1, 1.0);
        assert_eq!(apply_attention(&f, &zero, ApplyMode::Residual).unwrap(), f);
        assert_eq!(apply_attention(&f, &one, ApplyMode::Multiply).unwrap(), f);
        let half = Grid::from_vec(2, 1, vec![0.5, 0.25]).unwrap();
        let m = apply_attention(&f, &half, ApplyMode::Multiply).unwrap();
        assert_eq!(m.values(), &[0.5, -0.5, 1.5, 1.0]);
        let r = apply_attention(&f, &half, ApplyMode::Residual).unwrap();
        assert_eq!(r.values(), &[1.5, -2.5, 4.5, 5.0]);
    }

    #[test]
    fn apply_resamples_map() {
        let f = FeatureGrid::from_vec(1, 2, 2, vec![1.0; 4]).unwrap();
        let map = Grid::filled(8, 8, 0.5);
        let out = apply_attention(&f, &map, ApplyMode::Multiply).unwrap();
        assert_eq!(out.values(), &[0.5; 4]);
    }

    #[test]
    fn concat_order_and_identity() {
        let a = FeatureGrid::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = FeatureGrid::from_vec(1, 2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.channels(), 2);
        assert_eq!(ab.channel(0), a.values());
        assert_eq!(ab.channel(1), b.values());

        let empty = FeatureGrid::zeros(0, 2, 2);
        assert_eq!(concat_channels(&a, &empty).unwrap(), a);

        let c3 = FeatureGrid::zeros(3, 4, 4);
        let c5 = FeatureGrid::from_vec(5, 4, 4, vec![1.0; 80]).unwrap();
        let c8 = concat_channels(&c3, &c5).unwrap();
        assert_eq!(c8.channels(), 8);
        assert!(c8.channel(2).iter().all(|&v| v == 0.0));
        assert!(c8.channel(3).iter().all(|&v| v == 1.0));

        let wrong = FeatureGrid::zeros(1, 3, 2);
        let err = concat_channels(&a, &wrong).unwrap_err();
        assert!(err.to_string().contains("resample first"));
    }

    #[test]
    fn bad_shape_rejected() {
        assert!(FeatureGrid::from_vec(2, 2, 2, vec![0.0; 7]).is_err());
    }
}
