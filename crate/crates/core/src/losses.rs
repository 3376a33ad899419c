//! Training losses with analytic gradients, and Gaussian heatmap targets for
//! the landmark stream. All reductions are means.

use thiserror::Error;

use crate::attention::{FeatureGrid, LandmarkSet, Visibility};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LossError {
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(String, String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("need at least 2 logits, got {0}")]
    TooFewLogits(usize),
    #[error("length mismatch: {logits} logits vs {labels} labels")]
    LengthMismatch { logits: usize, labels: usize },
}

/// Default positive-class weight for the attribute loss.
pub const DEFAULT_POS_WEIGHT: f64 = 332.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapTargetConfig {
    pub out_width: usize,
    pub out_height: usize,
    pub sigma: f64,
}

impl Default for HeatmapTargetConfig {
    fn default() -> Self {
        HeatmapTargetConfig {
            out_width: 64,
            out_height: 64,
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub pos_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            pos_weight: DEFAULT_POS_WEIGHT,
        }
    }
}

/// One Gaussian channel per landmark, evaluated at integer pixel positions of
/// the output grid. Missing landmarks produce an all-zero channel.
///
/// Landmarks must already be expressed in output-grid coordinates.
pub fn heatmap_target(lm: &LandmarkSet, cfg: &HeatmapTargetConfig) -> FeatureGrid {
    let (w, h) = (cfg.out_width, cfg.out_height);
    let mut out = FeatureGrid::zeros(lm.points.len(), w, h);
    let denom = 2.0 * cfg.sigma * cfg.sigma;
    for (k, p) in lm.points.iter().enumerate() {
        if p.visibility == Visibility::Missing || !p.x.is_finite() || !p.y.is_finite() {
            continue;
        }
        let plane = out.channel_mut(k);
        for y in 0..h {
            let dy = y as f64 - p.y;
            for x in 0..w {
                let dx = x as f64 - p.x;
                plane[y * w + x] = (-(dx * dx + dy * dy) / denom).exp();
            }
        }
    }
    out
}

fn shape_of(f: &FeatureGrid) -> String {
    format!("{}x{}x{}", f.channels(), f.height(), f.width())
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &FeatureGrid, target: &FeatureGrid) -> Result<(f64, FeatureGrid), LossError> {
    if !pred.same_shape(target) {
        return Err(LossError::ShapeMismatch(shape_of(pred), shape_of(target)));
    }
    let n = pred.values().len();
    let mut grad = pred.clone();
    if n == 0 {
        return Ok((0.0, grad));
    }
    let scale = 2.0 / n as f64;
    let mut sum = 0.0;
    for (g, &t) in grad.values_mut().iter_mut().zip(target.values()) {
        let d = *g - t;
        sum += d * d;
        *g = scale * d;
    }
    Ok((sum / n as f64, grad))
}

/// Softmax cross-entropy of one sample; gradient is `softmax(logits) - onehot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), LossError> {
    if logits.len() < 2 {
        return Err(LossError::TooFewLogits(logits.len()));
    }
    if label >= logits.len() {
        return Err(LossError::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    let log_total = total.ln();
    probs.iter_mut().for_each(|p| *p /= total);

    let loss = log_total - (logits[label] - max);
    let mut grad = probs;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Positive-weighted binary cross-entropy over independent attribute logits:
/// `-(W y log s(x) + (1 - y) log(1 - s(x)))`, averaged over elements.
pub fn asym_weighted_bce(
    logits: &[f64],
    labels: &[bool],
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>), LossError> {
    if logits.len() != labels.len() {
        return Err(LossError::LengthMismatch {
            logits: logits.len(),
            labels: labels.len(),
        });
    }
    let n = logits.len();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let w = cfg.pos_weight;
    let inv_n = 1.0 / n as f64;
    let mut sum = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&x, &y)| {
            if y {
                // -log s(x) = softplus(-x); d/dx = -(1 - s(x)) = -s(-x)
                sum += w * softplus(-x);
                -w * sigmoid(-x) * inv_n
            } else {
                // -log(1 - s(x)) = softplus(x); d/dx = s(x)
                sum += softplus(x);
                sigmoid(x) * inv_n
            }
        })
        .collect();
    Ok((sum * inv_n, grad))
}
