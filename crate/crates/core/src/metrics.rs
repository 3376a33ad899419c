//! Evaluation metrics: top-k category accuracy, top-k attribute recall and
//! normalized landmark error.
//!
//! Predictions and ground truth are paired by image id, so every metric is
//! independent of dataset order. Score ties are broken toward the lower index.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::attention::{LandmarkSet, Visibility};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("image ids do not match: {}", offenders.join(", "))]
    IdMismatch { offenders: Vec<String> },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("k = {k} exceeds the {classes} available classes")]
    KTooLarge { k: usize, classes: usize },
    #[error("empty dataset")]
    Empty,
    #[error("{image_id}: missing {what}")]
    MissingPayload {
        image_id: String,
        what: &'static str,
    },
    #[error("{image_id}: expected {expected} scores, got {got}")]
    LengthMismatch {
        image_id: String,
        expected: usize,
        got: usize,
    },
    #[error("{image_id}: index {index} out of range for {len} scores")]
    IndexOutOfRange {
        image_id: String,
        index: usize,
        len: usize,
    },
    #[error("no positive attributes")]
    NoPositiveAttributes,
    #[error("no evaluated landmarks")]
    NoEvaluatedLandmarks,
}

/// Prediction side of one evaluated image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreRecord {
    pub image_id: String,
    pub category_scores: Option<Vec<f64>>,
    pub attribute_scores: Option<Vec<f64>>,
    pub predicted_landmarks: Option<Vec<(f64, f64)>>,
}

impl ScoreRecord {
    pub fn category(image_id: impl Into<String>, scores: Vec<f64>) -> Self {
        ScoreRecord {
            image_id: image_id.into(),
            category_scores: Some(scores),
            ..Default::default()
        }
    }

    pub fn attribute(image_id: impl Into<String>, scores: Vec<f64>) -> Self {
        ScoreRecord {
            image_id: image_id.into(),
            attribute_scores: Some(scores),
            ..Default::default()
        }
    }

    pub fn landmarks(image_id: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        ScoreRecord {
            image_id: image_id.into(),
            predicted_landmarks: Some(points),
            ..Default::default()
        }
    }
}

/// Annotation side of one evaluated image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub category: Option<usize>,
    pub attributes: Vec<usize>,
    pub landmarks: LandmarkSet,
    pub image_width: f64,
    pub image_height: f64,
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>) -> Self {
        let image_id = image_id.into();
        GroundTruth {
            landmarks: LandmarkSet::new(image_id.clone(), Vec::new()),
            image_id,
            category: None,
            attributes: Vec::new(),
            image_width: 1.0,
            image_height: 1.0,
        }
    }

    pub fn with_category(mut self, category: usize) -> Self {
        self.category = Some(category);
        self
    }

    pub fn with_attributes(mut self, attributes: Vec<usize>) -> Self {
        self.attributes = attributes;
        self
    }

    pub fn with_landmarks(mut self, landmarks: LandmarkSet, width: f64, height: f64) -> Self {
        self.landmarks = landmarks;
        self.image_width = width;
        self.image_height = height;
        self
    }
}

/// How per-sample attribute hits are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecallAveraging {
    /// Total hits over total positives across the dataset.
    #[default]
    Micro,
    /// Mean of per-sample recall over samples with at least one positive.
    Macro,
}

/// Pairs each truth with the record of the same id, in truth order.
///
/// Fails when an id appears on one side only or more than once; offenders are
/// listed in input order.
pub fn pair_by_id<'a>(
    records: &'a [ScoreRecord],
    truths: &'a [GroundTruth],
) -> Result<Vec<(&'a ScoreRecord, &'a GroundTruth)>, MetricsError> {
    let mut by_id: HashMap<&str, &ScoreRecord> = HashMap::with_capacity(records.len());
    let mut offenders = Vec::new();
    for r in records {
        if by_id.insert(r.image_id.as_str(), r).is_some() {
            offenders.push(r.image_id.clone());
        }
    }
    let mut seen: HashSet<&str> = HashSet::with_capacity(truths.len());
    let mut pairs = Vec::with_capacity(truths.len());
    for t in truths {
        if !seen.insert(t.image_id.as_str()) {
            offenders.push(t.image_id.clone());
            continue;
        }
        match by_id.get(t.image_id.as_str()) {
            Some(r) => pairs.push((*r, t)),
            None => offenders.push(t.image_id.clone()),
        }
    }
    offenders.extend(
        records
            .iter()
            .filter(|r| !seen.contains(r.image_id.as_str()))
            .map(|r| r.image_id.clone()),
    );
    if offenders.is_empty() {
        Ok(pairs)
    } else {
        Err(MetricsError::IdMismatch { offenders })
    }
}

/// Indices of the `k` highest scores, highest first; equal scores keep the
/// lower index first.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let by_score =
        |a: &usize, b: &usize| -> Ordering { scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)) };
    let k = k.min(idx.len());
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, by_score);
    }
    idx.truncate(k);
    idx.sort_unstable_by(by_score);
    idx
}

fn check_k(k: usize, classes: usize) -> Result<(), MetricsError> {
    if k == 0 {
        Err(MetricsError::ZeroK)
    } else if k > classes {
        Err(MetricsError::KTooLarge { k, classes })
    } else {
        Ok(())
    }
}

fn scores_of<'a>(
    r: &'a ScoreRecord,
    payload: &'a Option<Vec<f64>>,
    what: &'static str,
    expected: &mut Option<usize>,
) -> Result<&'a [f64], MetricsError> {
    let s = payload
        .as_deref()
        .ok_or_else(|| MetricsError::MissingPayload {
            image_id: r.image_id.clone(),
            what,
        })?;
    match *expected {
        None => *expected = Some(s.len()),
        Some(n) if n != s.len() => {
            return Err(MetricsError::LengthMismatch {
                image_id: r.image_id.clone(),
                expected: n,
                got: s.len(),
            })
        }
        _ => {}
    }
    Ok(s)
}

/// Fraction of samples whose true category is among the `k` best scores.
pub fn topk_accuracy(
    records: &[ScoreRecord],
    truths: &[GroundTruth],
    k: usize,
) -> Result<f64, MetricsError> {
    let pairs = pair_by_id(records, truths)?;
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut classes = None;
    let mut hits = 0usize;
    for (r, t) in &pairs {
        let scores = scores_of(r, &r.category_scores, "category scores", &mut classes)?;
        check_k(k, scores.len())?;
        let label = t.category.ok_or_else(|| MetricsError::MissingPayload {
            image_id: t.image_id.clone(),
            what: "category label",
        })?;
        if label >= scores.len() {
            return Err(MetricsError::IndexOutOfRange {
                image_id: t.image_id.clone(),
                index: label,
                len: scores.len(),
            });
        }
        if top_k_indices(scores, k).contains(&label) {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

/// Micro-averaged top-k attribute recall.
pub fn topk_recall(
    records: &[ScoreRecord],
    truths: &[GroundTruth],
    k: usize,
) -> Result<f64, MetricsError> {
    topk_recall_with(records, truths, k, RecallAveraging::Micro)
}

pub fn topk_recall_with(
    records: &[ScoreRecord],
    truths: &[GroundTruth],
    k: usize,
    averaging: RecallAveraging,
) -> Result<f64, MetricsError> {
    let pairs = pair_by_id(records, truths)?;
    let mut len = None;
    let (mut hits, mut positives) = (0usize, 0usize);
    let (mut per_sample_sum, mut counted) = (0.0, 0usize);
    for (r, t) in &pairs {
        let scores = scores_of(r, &r.attribute_scores, "attribute scores", &mut len)?;
        check_k(k, scores.len())?;
        let mut attrs = t.attributes.clone();
        attrs.sort_unstable();
        attrs.dedup();
        if let Some(&bad) = attrs.iter().find(|&&a| a >= scores.len()) {
            return Err(MetricsError::IndexOutOfRange {
                image_id: t.image_id.clone(),
                index: bad,
                len: scores.len(),
            });
        }
        if attrs.is_empty() {
            continue;
        }
        let top = top_k_indices(scores, k);
        let h = attrs.iter().filter(|a| top.contains(a)).count();
        hits += h;
        positives += attrs.len();
        per_sample_sum += h as f64 / attrs.len() as f64;
        counted += 1;
    }
    if positives == 0 {
        return Err(MetricsError::NoPositiveAttributes);
    }
    Ok(match averaging {
        RecallAveraging::Micro => hits as f64 / positives as f64,
        RecallAveraging::Macro => per_sample_sum / counted as f64,
    })
}

/// Mean image-normalized landmark distance
/// `sqrt((dx / W)^2 + (dy / H)^2)` over every evaluated landmark.
///
/// Visible landmarks are always evaluated, occluded ones unless
/// `visible_only`, missing ones never.
pub fn normalized_error(
    records: &[ScoreRecord],
    truths: &[GroundTruth],
    visible_only: bool,
) -> Result<f64, MetricsError> {
    let pairs = pair_by_id(records, truths)?;
    let mut dists = Vec::new();
    for (r, t) in &pairs {
        let pred =
            r.predicted_landmarks
                .as_deref()
                .ok_or_else(|| MetricsError::MissingPayload {
                    image_id: r.image_id.clone(),
                    what: "predicted landmarks",
                })?;
        for (i, p) in t.landmarks.points.iter().enumerate() {
            let evaluated = match p.visibility {
                Visibility::Visible => true,
                Visibility::Occluded => !visible_only,
                Visibility::Missing => false,
            };
            if !evaluated {
                continue;
            }
            let &(px, py) = pred.get(i).ok_or_else(|| MetricsError::MissingPayload {
                image_id: r.image_id.clone(),
                what: "prediction for an evaluated landmark",
            })?;
            let dx = (px - p.x) / t.image_width;
            let dy = (py - p.y) / t.image_height;
            dists.push(dx.hypot(dy));
        }
    }
    if dists.is_empty() {
        return Err(MetricsError::NoEvaluatedLandmarks);
    }
    // sorted summation makes the result independent of dataset order
    dists.sort_unstable_by(f64::total_cmp);
    Ok(compensated_sum(&dists) / dists.len() as f64)
}

/// Neumaier summation.
fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}
