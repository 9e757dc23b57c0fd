//! Detection evaluation: IoU, greedy matching, precision/recall/F1, and
//! 101-point interpolated average precision (mAP50, mAP50-95).
//!
//! Matching runs per image and per class, then pools across images for the
//! PR curve. Detections are ranked by confidence with ties broken by stable
//! input order, and each ground truth matches at most once. All reductions
//! iterate in a fixed order (classes ascending, thresholds as given), so
//! results are bit-identical regardless of caller-side parallelism.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::NormBox;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("iou threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("threshold list is empty")]
    NoThresholds,
}

/// Axis-aligned box as corner coordinates, in whatever unit the caller uses
/// consistently (normalized or pixel).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxXyxy {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoxXyxy {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }
}

impl From<&NormBox> for BoxXyxy {
    fn from(b: &NormBox) -> Self {
        let (x1, y1, x2, y2) = b.extent();
        Self { x1, y1, x2, y2 }
    }
}

/// Intersection over union. Zero when the union has zero area.
pub fn iou(a: &BoxXyxy, b: &BoxXyxy) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// A predicted box with its class and confidence, tagged with the image it
/// belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image: String,
    pub class_id: u32,
    pub bbox: BoxXyxy,
    pub confidence: f64,
}

impl Detection {
    pub fn new(
        image: impl Into<String>,
        class_id: u32,
        bbox: BoxXyxy,
        confidence: f64,
    ) -> Result<Self, MetricsError> {
        if !(0.0..=1.0).contains(&confidence) || confidence.is_nan() {
            return Err(MetricsError::ConfidenceOutOfRange(confidence));
        }
        Ok(Self {
            image: image.into(),
            class_id,
            bbox,
            confidence,
        })
    }
}

/// A ground-truth box with its class, tagged with its image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image: String,
    pub class_id: u32,
    pub bbox: BoxXyxy,
}

/// Per-detection outcome of greedy matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetMatch {
    pub is_tp: bool,
    /// Index of the matched ground truth, in the order they were passed in.
    pub matched_gt: Option<usize>,
}

/// Matching outcome for one image and one class. Detection entries are in
/// input order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub detections: Vec<DetMatch>,
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    pub fn tp_count(&self) -> usize {
        self.detections.iter().filter(|d| d.is_tp).count()
    }

    pub fn fp_count(&self) -> usize {
        self.detections.len() - self.tp_count()
    }
}

/// Greedy single-class matching: detections are processed in decreasing
/// confidence (ties by input order); each takes the still-unmatched ground
/// truth with the highest IoU if that IoU reaches the threshold, else it is
/// a false positive.
pub fn match_detections(
    dets: &[(f64, BoxXyxy)],
    gts: &[BoxXyxy],
    iou_threshold: f64,
) -> Result<MatchResult, MetricsError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(MetricsError::BadThreshold(iou_threshold));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].0.total_cmp(&dets[a].0).then(a.cmp(&b)));

    let mut result = MatchResult {
        detections: vec![
            DetMatch {
                is_tp: false,
                matched_gt: None
            };
            dets.len()
        ],
        gt_matched: vec![false; gts.len()],
    };
    for det_idx in order {
        let mut best: Option<(usize, f64)> = None;
        for (gt_idx, gt) in gts.iter().enumerate() {
            if result.gt_matched[gt_idx] {
                continue;
            }
            let overlap = iou(&dets[det_idx].1, gt);
            let better = match best {
                None => true,
                Some((_, b)) => overlap > b,
            };
            if better {
                best = Some((gt_idx, overlap));
            }
        }
        if let Some((gt_idx, overlap)) = best {
            if overlap >= iou_threshold {
                result.gt_matched[gt_idx] = true;
                result.detections[det_idx] = DetMatch {
                    is_tp: true,
                    matched_gt: Some(gt_idx),
                };
            }
        }
    }
    Ok(result)
}

/// Precision, recall, and F1 from a matching outcome.
///
/// Precision is 1 with no detections, recall is 1 with no ground truths, and
/// F1 is 0 when precision + recall is 0.
pub fn precision_recall_f1(result: &MatchResult, gt_count: usize) -> (f64, f64, f64) {
    prf_from_counts(result.tp_count(), result.fp_count(), gt_count)
}

pub fn prf_from_counts(tp: usize, fp: usize, gt_count: usize) -> (f64, f64, f64) {
    let p = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if gt_count == 0 {
        1.0
    } else {
        tp as f64 / gt_count as f64
    };
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f1)
}

/// Pools single-class detections across images, matches them per image at
/// the threshold, and returns `(confidence, is_tp)` in input order.
fn pooled_flags(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
) -> Result<Vec<(f64, bool)>, MetricsError> {
    let mut gt_by_image: BTreeMap<&str, Vec<BoxXyxy>> = BTreeMap::new();
    for gt in gts {
        gt_by_image.entry(&gt.image).or_default().push(gt.bbox);
    }
    let mut det_by_image: BTreeMap<&str, Vec<(usize, f64, BoxXyxy)>> = BTreeMap::new();
    for (i, det) in dets.iter().enumerate() {
        det_by_image
            .entry(&det.image)
            .or_default()
            .push((i, det.confidence, det.bbox));
    }

    let mut flags = vec![(0.0, false); dets.len()];
    for (image, img_dets) in &det_by_image {
        let empty = Vec::new();
        let img_gts = gt_by_image.get(image).unwrap_or(&empty);
        let pairs: Vec<(f64, BoxXyxy)> = img_dets.iter().map(|&(_, c, b)| (c, b)).collect();
        let result = match_detections(&pairs, img_gts, iou_threshold)?;
        for (slot, &(orig_idx, conf, _)) in img_dets.iter().enumerate() {
            flags[orig_idx] = (conf, result.detections[slot].is_tp);
        }
    }
    Ok(flags)
}

/// 101-point interpolated average precision for a single class.
///
/// Detections are ranked by confidence (ties by input order), the cumulative
/// precision/recall points take the monotone precision envelope, and the
/// envelope is averaged at the recall points {0.00, 0.01, ..., 1.00}.
/// With no ground truths, AP is 0 when any detections exist and 1 otherwise.
pub fn average_precision(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
) -> Result<f64, MetricsError> {
    if gts.is_empty() {
        return Ok(if dets.is_empty() { 1.0 } else { 0.0 });
    }
    let flags = pooled_flags(dets, gts, iou_threshold)?;
    Ok(ap_from_flags(&flags, gts.len()))
}

/// AP from pooled `(confidence, is_tp)` flags; `flags` are in input order.
fn ap_from_flags(flags: &[(f64, bool)], gt_count: usize) -> f64 {
    let mut order: Vec<usize> = (0..flags.len()).collect();
    order.sort_by(|&a, &b| flags[b].0.total_cmp(&flags[a].0).then(a.cmp(&b)));

    let mut points = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (rank, &idx) in order.iter().enumerate() {
        if flags[idx].1 {
            tp += 1;
        }
        let precision = tp as f64 / (rank + 1) as f64;
        let recall = tp as f64 / gt_count as f64;
        points.push((recall, precision));
    }

    // Monotone envelope from the right: env[i] = max precision at rank >= i.
    let mut envelope = vec![0.0f64; points.len()];
    let mut running = 0.0f64;
    for i in (0..points.len()).rev() {
        running = running.max(points[i].1);
        envelope[i] = running;
    }

    let mut total = 0.0;
    for i in 0..=100u32 {
        let r = i as f64 / 100.0;
        // First PR point with recall >= r carries the envelope value there.
        let value = points
            .iter()
            .position(|&(recall, _)| recall >= r)
            .map_or(0.0, |idx| envelope[idx]);
        total += value;
    }
    total / 101.0
}

/// Knobs for [`map_range`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    /// Confidence cutoff for the summary precision/recall/F1 (computed at
    /// IoU 0.50).
    pub confidence_threshold: f64,
    /// Optional class universe size. When set together with
    /// `include_absent_classes`, classes without ground truths or detections
    /// enter the mean with AP 1.
    pub class_count: Option<u32>,
    /// Whether absent classes count toward the class mean. Off by default:
    /// classes with zero ground truths and zero detections are skipped.
    pub include_absent_classes: bool,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.5,
            class_count: None,
            include_absent_classes: false,
        }
    }
}

/// Evaluation summary across classes and IoU thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub thresholds: Vec<f64>,
    /// AP per class (key) per threshold (aligned with `thresholds`).
    pub per_class: BTreeMap<u32, Vec<f64>>,
    /// Mean AP over classes, one entry per threshold.
    pub map_per_threshold: Vec<f64>,
    /// Mean AP at IoU 0.50, when that threshold was evaluated.
    pub map50: Option<f64>,
    /// Mean over the ten thresholds 0.50..0.95, when all were evaluated.
    pub map50_95: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confidence_threshold: f64,
}

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (50..=95).step_by(5).map(|p| p as f64 / 100.0).collect()
}

fn threshold_matches(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Computes AP per class per threshold plus the summary means and the
/// operating-point precision/recall/F1.
pub fn map_range(
    dets: &[Detection],
    gts: &[GroundTruth],
    thresholds: &[f64],
    opts: &MapOptions,
) -> Result<EvalSummary, MetricsError> {
    if thresholds.is_empty() {
        return Err(MetricsError::NoThresholds);
    }
    for &t in thresholds {
        if !(t > 0.0 && t < 1.0) {
            return Err(MetricsError::BadThreshold(t));
        }
    }

    let mut classes: BTreeSet<u32> = BTreeSet::new();
    classes.extend(gts.iter().map(|g| g.class_id));
    classes.extend(dets.iter().map(|d| d.class_id));
    if opts.include_absent_classes {
        if let Some(n) = opts.class_count {
            classes.extend(0..n);
        }
    }

    let mut per_class: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &class in &classes {
        let class_dets: Vec<Detection> = dets
            .iter()
            .filter(|d| d.class_id == class)
            .cloned()
            .collect();
        let class_gts: Vec<GroundTruth> = gts
            .iter()
            .filter(|g| g.class_id == class)
            .cloned()
            .collect();
        let mut aps = Vec::with_capacity(thresholds.len());
        for &t in thresholds {
            aps.push(average_precision(&class_dets, &class_gts, t)?);
        }
        per_class.insert(class, aps);
    }

    let map_per_threshold: Vec<f64> = (0..thresholds.len())
        .map(|ti| {
            if per_class.is_empty() {
                0.0
            } else {
                per_class.values().map(|aps| aps[ti]).sum::<f64>() / per_class.len() as f64
            }
        })
        .collect();

    let map50 = thresholds
        .iter()
        .position(|&t| threshold_matches(t, 0.5))
        .map(|i| map_per_threshold[i]);
    let canonical = coco_thresholds();
    let map50_95 = if canonical
        .iter()
        .all(|&c| thresholds.iter().any(|&t| threshold_matches(t, c)))
    {
        let mut sum = 0.0;
        for &c in &canonical {
            let i = thresholds
                .iter()
                .position(|&t| threshold_matches(t, c))
                .expect("checked above");
            sum += map_per_threshold[i];
        }
        Some(sum / canonical.len() as f64)
    } else {
        None
    };

    // Operating-point P/R/F1 at IoU 0.50 over detections above the
    // confidence cutoff, micro-averaged across images and classes.
    let kept: Vec<Detection> = dets
        .iter()
        .filter(|d| d.confidence >= opts.confidence_threshold)
        .cloned()
        .collect();
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &class in &classes {
        let class_dets: Vec<Detection> = kept
            .iter()
            .filter(|d| d.class_id == class)
            .cloned()
            .collect();
        let class_gts: Vec<GroundTruth> = gts
            .iter()
            .filter(|g| g.class_id == class)
            .cloned()
            .collect();
        let flags = pooled_flags(&class_dets, &class_gts, 0.5)?;
        let class_tp = flags.iter().filter(|&&(_, t)| t).count();
        tp += class_tp;
        fp += flags.len() - class_tp;
    }
    let (precision, recall, f1) = prf_from_counts(tp, fp, gts.len());

    Ok(EvalSummary {
        thresholds: thresholds.to_vec(),
        per_class,
        map_per_threshold,
        map50,
        map50_95,
        precision,
        recall,
        f1,
        confidence_threshold: opts.confidence_threshold,
    })
}

/// One record of the predictions interchange file: image stem, class id,
/// normalized `[cx, cy, w, h]` box, and confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image: String,
    pub class_id: u32,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub confidence: f64,
}

impl PredictionRecord {
    pub fn to_detection(&self) -> Result<Detection, MetricsError> {
        let [cx, cy, w, h] = self.bbox;
        Detection::new(
            self.image.clone(),
            self.class_id,
            BoxXyxy::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0),
            self.confidence,
        )
    }
}
