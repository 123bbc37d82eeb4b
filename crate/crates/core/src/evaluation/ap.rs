use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{match_detections, ClassMatches, EvalError};
use crate::detection::{FrameDetections, LandmarkClass};

/// All-point interpolated average precision.
///
/// Predictions sharing a confidence value enter the ranking together, so
/// the result depends only on the ordering of confidences. Returns `None`
/// when the class has neither ground truth nor predictions.
pub fn average_precision(m: &ClassMatches) -> Option<f64> {
    if !m.is_defined() {
        return None;
    }
    if m.gt_count == 0 || m.scored.is_empty() {
        return Some(0.0);
    }
    let mut ranked = m.scored.clone();
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    // (recall, precision) at the end of each confidence group
    let gt = m.gt_count as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < ranked.len() {
        let conf = ranked[i].confidence;
        while i < ranked.len() && ranked[i].confidence == conf {
            seen += 1;
            tp += usize::from(ranked[i].true_positive);
            i += 1;
        }
        points.push((tp as f64 / gt, tp as f64 / seen as f64));
    }

    let mut envelope = 0.0_f64;
    for p in points.iter_mut().rev() {
        envelope = envelope.max(p.1);
        p.1 = envelope;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// The ten IoU thresholds 0.50, 0.55, .., 0.95.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub iou_thresholds: Vec<f64>,
    /// AP per class at each threshold, aligned with `iou_thresholds`.
    pub per_class: BTreeMap<LandmarkClass, Vec<Option<f64>>>,
    /// Per-class AP averaged over the thresholds.
    pub per_class_mean: BTreeMap<LandmarkClass, Option<f64>>,
    /// Mean over defined classes at each threshold.
    pub per_threshold: Vec<Option<f64>>,
    /// Mean of `per_threshold`.
    pub map: Option<f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Re-matches at every threshold and averages AP over classes, then thresholds.
pub fn evaluate_map(
    gt: &[FrameDetections],
    pred: &[FrameDetections],
    iou_thresholds: &[f64],
) -> Result<MapReport, EvalError> {
    if iou_thresholds.is_empty() {
        return Err(EvalError::NoThresholds);
    }
    let mut per_class: BTreeMap<LandmarkClass, Vec<Option<f64>>> = BTreeMap::new();
    let mut per_threshold = Vec::with_capacity(iou_thresholds.len());
    for &t in iou_thresholds {
        let matches = match_detections(gt, pred, t)?;
        let mut defined = Vec::new();
        for (class, m) in &matches.classes {
            let ap = average_precision(m);
            defined.extend(ap);
            per_class.entry(*class).or_default().push(ap);
        }
        per_threshold.push(mean(defined));
    }
    let per_class_mean = per_class
        .iter()
        .map(|(c, aps)| (*c, mean(aps.iter().flatten().copied())))
        .collect();
    let map = mean(per_threshold.iter().flatten().copied());
    Ok(MapReport {
        iou_thresholds: iou_thresholds.to_vec(),
        per_class,
        per_class_mean,
        per_threshold,
        map,
    })
}

/// mAP over the given thresholds; `None` when no class has any boxes.
pub fn mean_ap(
    gt: &[FrameDetections],
    pred: &[FrameDetections],
    iou_thresholds: &[f64],
) -> Result<Option<f64>, EvalError> {
    Ok(evaluate_map(gt, pred, iou_thresholds)?.map)
}
