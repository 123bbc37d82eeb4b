//! Scoring a detector against ground truth: matching, AP/mAP, PR/F1
//! curves, and confusion-matrix metrics.

mod ap;
mod confusion;
mod curves;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{iou, FrameDetections, LandmarkClass};

pub use ap::{average_precision, coco_iou_thresholds, evaluate_map, mean_ap, MapReport};
pub use confusion::{
    binary_video_matrix, binary_video_metrics, build_frame_confusion, confusion_metrics, BinaryVideoMetrics,
    ClassMetric, ClassMetrics, ConfusionMatrix, NO_CLASS,
};
pub use curves::{
    confidence_grid, curves_to_csv, operating_point, pr_f1_curves, CurvePoint, CurveSet, OperatingPointRow,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("prediction frame {0:?} has no ground-truth frame")]
    UnknownFrame(String),
    #[error("frame {0:?} appears more than once")]
    DuplicateFrame(String),
    #[error("no IoU thresholds given")]
    NoThresholds,
    #[error("invalid confusion matrix: {0}")]
    InvalidMatrix(String),
    #[error("ground-truth class {0} is outside 1..5")]
    LabelOutOfRange(u8),
    #[error("{0}")]
    Mismatch(String),
}

/// One prediction after matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredMatch {
    pub confidence: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMatches {
    pub scored: Vec<ScoredMatch>,
    pub gt_count: usize,
}

impl ClassMatches {
    pub fn tp_count(&self) -> usize {
        self.scored.iter().filter(|s| s.true_positive).count()
    }

    /// AP is undefined when there is nothing to score.
    pub fn is_defined(&self) -> bool {
        self.gt_count > 0 || !self.scored.is_empty()
    }
}

/// Matching outcome for every landmark class at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub iou_threshold: f64,
    pub classes: BTreeMap<LandmarkClass, ClassMatches>,
}

impl MatchResult {
    pub fn class(&self, class: LandmarkClass) -> &ClassMatches {
        &self.classes[&class]
    }
}

fn index_frames(frames: &[FrameDetections]) -> Result<HashMap<&str, &FrameDetections>, EvalError> {
    let mut map = HashMap::with_capacity(frames.len());
    for f in frames {
        if map.insert(f.frame_id.as_str(), f).is_some() {
            return Err(EvalError::DuplicateFrame(f.frame_id.clone()));
        }
    }
    Ok(map)
}

/// Greedy per-frame, per-class matching.
///
/// Predictions are visited by descending confidence (ties by input order)
/// and claim the unmatched same-class ground-truth box with the highest
/// IoU `>= iou_threshold`, lowest index on IoU ties. Ground-truth frames
/// without predictions contribute false negatives only.
pub fn match_detections(
    gt: &[FrameDetections],
    pred: &[FrameDetections],
    iou_threshold: f64,
) -> Result<MatchResult, EvalError> {
    let gt_index = index_frames(gt)?;
    let pred_index = index_frames(pred)?;
    if let Some(unknown) = pred.iter().find(|p| !gt_index.contains_key(p.frame_id.as_str())) {
        return Err(EvalError::UnknownFrame(unknown.frame_id.clone()));
    }

    let mut classes: BTreeMap<LandmarkClass, ClassMatches> = LandmarkClass::ALL
        .into_iter()
        .map(|c| (c, ClassMatches::default()))
        .collect();

    for g in gt {
        for d in &g.detections {
            classes.get_mut(&d.class).expect("all classes present").gt_count += 1;
        }
        let Some(p) = pred_index.get(g.frame_id.as_str()) else {
            continue;
        };
        for class in LandmarkClass::ALL {
            let gt_boxes: Vec<_> = g.detections.iter().filter(|d| d.class == class).collect();
            let mut preds: Vec<_> = p.detections.iter().filter(|d| d.class == class).collect();
            preds.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

            let mut taken = vec![false; gt_boxes.len()];
            let entry = classes.get_mut(&class).expect("all classes present");
            for det in preds {
                let mut best: Option<(usize, f64)> = None;
                for (gi, g_det) in gt_boxes.iter().enumerate() {
                    if taken[gi] {
                        continue;
                    }
                    let o = iou(&det.bbox, &g_det.bbox);
                    if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                        best = Some((gi, o));
                    }
                }
                if let Some((gi, _)) = best {
                    taken[gi] = true;
                }
                entry.scored.push(ScoredMatch {
                    confidence: det.confidence,
                    true_positive: best.is_some(),
                });
            }
        }
    }
    Ok(MatchResult { iou_threshold, classes })
}
