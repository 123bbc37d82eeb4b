//! Per-frame image-quality and infection-severity scoring.
//!
//! Both scorers look only at which landmark classes are present in a frame;
//! how many boxes of a class were found does not matter.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::{filter_confidence, nms, Detection, FrameDetections, LandmarkClass, LandmarkSet};

/// Five-level quality label, ordered worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityLabel {
    Bad,
    BelowAverage,
    Average,
    Good,
    Excellent,
}

impl QualityLabel {
    pub fn from_score(score: u8) -> Self {
        match score {
            90.. => QualityLabel::Excellent,
            75..=89 => QualityLabel::Good,
            45..=74 => QualityLabel::Average,
            30..=44 => QualityLabel::BelowAverage,
            _ => QualityLabel::Bad,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QualityLabel::Bad => "Bad",
            QualityLabel::BelowAverage => "BelowAverage",
            QualityLabel::Average => "Average",
            QualityLabel::Good => "Good",
            QualityLabel::Excellent => "Excellent",
        }
    }
}

impl fmt::Display for QualityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            QualityLabel::Bad,
            QualityLabel::BelowAverage,
            QualityLabel::Average,
            QualityLabel::Good,
            QualityLabel::Excellent,
        ]
        .into_iter()
        .find(|l| l.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown quality label {s:?}"))
    }
}

/// A quality bucket and the points it awards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityBucket {
    Pleura,
    Rib,
    Shadow,
    Artifact,
}

impl QualityBucket {
    pub fn points(self) -> u8 {
        match self {
            QualityBucket::Pleura => 30,
            QualityBucket::Rib => 15,
            QualityBucket::Shadow => 10,
            QualityBucket::Artifact => 45,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityResult {
    pub score: u8,
    pub label: QualityLabel,
    pub components: BTreeSet<QualityBucket>,
}

/// Quality scoring switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityRules {
    /// Withhold the artifact bucket unless pleura was also found.
    pub artifact_requires_pleura: bool,
}

impl QualityRules {
    pub fn score(&self, present: LandmarkSet) -> QualityResult {
        let has_pleura = present.contains(LandmarkClass::Pleura);
        let mut components = BTreeSet::new();
        if has_pleura {
            components.insert(QualityBucket::Pleura);
        }
        if present.contains(LandmarkClass::Rib) {
            components.insert(QualityBucket::Rib);
        }
        if present.contains(LandmarkClass::Shadow) {
            components.insert(QualityBucket::Shadow);
        }
        let has_artifact = present.manifestations().next().is_some();
        if has_artifact && (has_pleura || !self.artifact_requires_pleura) {
            components.insert(QualityBucket::Artifact);
        }
        let score = components.iter().map(|b| b.points()).sum();
        QualityResult {
            score,
            label: QualityLabel::from_score(score),
            components,
        }
    }
}

/// Quality score under the default rules.
pub fn quality_score(present: LandmarkSet) -> QualityResult {
    QualityRules::default().score(present)
}

/// Score sentinel for frames with no pleura.
pub const SEVERITY_UNDETECTED: i8 = -2;
/// Score sentinel for frames with pleura but no manifestation.
pub const SEVERITY_NO_MANIFESTATION: i8 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityResult {
    pub score: i8,
    pub class: u8,
    pub driving_class: Option<LandmarkClass>,
}

/// Maps a severity score in `-2..=4` to its class in `0..=6`.
pub fn severity_class(score: i8) -> u8 {
    match score {
        SEVERITY_UNDETECTED => 0,
        SEVERITY_NO_MANIFESTATION => 6,
        0..=4 => (score + 1) as u8,
        _ => panic!("severity score {score} outside -2..=4"),
    }
}

pub fn severity_score(present: LandmarkSet) -> SeverityResult {
    if !present.contains(LandmarkClass::Pleura) {
        return SeverityResult {
            score: SEVERITY_UNDETECTED,
            class: 0,
            driving_class: None,
        };
    }
    let worst = present
        .manifestations()
        .filter_map(|c| c.severity_value().map(|v| (v, c)))
        .max();
    match worst {
        None => SeverityResult {
            score: SEVERITY_NO_MANIFESTATION,
            class: 6,
            driving_class: None,
        },
        Some((score, class)) => SeverityResult {
            score,
            class: severity_class(score),
            driving_class: Some(class),
        },
    }
}

/// Thresholds and switches for turning raw detections into a scored frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScoring {
    pub confidence_threshold: f64,
    pub nms_iou_threshold: f64,
    pub quality: QualityRules,
}

impl Default for FrameScoring {
    fn default() -> Self {
        FrameScoring {
            confidence_threshold: crate::detection::DEFAULT_CONFIDENCE_THRESHOLD,
            nms_iou_threshold: crate::detection::DEFAULT_NMS_IOU_THRESHOLD,
            quality: QualityRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnalysis {
    pub frame_id: String,
    pub detections: Vec<Detection>,
    pub quality: QualityResult,
    pub severity: SeverityResult,
}

impl FrameAnalysis {
    pub fn present(&self) -> LandmarkSet {
        self.detections.iter().map(|d| d.class).collect()
    }

    /// Scores an already-cleaned detection list as-is.
    pub fn from_kept(frame_id: impl Into<String>, detections: Vec<Detection>, rules: QualityRules) -> Self {
        let present: LandmarkSet = detections.iter().map(|d| d.class).collect();
        FrameAnalysis {
            frame_id: frame_id.into(),
            detections,
            quality: rules.score(present),
            severity: severity_score(present),
        }
    }
}

/// Confidence filter, NMS, then both scorers.
pub fn analyze_frame(frame: &FrameDetections, scoring: &FrameScoring) -> FrameAnalysis {
    let confident = filter_confidence(&frame.detections, scoring.confidence_threshold);
    let kept = nms(&confident, scoring.nms_iou_threshold);
    FrameAnalysis::from_kept(frame.frame_id.clone(), kept, scoring.quality)
}
