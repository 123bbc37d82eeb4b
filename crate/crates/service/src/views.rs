//! Response and request bodies of the HTTP API.

use serde::{Deserialize, Serialize};
use triage_core::active_learning::{AnnotationBox, EntryStatus, ExportFormat, OverrideRecord, RelabelQueueEntry};
use triage_core::annotation::ProbeType;
use triage_core::detection::{Detection, ImageSize};
use triage_core::scoring::{QualityResult, SeverityResult};
use triage_core::video::VideoAnalysis;
use triage_core::SCHEMA_VERSION;

use crate::store::Study;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study_id: String,
    pub probe_type: ProbeType,
    pub video_count: usize,
    pub frame_count: usize,
    pub pending_count: usize,
    pub reviewed_count: usize,
}

impl StudySummary {
    pub fn of(study: &Study) -> Self {
        let state = study.lock();
        let q = state.review.queue();
        StudySummary {
            study_id: study.id().to_string(),
            probe_type: study.manifest.probe_type,
            video_count: study.manifest.videos.len(),
            frame_count: study.manifest.videos.iter().map(|v| v.frames.len()).sum(),
            pending_count: q.with_status(EntryStatus::Pending).count(),
            reviewed_count: q.with_status(EntryStatus::Reviewed).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyList {
    pub schema_version: u32,
    pub studies: Vec<StudySummary>,
}

impl StudyList {
    pub fn new(studies: Vec<StudySummary>) -> Self {
        StudyList {
            schema_version: SCHEMA_VERSION,
            studies,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoView {
    pub schema_version: u32,
    pub study_id: String,
    pub scan_location: Option<u8>,
    pub fps: f64,
    #[serde(flatten)]
    pub analysis: VideoAnalysis,
}

/// Where a frame's effective annotations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationOrigin {
    Detector,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameView {
    pub schema_version: u32,
    pub study_id: String,
    pub video_id: String,
    pub frame_id: String,
    /// API path of the image bytes.
    pub image_url: String,
    pub image_size: ImageSize,
    /// Detector boxes kept after confidence filtering and NMS.
    pub detections: Vec<Detection>,
    /// Scores of the effective annotations.
    pub quality: QualityResult,
    pub severity: SeverityResult,
    pub source: AnnotationOrigin,
    pub effective_annotations: Vec<AnnotationBox>,
    #[serde(rename = "override")]
    pub latest_override: Option<OverrideRecord>,
    pub queue_entry: Option<RelabelQueueEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueView {
    pub schema_version: u32,
    pub study_id: String,
    /// Pending and Reviewed entries, oldest first.
    pub entries: Vec<RelabelQueueEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideCreated {
    pub schema_version: u32,
    #[serde(flatten)]
    pub record: OverrideRecord,
    pub quality: QualityResult,
    pub severity: SeverityResult,
    pub queue_entry: Option<RelabelQueueEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportRequest {
    pub format: ExportFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}
