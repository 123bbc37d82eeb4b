//! The relabel loop: frames are queued automatically (low quality or
//! pleura-only) or flagged by a clinician override, reviewed, and exported
//! as a retraining set.

mod export;
mod overrides;
mod queue;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::detection::ImageSize;
use crate::scoring::{FrameAnalysis, QualityLabel, QualityRules};
use crate::video::VideoAnalysis;

pub use export::{
    export_retraining_set, file_stem, ExportFormat, ExportItem, ExportManifest, ExportedFrame, EXPORT_MANIFEST_FILE,
};
pub use overrides::{first_out_of_bounds, AnnotationBox, OverrideLog, OverrideRecord, OverrideRequest};
pub use queue::{
    relabel_reason, select_for_relabel, EntryStatus, QueueEvent, RelabelCandidate, RelabelQueue, RelabelQueueEntry,
    RelabelReason,
};

/// Default quality label at or below which frames are queued.
pub const DEFAULT_RELABEL_CUTOFF: QualityLabel = QualityLabel::BelowAverage;

#[derive(Debug, Error)]
pub enum ActiveLearningError {
    #[error("unknown frame {0:?}")]
    UnknownFrame(String),
    #[error("annotation {index} lies outside the {width}x{height} image")]
    BoxOutOfBounds { index: usize, width: u32, height: u32 },
    #[error("invalid queue transition: {0}")]
    Transition(String),
    #[error("frame {0:?} has neither an override nor ground-truth annotations")]
    NoAnnotationSource(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What the review workflow needs to know about a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameInfo {
    pub video_id: String,
    pub image_size: ImageSize,
}

/// Result of accepting an override.
#[derive(Debug, Clone, PartialEq)]
pub struct OverrideOutcome {
    pub record: OverrideRecord,
    /// The frame re-scored from the override's boxes.
    pub rescored: FrameAnalysis,
    pub queue_events: Vec<QueueEvent>,
}

/// Override history and relabel queue for one study.
///
/// Mutators return the events they applied; callers persist those to keep
/// the on-disk logs in step.
#[derive(Debug, Clone, Default)]
pub struct ReviewState {
    frames: BTreeMap<String, FrameInfo>,
    overrides: OverrideLog,
    queue: RelabelQueue,
}

impl ReviewState {
    pub fn new(
        frames: BTreeMap<String, FrameInfo>,
        overrides: Vec<OverrideRecord>,
        queue_events: &[QueueEvent],
    ) -> Result<Self, ActiveLearningError> {
        Ok(ReviewState {
            frames,
            overrides: OverrideLog::from_records(overrides),
            queue: RelabelQueue::replay(queue_events)?,
        })
    }

    pub fn overrides(&self) -> &OverrideLog {
        &self.overrides
    }

    pub fn queue(&self) -> &RelabelQueue {
        &self.queue
    }

    pub fn frame(&self, frame_id: &str) -> Option<&FrameInfo> {
        self.frames.get(frame_id)
    }

    pub fn validate_override(&self, record: &OverrideRecord) -> Result<(), ActiveLearningError> {
        let info = self
            .frames
            .get(&record.frame_id)
            .ok_or_else(|| ActiveLearningError::UnknownFrame(record.frame_id.clone()))?;
        if let Some(index) = first_out_of_bounds(&record.annotations, info.image_size) {
            return Err(ActiveLearningError::BoxOutOfBounds {
                index,
                width: info.image_size.width,
                height: info.image_size.height,
            });
        }
        Ok(())
    }

    /// Appends the record, moves the frame's pending entry to Reviewed (or
    /// files a reviewed ClinicianFlag entry) and re-scores the frame. A frame
    /// never has more than one Reviewed entry.
    pub fn apply_override(
        &mut self,
        record: OverrideRecord,
        rules: QualityRules,
    ) -> Result<OverrideOutcome, ActiveLearningError> {
        self.validate_override(&record)?;
        let info = &self.frames[&record.frame_id];
        let at = record.created_at;

        let reviewed = QueueEvent::Reviewed {
            frame_id: record.frame_id.clone(),
            at,
        };
        let queue_events = match self.queue.entry(&record.frame_id).map(|e| e.status) {
            Some(EntryStatus::Pending) => vec![reviewed],
            // already awaiting export; the newer override simply wins
            Some(EntryStatus::Reviewed) => vec![],
            None | Some(EntryStatus::Exported) => vec![
                QueueEvent::Enqueued {
                    frame_id: record.frame_id.clone(),
                    video_id: info.video_id.clone(),
                    reason: RelabelReason::ClinicianFlag,
                    at,
                },
                reviewed,
            ],
        };
        for e in &queue_events {
            self.queue.apply(e)?;
        }

        let rescored = FrameAnalysis::from_kept(
            record.frame_id.clone(),
            record.annotations.iter().map(|a| a.to_detection()).collect(),
            rules,
        );
        self.overrides.append(record.clone());
        Ok(OverrideOutcome {
            record,
            rescored,
            queue_events,
        })
    }

    /// Queues automatically selected frames the queue has not seen before.
    pub fn sync_selection(
        &mut self,
        videos: &[VideoAnalysis],
        cutoff: QualityLabel,
        at: DateTime<Utc>,
    ) -> Vec<QueueEvent> {
        let candidates = select_for_relabel(videos, cutoff);
        self.queue.enqueue_new(&candidates, at)
    }

    /// Reviewed entries, oldest first.
    pub fn reviewed(&self) -> Vec<&RelabelQueueEntry> {
        self.queue.with_status(EntryStatus::Reviewed).collect()
    }

    pub fn mark_exported(
        &mut self,
        frame_ids: &[String],
        at: DateTime<Utc>,
    ) -> Result<Vec<QueueEvent>, ActiveLearningError> {
        let mut events = Vec::with_capacity(frame_ids.len());
        for frame_id in frame_ids {
            let ev = QueueEvent::Exported {
                frame_id: frame_id.clone(),
                at,
            };
            self.queue.apply(&ev)?;
            events.push(ev);
        }
        Ok(events)
    }
}
