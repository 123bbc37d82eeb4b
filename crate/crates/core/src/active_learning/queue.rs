use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ActiveLearningError;
use crate::detection::LandmarkClass;
use crate::scoring::{FrameAnalysis, QualityLabel};
use crate::video::VideoAnalysis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelabelReason {
    LowQuality,
    PleuraOnly,
    ClinicianFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntryStatus {
    Pending,
    Reviewed,
    Exported,
}

impl fmt::Display for EntryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelabelQueueEntry {
    pub frame_id: String,
    pub video_id: String,
    pub reason: RelabelReason,
    pub enqueued_at: DateTime<Utc>,
    pub status: EntryStatus,
}

/// One line of the persisted queue log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum QueueEvent {
    Enqueued {
        frame_id: String,
        video_id: String,
        reason: RelabelReason,
        at: DateTime<Utc>,
    },
    Reviewed {
        frame_id: String,
        at: DateTime<Utc>,
    },
    Exported {
        frame_id: String,
        at: DateTime<Utc>,
    },
}

/// A frame proposed for relabelling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelabelCandidate {
    pub frame_id: String,
    pub video_id: String,
    pub reason: RelabelReason,
}

/// Why a frame should be relabelled, if at all. A pleura-only frame wins
/// over the generic quality gate.
pub fn relabel_reason(frame: &FrameAnalysis, quality_cutoff: QualityLabel) -> Option<RelabelReason> {
    let present = frame.present();
    if present.len() == 1 && present.contains(LandmarkClass::Pleura) {
        Some(RelabelReason::PleuraOnly)
    } else if frame.quality.label <= quality_cutoff {
        Some(RelabelReason::LowQuality)
    } else {
        None
    }
}

/// Candidates in video order, then frame order.
pub fn select_for_relabel(videos: &[VideoAnalysis], quality_cutoff: QualityLabel) -> Vec<RelabelCandidate> {
    videos
        .iter()
        .flat_map(|v| {
            v.frames.iter().filter_map(move |f| {
                relabel_reason(f, quality_cutoff).map(|reason| RelabelCandidate {
                    frame_id: f.frame_id.clone(),
                    video_id: v.video_id.clone(),
                    reason,
                })
            })
        })
        .collect()
}

/// Relabel queue rebuilt from its event log.
///
/// A frame has at most one Pending entry; entries move Pending → Reviewed
/// → Exported and nothing else.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelabelQueue {
    entries: Vec<RelabelQueueEntry>,
}

impl RelabelQueue {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a QueueEvent>) -> Result<Self, ActiveLearningError> {
        let mut q = RelabelQueue::default();
        for e in events {
            q.apply(e)?;
        }
        Ok(q)
    }

    pub fn entries(&self) -> &[RelabelQueueEntry] {
        &self.entries
    }

    pub fn with_status(&self, status: EntryStatus) -> impl Iterator<Item = &RelabelQueueEntry> {
        self.entries.iter().filter(move |e| e.status == status)
    }

    /// The newest entry for a frame.
    pub fn entry(&self, frame_id: &str) -> Option<&RelabelQueueEntry> {
        self.entries.iter().rev().find(|e| e.frame_id == frame_id)
    }

    fn position(&self, frame_id: &str, status: EntryStatus) -> Option<usize> {
        self.entries
            .iter()
            .rposition(|e| e.frame_id == frame_id && e.status == status)
    }

    pub fn apply(&mut self, event: &QueueEvent) -> Result<(), ActiveLearningError> {
        match event {
            QueueEvent::Enqueued {
                frame_id,
                video_id,
                reason,
                at,
            } => {
                if self.position(frame_id, EntryStatus::Pending).is_some() {
                    return Err(ActiveLearningError::Transition(format!(
                        "frame {frame_id:?} already has a pending entry"
                    )));
                }
                self.entries.push(RelabelQueueEntry {
                    frame_id: frame_id.clone(),
                    video_id: video_id.clone(),
                    reason: *reason,
                    enqueued_at: *at,
                    status: EntryStatus::Pending,
                });
            }
            QueueEvent::Reviewed { frame_id, .. } => {
                let i = self.position(frame_id, EntryStatus::Pending).ok_or_else(|| {
                    ActiveLearningError::Transition(format!("frame {frame_id:?} has no pending entry"))
                })?;
                self.entries[i].status = EntryStatus::Reviewed;
            }
            QueueEvent::Exported { frame_id, .. } => {
                let i = self.position(frame_id, EntryStatus::Reviewed).ok_or_else(|| {
                    ActiveLearningError::Transition(format!("frame {frame_id:?} has no reviewed entry"))
                })?;
                self.entries[i].status = EntryStatus::Exported;
            }
        }
        Ok(())
    }

    /// Enqueues candidates for frames the queue has never seen. Returns the
    /// applied events so the caller can persist them.
    pub fn enqueue_new(&mut self, candidates: &[RelabelCandidate], at: DateTime<Utc>) -> Vec<QueueEvent> {
        let mut events = Vec::new();
        for c in candidates {
            if self.entry(&c.frame_id).is_some() {
                continue;
            }
            let ev = QueueEvent::Enqueued {
                frame_id: c.frame_id.clone(),
                video_id: c.video_id.clone(),
                reason: c.reason,
                at,
            };
            self.apply(&ev).expect("frame has no entry yet");
            events.push(ev);
        }
        events
    }
}
