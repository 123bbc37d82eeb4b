use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::detection::{BBox, Detection, ImageSize, LandmarkClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationBox {
    pub class: LandmarkClass,
    pub bbox: BBox,
}

impl AnnotationBox {
    pub fn to_detection(self) -> Detection {
        Detection::ground_truth(self.class, self.bbox)
    }
}

impl From<&Detection> for AnnotationBox {
    fn from(d: &Detection) -> Self {
        AnnotationBox {
            class: d.class,
            bbox: d.bbox,
        }
    }
}

/// A clinician's complete replacement annotation set for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub frame_id: String,
    pub author: String,
    pub created_at: DateTime<Utc>,
    pub annotations: Vec<AnnotationBox>,
    #[serde(default)]
    pub note: Option<String>,
}

/// An override as submitted, before it is timestamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRequest {
    #[serde(default)]
    pub frame_id: Option<String>,
    pub author: String,
    pub annotations: Vec<AnnotationBox>,
    #[serde(default)]
    pub note: Option<String>,
}

impl OverrideRequest {
    pub fn into_record(self, frame_id: String, created_at: DateTime<Utc>) -> OverrideRecord {
        OverrideRecord {
            frame_id,
            author: self.author,
            created_at,
            annotations: self.annotations,
            note: self.note,
        }
    }
}

/// Index of the first box outside the image, if any.
pub fn first_out_of_bounds(annotations: &[AnnotationBox], size: ImageSize) -> Option<usize> {
    annotations.iter().position(|a| !a.bbox.is_within(size))
}

/// Append-only override history; the newest record per frame is in force.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverrideLog {
    records: Vec<OverrideRecord>,
}

impl OverrideLog {
    pub fn from_records(records: Vec<OverrideRecord>) -> Self {
        OverrideLog { records }
    }

    pub fn records(&self) -> &[OverrideRecord] {
        &self.records
    }

    pub fn append(&mut self, record: OverrideRecord) {
        self.records.push(record);
    }

    pub fn latest(&self, frame_id: &str) -> Option<&OverrideRecord> {
        self.records.iter().rev().find(|r| r.frame_id == frame_id)
    }

    pub fn history<'a>(&'a self, frame_id: &'a str) -> impl Iterator<Item = &'a OverrideRecord> + 'a {
        self.records.iter().filter(move |r| r.frame_id == frame_id)
    }

    /// Effective annotations of every overridden frame.
    pub fn effective(&self) -> BTreeMap<&str, &[AnnotationBox]> {
        let mut map = BTreeMap::new();
        for r in &self.records {
            map.insert(r.frame_id.as_str(), r.annotations.as_slice());
        }
        map
    }
}
