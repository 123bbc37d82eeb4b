//! Boxes, the landmark taxonomy, confidence filtering and class-wise NMS.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default confidence cut applied before scoring.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.25;
/// Default IoU above which a same-class box is suppressed.
pub const DEFAULT_NMS_IOU_THRESHOLD: f64 = 0.45;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("class id {0} is outside 0..7")]
    ClassIdOutOfRange(i64),
    #[error("unknown landmark class name {0:?}")]
    UnknownClassName(String),
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max}): {reason}")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        reason: &'static str,
    },
    #[error("confidence {0} is outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("invalid image size {0}x{1}")]
    InvalidImageSize(u32, u32),
}

/// Whether a landmark is anatomy the probe should always see, or a finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkCategory {
    Structural,
    Manifestation,
}

/// The eight landmark classes a detector reports.
///
/// Discriminants are the canonical integer ids (alphabetical by name).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LandmarkClass {
    ALines = 0,
    AirBronchogram = 1,
    BLines = 2,
    BPatch = 3,
    Consolidation = 4,
    Pleura = 5,
    Rib = 6,
    Shadow = 7,
}

impl LandmarkClass {
    pub const ALL: [LandmarkClass; 8] = [
        LandmarkClass::ALines,
        LandmarkClass::AirBronchogram,
        LandmarkClass::BLines,
        LandmarkClass::BPatch,
        LandmarkClass::Consolidation,
        LandmarkClass::Pleura,
        LandmarkClass::Rib,
        LandmarkClass::Shadow,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: i64) -> Result<Self, DetectionError> {
        usize::try_from(id)
            .ok()
            .and_then(|i| Self::ALL.get(i).copied())
            .ok_or(DetectionError::ClassIdOutOfRange(id))
    }

    pub fn name(self) -> &'static str {
        match self {
            LandmarkClass::ALines => "ALines",
            LandmarkClass::AirBronchogram => "AirBronchogram",
            LandmarkClass::BLines => "BLines",
            LandmarkClass::BPatch => "BPatch",
            LandmarkClass::Consolidation => "Consolidation",
            LandmarkClass::Pleura => "Pleura",
            LandmarkClass::Rib => "Rib",
            LandmarkClass::Shadow => "Shadow",
        }
    }

    pub fn category(self) -> LandmarkCategory {
        match self {
            LandmarkClass::Pleura | LandmarkClass::Rib | LandmarkClass::Shadow => LandmarkCategory::Structural,
            _ => LandmarkCategory::Manifestation,
        }
    }

    pub fn is_manifestation(self) -> bool {
        self.category() == LandmarkCategory::Manifestation
    }

    /// Severity contributed by a manifestation; `None` for structural classes.
    pub fn severity_value(self) -> Option<i8> {
        match self {
            LandmarkClass::ALines => Some(0),
            LandmarkClass::BLines => Some(1),
            LandmarkClass::BPatch => Some(2),
            LandmarkClass::Consolidation => Some(3),
            LandmarkClass::AirBronchogram => Some(4),
            LandmarkClass::Pleura | LandmarkClass::Rib | LandmarkClass::Shadow => None,
        }
    }
}

impl fmt::Display for LandmarkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LandmarkClass {
    type Err = DetectionError;

    /// Parses the canonical name exactly (`"BLines"`); aliases live in
    /// [`crate::annotation::AliasTable`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| DetectionError::UnknownClassName(s.to_string()))
    }
}

/// A set of landmark classes packed into one byte.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LandmarkSet(u8);

impl LandmarkSet {
    pub const fn empty() -> Self {
        LandmarkSet(0)
    }

    /// Builds the set whose members are the set bits of `bits`, bit i being class id i.
    pub const fn from_bits(bits: u8) -> Self {
        LandmarkSet(bits)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub fn insert(&mut self, class: LandmarkClass) {
        self.0 |= 1 << class.id();
    }

    pub fn with(mut self, class: LandmarkClass) -> Self {
        self.insert(class);
        self
    }

    pub fn contains(self, class: LandmarkClass) -> bool {
        self.0 & (1 << class.id()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = LandmarkClass> {
        LandmarkClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    pub fn manifestations(self) -> impl Iterator<Item = LandmarkClass> {
        self.iter().filter(|c| c.is_manifestation())
    }

    pub fn is_subset(self, other: LandmarkSet) -> bool {
        self.0 & !other.0 == 0
    }
}

impl FromIterator<LandmarkClass> for LandmarkSet {
    fn from_iter<I: IntoIterator<Item = LandmarkClass>>(iter: I) -> Self {
        let mut set = LandmarkSet::empty();
        for class in iter {
            set.insert(class);
        }
        set
    }
}

impl Serialize for LandmarkSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LandmarkSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let classes = Vec::<LandmarkClass>::deserialize(deserializer)?;
        Ok(classes.into_iter().collect())
    }
}

/// Axis-aligned box in corner form, continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, DetectionError> {
        let invalid = |reason| DetectionError::InvalidBox {
            x_min,
            y_min,
            x_max,
            y_max,
            reason,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x_min > x_max || y_min > y_max {
            return Err(invalid("min corner exceeds max corner"));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self, DetectionError> {
        BBox::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    /// Clamps every coordinate into `[0, width] x [0, height]`.
    pub fn clamp_to(&self, size: ImageSize) -> Self {
        let w = f64::from(size.width);
        let h = f64::from(size.height);
        BBox {
            x_min: self.x_min.clamp(0.0, w),
            y_min: self.y_min.clamp(0.0, h),
            x_max: self.x_max.clamp(0.0, w),
            y_max: self.y_max.clamp(0.0, h),
        }
    }

    pub fn is_within(&self, size: ImageSize) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= f64::from(size.width)
            && self.y_max <= f64::from(size.height)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = DetectionError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.corners()
    }
}

/// Intersection over union; zero when both boxes are degenerate.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Result<Self, DetectionError> {
        if width == 0 || height == 0 {
            return Err(DetectionError::InvalidImageSize(width, height));
        }
        Ok(ImageSize { width, height })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class: LandmarkClass,
    #[serde(deserialize_with = "deserialize_confidence")]
    pub confidence: f64,
}

fn deserialize_confidence<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let c = f64::deserialize(d)?;
    check_confidence(c).map_err(serde::de::Error::custom)
}

fn check_confidence(c: f64) -> Result<f64, DetectionError> {
    if (0.0..=1.0).contains(&c) {
        Ok(c)
    } else {
        Err(DetectionError::InvalidConfidence(c))
    }
}

impl Detection {
    pub fn new(class: LandmarkClass, bbox: BBox, confidence: f64) -> Result<Self, DetectionError> {
        Ok(Detection {
            bbox,
            class,
            confidence: check_confidence(confidence)?,
        })
    }

    /// A ground-truth box, which always carries confidence 1.
    pub fn ground_truth(class: LandmarkClass, bbox: BBox) -> Self {
        Detection {
            bbox,
            class,
            confidence: 1.0,
        }
    }
}

/// All detections reported for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_id: String,
    pub image_size: ImageSize,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn new(frame_id: impl Into<String>, image_size: ImageSize) -> Self {
        FrameDetections {
            frame_id: frame_id.into(),
            image_size,
            detections: Vec::new(),
        }
    }

    pub fn with_detections(mut self, detections: Vec<Detection>) -> Self {
        self.detections = detections;
        self
    }

    pub fn classes(&self) -> LandmarkSet {
        self.detections.iter().map(|d| d.class).collect()
    }
}

/// Keeps detections with `confidence >= threshold`, preserving order.
pub fn filter_confidence(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.confidence >= threshold).copied().collect()
}

/// Class-wise greedy non-maximum suppression.
///
/// A candidate is dropped when its IoU with an already kept box of the same
/// class is strictly greater than `iou_threshold`. The result is ordered by
/// descending confidence, ties by input position.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));

    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len());
    for idx in order {
        let cand = &dets[idx];
        let suppressed = kept
            .iter()
            .any(|k| k.class == cand.class && iou(&k.bbox, &cand.bbox) > iou_threshold);
        if !suppressed {
            kept.push(*cand);
        }
    }
    kept
}
