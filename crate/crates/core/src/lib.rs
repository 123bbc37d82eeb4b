//! Detector-agnostic lung-ultrasound triage: turns per-frame landmark
//! detections into quality and severity scores, video diagnoses, a 14-point
//! scan report and a relabel queue, and evaluates detectors against ground
//! truth.

pub mod active_learning;
pub mod annotation;
pub mod config;
pub mod detection;
pub mod evaluation;
pub mod jsonl;
pub mod scoring;
pub mod study;
pub mod video;

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

pub use config::PipelineConfig;
pub use detection::{BBox, Detection, FrameDetections, ImageSize, LandmarkClass, LandmarkSet};
pub use scoring::{FrameAnalysis, QualityLabel};
pub use video::{Diagnosis, StudyReport, VideoAnalysis};
