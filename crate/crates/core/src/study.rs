//! Loading a study's annotation files and running the scoring pipeline over it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::active_learning::{ActiveLearningError, AnnotationBox, ExportItem, FrameInfo, OverrideLog};
use crate::annotation::{
    parse_label_file, AnnotationError, FrameRecord, LabelKind, StudyManifest, VideoRecord, VocAnnotation,
};
use crate::config::{FormatTables, PipelineConfig};
use crate::detection::{FrameDetections, ImageSize};
use crate::scoring::{analyze_frame, FrameAnalysis, QualityLabel, QualityRules};
use crate::video::{aggregate_video, scan_report, ReportError, StudyReport, VideoAnalysis};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("frame {frame_id:?}: {source}")]
    Frame {
        frame_id: String,
        #[source]
        source: AnnotationError,
    },
    #[error("frame {frame_id:?}: cannot read image size from {path}: {message}")]
    ImageSize {
        frame_id: String,
        path: String,
        message: String,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
}

fn frame_err(frame_id: &str) -> impl FnOnce(AnnotationError) -> StudyError + '_ {
    move |source| StudyError::Frame {
        frame_id: frame_id.to_string(),
        source,
    }
}

fn is_xml(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("xml"))
}

fn read_text(path: &Path, frame_id: &str) -> Result<String, StudyError> {
    std::fs::read_to_string(path)
        .map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })
        .map_err(frame_err(frame_id))
}

/// Which annotation file of each frame to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationSource {
    Detections,
    GroundTruth,
}

/// Pixel size of a frame: the video's declared size, else the image header.
pub fn frame_image_size(
    manifest: &StudyManifest,
    video: &VideoRecord,
    frame: &FrameRecord,
) -> Result<ImageSize, StudyError> {
    if let Some(size) = video.image_size {
        return Ok(size);
    }
    let path = manifest.resolve(&frame.image);
    let fail = |message: String| StudyError::ImageSize {
        frame_id: frame.frame_id.clone(),
        path: path.display().to_string(),
        message,
    };
    let dim = imagesize::size(&path).map_err(|e| fail(e.to_string()))?;
    let (w, h) = (u32::try_from(dim.width), u32::try_from(dim.height));
    match (w, h) {
        (Ok(w), Ok(h)) => ImageSize::new(w, h).map_err(|e| fail(e.to_string())),
        _ => Err(fail("dimensions overflow u32".into())),
    }
}

/// Reads one annotation file of a frame. XML files carry their own size;
/// label text needs `size`. The result takes the manifest's frame id.
pub fn load_annotation_file(
    path: &Path,
    frame_id: &str,
    kind: LabelKind,
    size: impl FnOnce() -> Result<ImageSize, StudyError>,
    tables: &FormatTables,
) -> Result<FrameDetections, StudyError> {
    let text = read_text(path, frame_id)?;
    let mut frame = if is_xml(path) {
        let voc = VocAnnotation::from_xml(&text).map_err(frame_err(frame_id))?;
        voc.to_frame(&tables.aliases).map_err(frame_err(frame_id))?
    } else {
        parse_label_file(&text, frame_id, size()?, kind, &tables.ids).map_err(frame_err(frame_id))?
    };
    frame.frame_id = frame_id.to_string();
    Ok(frame)
}

/// Raw frames of a manifest from the given source. A frame whose path is
/// null has no boxes.
pub fn load_frames(
    manifest: &StudyManifest,
    source: AnnotationSource,
    tables: &FormatTables,
) -> Result<Vec<(String, Vec<FrameDetections>)>, StudyError> {
    manifest
        .videos
        .iter()
        .map(|video| {
            let frames = video
                .frames
                .iter()
                .map(|f| {
                    let (rel, kind) = match source {
                        AnnotationSource::Detections => (&f.detections, LabelKind::Detections),
                        AnnotationSource::GroundTruth => (&f.ground_truth, LabelKind::GroundTruth),
                    };
                    match rel {
                        Some(rel) => load_annotation_file(
                            &manifest.resolve(rel),
                            &f.frame_id,
                            kind,
                            || frame_image_size(manifest, video, f),
                            tables,
                        ),
                        None => Ok(FrameDetections::new(
                            f.frame_id.clone(),
                            frame_image_size(manifest, video, f)?,
                        )),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((video.video_id.clone(), frames))
        })
        .collect()
}

/// One scored video with the manifest context the outputs need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredVideo {
    pub scan_location: Option<u8>,
    pub fps: f64,
    #[serde(flatten)]
    pub analysis: VideoAnalysis,
}

/// Scoring settings echoed into the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringSettings {
    pub confidence_threshold: f64,
    pub nms_iou_threshold: f64,
    pub quality: QualityRules,
    pub summary_quality_min: Option<QualityLabel>,
}

/// Output of `triage score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyScores {
    pub schema_version: u32,
    pub study_id: String,
    pub settings: ScoringSettings,
    pub videos: Vec<ScoredVideo>,
}

impl StudyScores {
    pub fn analyses(&self) -> Vec<VideoAnalysis> {
        self.videos.iter().map(|v| v.analysis.clone()).collect()
    }

    pub fn report(&self, generated_at: DateTime<Utc>) -> Result<StudyReport, StudyError> {
        let by_location: BTreeMap<u8, &VideoAnalysis> = self
            .videos
            .iter()
            .filter_map(|v| v.scan_location.map(|l| (l, &v.analysis)))
            .collect();
        Ok(scan_report(self.study_id.clone(), &by_location, generated_at)?)
    }

    pub fn video(&self, video_id: &str) -> Option<&ScoredVideo> {
        self.videos.iter().find(|v| v.analysis.video_id == video_id)
    }
}

/// Runs confidence filtering, NMS, scoring and video aggregation over every
/// detection file of the study.
pub fn score_study(
    manifest: &StudyManifest,
    config: &PipelineConfig,
    tables: &FormatTables,
) -> Result<StudyScores, StudyError> {
    let scoring = config.frame_scoring();
    let raw = load_frames(manifest, AnnotationSource::Detections, tables)?;
    let videos = manifest
        .videos
        .iter()
        .zip(raw)
        .map(|(record, (video_id, frames))| {
            let analyses = frames.iter().map(|f| analyze_frame(f, &scoring)).collect();
            ScoredVideo {
                scan_location: record.scan_location,
                fps: record.fps,
                analysis: aggregate_video(video_id, analyses, config.summary.quality_min),
            }
        })
        .collect();
    Ok(StudyScores {
        schema_version: SCHEMA_VERSION,
        study_id: manifest.study_id.clone(),
        settings: ScoringSettings {
            confidence_threshold: config.confidence_threshold,
            nms_iou_threshold: config.nms_iou_threshold,
            quality: config.quality,
            summary_quality_min: config.summary.quality_min,
        },
        videos,
    })
}

impl StudyScores {
    /// Scores with every overridden frame re-scored from its newest
    /// override, and videos re-aggregated.
    pub fn with_overrides(
        &self,
        overrides: &OverrideLog,
        rules: QualityRules,
        summary_quality_min: Option<QualityLabel>,
    ) -> StudyScores {
        if overrides.records().is_empty() {
            return self.clone();
        }
        let effective = overrides.effective();
        let videos = self
            .videos
            .iter()
            .map(|v| {
                let frames = v
                    .analysis
                    .frames
                    .iter()
                    .map(|f| match effective.get(f.frame_id.as_str()) {
                        Some(boxes) => FrameAnalysis::from_kept(
                            f.frame_id.clone(),
                            boxes.iter().map(|b| b.to_detection()).collect(),
                            rules,
                        ),
                        None => f.clone(),
                    })
                    .collect();
                ScoredVideo {
                    scan_location: v.scan_location,
                    fps: v.fps,
                    analysis: aggregate_video(v.analysis.video_id.clone(), frames, summary_quality_min),
                }
            })
            .collect();
        StudyScores { videos, ..self.clone() }
    }
}

/// Video id and pixel size of every frame, for override validation.
pub fn frame_infos(manifest: &StudyManifest) -> Result<BTreeMap<String, FrameInfo>, StudyError> {
    let mut out = BTreeMap::new();
    for video in &manifest.videos {
        for f in &video.frames {
            let size = match (&video.image_size, &f.detections) {
                (None, Some(rel)) if is_xml(Path::new(rel)) => {
                    let path = manifest.resolve(rel);
                    let text = read_text(&path, &f.frame_id)?;
                    let voc = VocAnnotation::from_xml(&text).map_err(frame_err(&f.frame_id))?;
                    match voc.size {
                        Some(s) => ImageSize::new(s.width, s.height).map_err(|e| StudyError::ImageSize {
                            frame_id: f.frame_id.clone(),
                            path: path.display().to_string(),
                            message: e.to_string(),
                        })?,
                        None => frame_image_size(manifest, video, f)?,
                    }
                }
                _ => frame_image_size(manifest, video, f)?,
            };
            out.insert(
                f.frame_id.clone(),
                FrameInfo {
                    video_id: video.video_id.clone(),
                    image_size: size,
                },
            );
        }
    }
    Ok(out)
}

/// Builds export items for the given frames: the newest override when there
/// is one, else the frame's ground-truth file.
pub fn export_items(
    manifest: &StudyManifest,
    frames: &BTreeMap<String, FrameInfo>,
    overrides: &OverrideLog,
    frame_ids: &[String],
    tables: &FormatTables,
) -> Result<Vec<ExportItem>, ExportSourceError> {
    frame_ids
        .iter()
        .map(|id| {
            let (video, record) = manifest
                .frame(id)
                .ok_or_else(|| ActiveLearningError::UnknownFrame(id.clone()))?;
            let info = frames
                .get(id)
                .ok_or_else(|| ActiveLearningError::UnknownFrame(id.clone()))?;
            let annotations = match (overrides.latest(id), &record.ground_truth) {
                (Some(o), _) => o.annotations.clone(),
                (None, Some(rel)) => load_annotation_file(
                    &manifest.resolve(rel),
                    id,
                    LabelKind::GroundTruth,
                    || frame_image_size(manifest, video, record),
                    tables,
                )?
                .detections
                .iter()
                .map(AnnotationBox::from)
                .collect(),
                (None, None) => return Err(ActiveLearningError::NoAnnotationSource(id.clone()).into()),
            };
            Ok(ExportItem {
                frame_id: id.clone(),
                image: manifest.resolve(&record.image),
                image_size: info.image_size,
                annotations,
            })
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum ExportSourceError {
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    ActiveLearning(#[from] ActiveLearningError),
}

/// Directory holding a study's mutable state (override and queue logs).
pub fn state_dir(manifest_dir: &Path, study_id: &str) -> PathBuf {
    manifest_dir.join(".triage").join(study_id)
}
