use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ActiveLearningError, AnnotationBox};
use crate::annotation::{write_label_file, write_voc_xml, ClassIdTable};
use crate::detection::{FrameDetections, ImageSize, LandmarkClass};
use crate::SCHEMA_VERSION;

/// Name of the manifest written at the root of an export directory.
pub const EXPORT_MANIFEST_FILE: &str = "export_manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExportFormat {
    #[serde(rename = "label-text")]
    LabelText,
    #[serde(rename = "xml")]
    Xml,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label-text" => Ok(ExportFormat::LabelText),
            "xml" => Ok(ExportFormat::Xml),
            other => Err(format!("unknown export format {other:?} (expected label-text or xml)")),
        }
    }
}

/// A reviewed frame ready to be written out.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportItem {
    pub frame_id: String,
    pub image: PathBuf,
    pub image_size: ImageSize,
    pub annotations: Vec<AnnotationBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedFrame {
    pub frame_id: String,
    pub image: String,
    pub label_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub schema_version: u32,
    pub exported_at: DateTime<Utc>,
    pub format: ExportFormat,
    pub frames: Vec<ExportedFrame>,
    pub class_counts: BTreeMap<LandmarkClass, usize>,
}

/// A file-system-safe stem derived from a frame id.
pub fn file_stem(frame_id: &str) -> String {
    let s: String = frame_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        "frame".to_string()
    } else {
        s
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ActiveLearningError + '_ {
    move |source| ActiveLearningError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes one annotation file and one image copy per item under
/// `target_dir/{labels,images}` plus [`EXPORT_MANIFEST_FILE`].
pub fn export_retraining_set(
    items: &[ExportItem],
    target_dir: &Path,
    format: ExportFormat,
    ids: &ClassIdTable,
    exported_at: DateTime<Utc>,
) -> Result<ExportManifest, ActiveLearningError> {
    let labels_dir = target_dir.join("labels");
    let images_dir = target_dir.join("images");
    for dir in [&labels_dir, &images_dir] {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }

    let mut class_counts: BTreeMap<LandmarkClass, usize> = LandmarkClass::ALL.into_iter().map(|c| (c, 0)).collect();
    let mut used = HashSet::new();
    let mut frames = Vec::with_capacity(items.len());
    for item in items {
        let base = file_stem(&item.frame_id);
        let mut stem = base.clone();
        let mut n = 1;
        while !used.insert(stem.clone()) {
            stem = format!("{base}_{n}");
            n += 1;
        }

        let image_name = match item.image.extension().and_then(|e| e.to_str()) {
            Some(ext) => format!("{stem}.{ext}"),
            None => stem.clone(),
        };
        let image_dst = images_dir.join(&image_name);
        std::fs::copy(&item.image, &image_dst).map_err(io_err(&item.image))?;

        let frame = FrameDetections {
            frame_id: image_name.clone(),
            image_size: item.image_size,
            detections: item.annotations.iter().map(|a| a.to_detection()).collect(),
        };
        let (label_name, body) = match format {
            ExportFormat::LabelText => (format!("{stem}.txt"), write_label_file(&frame, false, ids)),
            ExportFormat::Xml => (format!("{stem}.xml"), write_voc_xml(&frame)),
        };
        let label_path = labels_dir.join(&label_name);
        std::fs::write(&label_path, body).map_err(io_err(&label_path))?;

        for a in &item.annotations {
            *class_counts.entry(a.class).or_default() += 1;
        }
        frames.push(ExportedFrame {
            frame_id: item.frame_id.clone(),
            image: format!("images/{image_name}"),
            label_file: format!("labels/{label_name}"),
        });
    }

    let manifest = ExportManifest {
        schema_version: SCHEMA_VERSION,
        exported_at,
        format,
        frames,
        class_counts,
    };
    let path = target_dir.join(EXPORT_MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}
