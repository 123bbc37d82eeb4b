//! The per-study JSON manifest binding frames to videos and scan locations.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AnnotationError;
use crate::detection::ImageSize;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeType {
    Convex,
    Linear,
    Phased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub image: String,
    #[serde(default)]
    pub detections: Option<String>,
    #[serde(default)]
    pub ground_truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    #[serde(default)]
    pub scan_location: Option<u8>,
    pub fps: f64,
    /// Pixel size shared by every frame; read from image headers when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<ImageSize>,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub study_id: String,
    pub probe_type: ProbeType,
    #[serde(default)]
    pub subject: BTreeMap<String, serde_json::Value>,
    pub videos: Vec<VideoRecord>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn invalid(msg: impl Into<String>) -> AnnotationError {
    AnnotationError::Manifest(msg.into())
}

impl StudyManifest {
    pub fn from_json_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, AnnotationError> {
        let mut m: StudyManifest = serde_json::from_str(text).map_err(|e| invalid(format!("schema violation: {e}")))?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.study_id.is_empty() {
            return Err(invalid("study_id is empty"));
        }
        let mut video_ids = HashSet::new();
        let mut frame_ids = HashSet::new();
        let mut locations = HashSet::new();
        for v in &self.videos {
            if !video_ids.insert(v.video_id.as_str()) {
                return Err(invalid(format!("duplicate video_id {:?}", v.video_id)));
            }
            if let Some(loc) = v.scan_location {
                if !(1..=14).contains(&loc) {
                    return Err(invalid(format!(
                        "video {:?}: scan_location {loc} is outside 1..14",
                        v.video_id
                    )));
                }
                if !locations.insert(loc) {
                    return Err(invalid(format!(
                        "video {:?}: scan_location {loc} already used by another video",
                        v.video_id
                    )));
                }
            }
            if !(v.fps.is_finite() && v.fps > 0.0) {
                return Err(invalid(format!("video {:?}: fps must be positive", v.video_id)));
            }
            for f in &v.frames {
                if !frame_ids.insert(f.frame_id.as_str()) {
                    return Err(invalid(format!("duplicate frame_id {:?}", f.frame_id)));
                }
            }
        }
        Ok(())
    }

    /// Fails on the first referenced file that does not exist.
    pub fn check_files(&self) -> Result<(), AnnotationError> {
        for v in &self.videos {
            for f in &v.frames {
                let paths = std::iter::once(&f.image)
                    .chain(f.detections.as_ref())
                    .chain(f.ground_truth.as_ref());
                for rel in paths {
                    let p = self.resolve(rel);
                    if !p.exists() {
                        return Err(invalid(format!("frame {:?}: missing file {}", f.frame_id, p.display())));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Looks a frame up across all videos.
    pub fn frame(&self, frame_id: &str) -> Option<(&VideoRecord, &FrameRecord)> {
        self.videos
            .iter()
            .find_map(|v| v.frames.iter().find(|f| f.frame_id == frame_id).map(|f| (v, f)))
    }
}

/// Reads and validates a manifest; with `strict` every referenced file must exist.
pub fn load_manifest(path: &Path, strict: bool) -> Result<StudyManifest, AnnotationError> {
    let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let m = StudyManifest::from_json_str(&text, base)?;
    if strict {
        m.check_files()?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn manifest_json(locations: &[Option<u8>]) -> serde_json::Value {
        let videos: Vec<_> = locations
            .iter()
            .enumerate()
            .map(|(i, loc)| {
                json!({
                    "video_id": format!("v{i}"),
                    "scan_location": loc,
                    "fps": 20.0,
                    "frames": [{"frame_id": format!("v{i}_f0"), "image": "img.png", "detections": null, "ground_truth": null}]
                })
            })
            .collect();
        json!({"study_id": "s1", "probe_type": "convex", "subject": {"age": 41}, "videos": videos})
    }

    #[test]
    fn fourteen_locations_are_valid() {
        let locs: Vec<_> = (1..=14).map(Some).collect();
        let m = StudyManifest::from_json_str(&manifest_json(&locs).to_string(), ".").unwrap();
        assert_eq!(m.videos.len(), 14);
        assert_eq!(m.schema_version, 1);
        assert_eq!(m.probe_type, ProbeType::Convex);
    }

    #[test]
    fn location_bounds() {
        for bad in [0u8, 15] {
            let err = StudyManifest::from_json_str(&manifest_json(&[Some(bad)]).to_string(), ".").unwrap_err();
            assert!(err.to_string().contains("outside 1..14"), "{err}");
        }
        assert!(StudyManifest::from_json_str(&manifest_json(&[None]).to_string(), ".").is_ok());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut doc = manifest_json(&[Some(1), Some(2)]);
        doc["videos"][1]["video_id"] = json!("v0");
        let err = StudyManifest::from_json_str(&doc.to_string(), ".").unwrap_err();
        assert!(err.to_string().contains("duplicate video_id"), "{err}");

        let mut doc = manifest_json(&[Some(1), Some(2)]);
        doc["videos"][1]["frames"][0]["frame_id"] = json!("v0_f0");
        let err = StudyManifest::from_json_str(&doc.to_string(), ".").unwrap_err();
        assert!(err.to_string().contains("duplicate frame_id"), "{err}");
    }

    #[test]
    fn schema_violations() {
        let mut doc = manifest_json(&[Some(1)]);
        doc["probe_type"] = json!("sector");
        assert!(StudyManifest::from_json_str(&doc.to_string(), ".").is_err());
        let mut doc = manifest_json(&[Some(1)]);
        doc.as_object_mut().unwrap().remove("videos");
        assert!(StudyManifest::from_json_str(&doc.to_string(), ".").is_err());
        let mut doc = manifest_json(&[Some(1)]);
        doc["schema_version"] = json!(2);
        assert!(StudyManifest::from_json_str(&doc.to_string(), ".").is_err());
    }

    #[test]
    fn strict_load_checks_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, manifest_json(&[Some(3)]).to_string()).unwrap();
        assert!(load_manifest(&path, false).is_ok());
        assert!(load_manifest(&path, true).is_err());
        std::fs::write(dir.path().join("img.png"), b"").unwrap();
        let m = load_manifest(&path, true).unwrap();
        assert_eq!(m.base_dir, dir.path());
        assert!(m.frame("v0_f0").is_some());
    }
}
