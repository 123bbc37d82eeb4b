//! Pascal-VOC style XML annotations as written by desktop labelling tools.

use serde::{Deserialize, Serialize};

use super::{AliasTable, AnnotationError};
use crate::detection::{BBox, Detection, FrameDetections, ImageSize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename = "annotation")]
pub struct VocAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folder: Option<String>,
    pub filename: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    // Optional during parsing so a missing element gets its own error.
    pub size: Option<VocSize>,
    #[serde(default, rename = "object")]
    pub objects: Vec<VocObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocSize {
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_depth")]
    pub depth: u32,
}

fn default_depth() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocObject {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficult: Option<u8>,
    /// Detector confidence; absent on hand-drawn annotations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub bndbox: VocBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl VocAnnotation {
    pub fn from_xml(text: &str) -> Result<Self, AnnotationError> {
        quick_xml::de::from_str(text).map_err(|e| AnnotationError::Xml(e.to_string()))
    }

    pub fn to_xml(&self) -> String {
        let mut body = String::new();
        let mut ser = quick_xml::se::Serializer::new(&mut body);
        ser.indent(' ', 2);
        self.serialize(ser).expect("annotation fields are always serializable");
        body.push('\n');
        body
    }

    pub fn to_frame(&self, aliases: &AliasTable) -> Result<FrameDetections, AnnotationError> {
        let size = self.size.ok_or(AnnotationError::MissingSize)?;
        let image_size = ImageSize::new(size.width, size.height).map_err(|e| AnnotationError::Xml(e.to_string()))?;
        let mut detections = Vec::with_capacity(self.objects.len());
        for (index, obj) in self.objects.iter().enumerate() {
            let class = aliases
                .lookup(&obj.name)
                .ok_or_else(|| AnnotationError::UnmappedClass(obj.name.clone()))?;
            let b = obj.bndbox;
            if b.xmin >= b.xmax || b.ymin >= b.ymax {
                return Err(AnnotationError::Xml(format!(
                    "object {index} ({}) has an empty box",
                    obj.name
                )));
            }
            let bbox = BBox::new(b.xmin, b.ymin, b.xmax, b.ymax)
                .map_err(|source| AnnotationError::XmlObject { index, source })?
                .clamp_to(image_size);
            let det = Detection::new(class, bbox, obj.score.unwrap_or(1.0))
                .map_err(|source| AnnotationError::XmlObject { index, source })?;
            detections.push(det);
        }
        Ok(FrameDetections {
            frame_id: self.filename.clone(),
            image_size,
            detections,
        })
    }

    /// Boxes are rounded to whole pixels; a box that would collapse keeps one pixel.
    pub fn from_frame(frame: &FrameDetections) -> Self {
        let w = f64::from(frame.image_size.width);
        let h = f64::from(frame.image_size.height);
        let objects = frame
            .detections
            .iter()
            .map(|d| {
                let b = d.bbox;
                let xmin = b.x_min().round().min(w - 1.0);
                let ymin = b.y_min().round().min(h - 1.0);
                VocObject {
                    name: d.class.name().to_string(),
                    pose: Some("Unspecified".to_string()),
                    truncated: Some(0),
                    difficult: Some(0),
                    score: (d.confidence != 1.0).then_some(d.confidence),
                    bndbox: VocBox {
                        xmin,
                        ymin,
                        xmax: b.x_max().round().max(xmin + 1.0),
                        ymax: b.y_max().round().max(ymin + 1.0),
                    },
                }
            })
            .collect();
        VocAnnotation {
            folder: None,
            filename: frame.frame_id.clone(),
            path: None,
            size: Some(VocSize {
                width: frame.image_size.width,
                height: frame.image_size.height,
                depth: 3,
            }),
            objects,
        }
    }
}

pub fn parse_voc_xml(text: &str, aliases: &AliasTable) -> Result<FrameDetections, AnnotationError> {
    VocAnnotation::from_xml(text)?.to_frame(aliases)
}

pub fn write_voc_xml(frame: &FrameDetections) -> String {
    VocAnnotation::from_frame(frame).to_xml()
}
