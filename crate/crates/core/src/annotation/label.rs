//! Plain-text center-form label files: `class_id cx cy w h [confidence]`.

use std::fmt::Write as _;

use super::{AnnotationError, ClassIdTable};
use crate::detection::{BBox, Detection, FrameDetections, ImageSize};

/// Normalized values this far outside `[0, 1]` are clamped silently.
pub const CLAMP_TOLERANCE: f64 = 1e-6;

/// Ground-truth files have five fields per line, detection files six.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    GroundTruth,
    Detections,
}

impl LabelKind {
    fn field_count(self) -> usize {
        match self {
            LabelKind::GroundTruth => 5,
            LabelKind::Detections => 6,
        }
    }
}

fn unit_value(line: usize, field: &str, raw: &str) -> Result<f64, AnnotationError> {
    let v: f64 = raw
        .parse()
        .map_err(|_| AnnotationError::label(line, format!("{field} {raw:?} is not a number")))?;
    if !v.is_finite() || !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&v) {
        return Err(AnnotationError::label(line, format!("{field} {raw} is outside [0, 1]")));
    }
    Ok(v.clamp(0.0, 1.0))
}

pub fn parse_label_file(
    text: &str,
    frame_id: impl Into<String>,
    image_size: ImageSize,
    kind: LabelKind,
    table: &ClassIdTable,
) -> Result<FrameDetections, AnnotationError> {
    let w = f64::from(image_size.width);
    let h = f64::from(image_size.height);
    let mut detections = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw_line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != kind.field_count() {
            return Err(AnnotationError::label(
                line,
                format!("expected {} fields, found {}", kind.field_count(), fields.len()),
            ));
        }
        let id: i64 = fields[0]
            .parse()
            .map_err(|_| AnnotationError::label(line, format!("class id {:?} is not an integer", fields[0])))?;
        let class = table
            .class(id)
            .ok_or_else(|| AnnotationError::label(line, format!("class id {id} is outside 0..7")))?;
        let cx = unit_value(line, "cx", fields[1])?;
        let cy = unit_value(line, "cy", fields[2])?;
        let bw = unit_value(line, "w", fields[3])?;
        let bh = unit_value(line, "h", fields[4])?;
        let confidence = match kind {
            LabelKind::GroundTruth => 1.0,
            LabelKind::Detections => unit_value(line, "confidence", fields[5])?,
        };

        let x0 = (cx - bw / 2.0).clamp(0.0, 1.0) * w;
        let x1 = (cx + bw / 2.0).clamp(0.0, 1.0) * w;
        let y0 = (cy - bh / 2.0).clamp(0.0, 1.0) * h;
        let y1 = (cy + bh / 2.0).clamp(0.0, 1.0) * h;
        let bbox = BBox::new(x0, y0, x1, y1).map_err(|e| AnnotationError::label(line, e.to_string()))?;
        detections
            .push(Detection::new(class, bbox, confidence).map_err(|e| AnnotationError::label(line, e.to_string()))?);
    }

    Ok(FrameDetections {
        frame_id: frame_id.into(),
        image_size,
        detections,
    })
}

// Six decimals when that reproduces the value exactly, otherwise the
// shortest representation that round-trips.
fn exact_decimal(v: f64) -> String {
    let fixed = format!("{v:.6}");
    if fixed.parse::<f64>().ok() == Some(v) {
        fixed
    } else {
        format!("{v}")
    }
}

pub fn write_label_file(frame: &FrameDetections, with_confidence: bool, table: &ClassIdTable) -> String {
    let w = f64::from(frame.image_size.width);
    let h = f64::from(frame.image_size.height);
    let mut out = String::new();
    for det in &frame.detections {
        let b = det.bbox;
        let x0 = (b.x_min() / w).clamp(0.0, 1.0);
        let x1 = (b.x_max() / w).clamp(0.0, 1.0);
        let y0 = (b.y_min() / h).clamp(0.0, 1.0);
        let y1 = (b.y_max() / h).clamp(0.0, 1.0);
        let _ = write!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6}",
            table.id(det.class),
            (x0 + x1) / 2.0,
            (y0 + y1) / 2.0,
            x1 - x0,
            y1 - y0
        );
        if with_confidence {
            let _ = write!(out, " {}", exact_decimal(det.confidence));
        }
        out.push('\n');
    }
    out
}
