//! Video-level aggregation, summaries and the 14-point scan report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{FrameAnalysis, QualityLabel, SEVERITY_UNDETECTED};
use crate::SCHEMA_VERSION;

/// Number of acquisition points in the scan protocol.
pub const SCAN_LOCATIONS: u8 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Diagnosis {
    Abnormal,
    Normal,
    Undetected,
}

pub fn classify_video_binary(video_severity: i8) -> Diagnosis {
    match video_severity {
        1.. => Diagnosis::Abnormal,
        0 => Diagnosis::Normal,
        _ => Diagnosis::Undetected,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAnalysis {
    pub video_id: String,
    pub frames: Vec<FrameAnalysis>,
    pub video_severity: i8,
    pub diagnosis: Diagnosis,
    pub worst_frame_id: Option<String>,
    pub summary_frame_ids: Vec<String>,
}

/// Frames with severity score >= 1, optionally also at or above a quality label.
pub fn summarize_video(frames: &[FrameAnalysis], quality_min: Option<QualityLabel>) -> Vec<String> {
    frames
        .iter()
        .filter(|f| f.severity.score >= 1)
        .filter(|f| quality_min.is_none_or(|q| f.quality.label >= q))
        .map(|f| f.frame_id.clone())
        .collect()
}

/// Video severity is the worst frame's score; ties resolve to the earliest frame.
pub fn aggregate_video(
    video_id: impl Into<String>,
    frames: Vec<FrameAnalysis>,
    summary_quality_min: Option<QualityLabel>,
) -> VideoAnalysis {
    let mut worst: Option<&FrameAnalysis> = None;
    for f in &frames {
        if worst.is_none_or(|w| f.severity.score > w.severity.score) {
            worst = Some(f);
        }
    }
    let video_severity = worst.map_or(SEVERITY_UNDETECTED, |w| w.severity.score);
    let worst_frame_id = worst.map(|w| w.frame_id.clone());
    let summary_frame_ids = summarize_video(&frames, summary_quality_min);
    VideoAnalysis {
        video_id: video_id.into(),
        video_severity,
        diagnosis: classify_video_binary(video_severity),
        worst_frame_id,
        summary_frame_ids,
        frames,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPlot {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Five-number summary with linear interpolation at `p * (n - 1)`.
pub fn severity_boxplot(scores: &[i8]) -> Option<BoxPlot> {
    if scores.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = scores.iter().map(|&s| f64::from(s)).collect();
    v.sort_by(f64::total_cmp);
    Some(BoxPlot {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScanColor {
    Green,
    YellowGreen,
    Yellow,
    Orange,
    Red,
    Black,
}

impl ScanColor {
    /// `None` means no video for the location.
    pub fn for_severity(severity: Option<i8>) -> Self {
        match severity {
            Some(0) => ScanColor::Green,
            Some(1) => ScanColor::YellowGreen,
            Some(2) => ScanColor::Yellow,
            Some(3) => ScanColor::Orange,
            Some(4) => ScanColor::Red,
            _ => ScanColor::Black,
        }
    }

    pub fn hex(self) -> &'static str {
        match self {
            ScanColor::Green => "#2ca02c",
            ScanColor::YellowGreen => "#9acd32",
            ScanColor::Yellow => "#ffd700",
            ScanColor::Orange => "#ff8c00",
            ScanColor::Red => "#d62728",
            ScanColor::Black => "#000000",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanLocationResult {
    pub location: u8,
    pub video_id: Option<String>,
    pub video_severity: Option<i8>,
    pub color: ScanColor,
    pub boxplot: Option<BoxPlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema_version: u32,
    pub study_id: String,
    pub generated_at: String,
    pub locations: BTreeMap<u8, ScanLocationResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("scan location {0} is outside 1..14")]
    LocationOutOfRange(u8),
}

/// Builds the 14-cell report; locations without a video come out Black.
pub fn scan_report(
    study_id: impl Into<String>,
    videos: &BTreeMap<u8, &VideoAnalysis>,
    generated_at: DateTime<Utc>,
) -> Result<StudyReport, ReportError> {
    if let Some(bad) = videos.keys().find(|l| !(1..=SCAN_LOCATIONS).contains(l)) {
        return Err(ReportError::LocationOutOfRange(*bad));
    }
    let locations = (1..=SCAN_LOCATIONS)
        .map(|loc| {
            let result = match videos.get(&loc) {
                None => ScanLocationResult {
                    location: loc,
                    video_id: None,
                    video_severity: None,
                    color: ScanColor::Black,
                    boxplot: None,
                },
                Some(v) => {
                    let detected: Vec<i8> = v.frames.iter().map(|f| f.severity.score).filter(|s| *s >= 0).collect();
                    ScanLocationResult {
                        location: loc,
                        video_id: Some(v.video_id.clone()),
                        video_severity: Some(v.video_severity),
                        color: ScanColor::for_severity(Some(v.video_severity)),
                        boxplot: severity_boxplot(&detected),
                    }
                }
            };
            (loc, result)
        })
        .collect();
    Ok(StudyReport {
        schema_version: SCHEMA_VERSION,
        study_id: study_id.into(),
        generated_at: generated_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        locations,
    })
}

/// Side and position of a location in the grid: 1..7 are R1..R7, 8..14 are L1..L7.
pub fn location_label(location: u8) -> String {
    if location <= 7 {
        format!("R{location}")
    } else {
        format!("L{}", location - 7)
    }
}

/// Two columns of seven cells, right side first.
pub fn render_report_svg(report: &StudyReport) -> String {
    const CELL_W: u32 = 120;
    const CELL_H: u32 = 48;
    const PAD: u32 = 16;
    const HEADER: u32 = 40;
    let width = PAD * 3 + CELL_W * 2;
    let height = HEADER + PAD + CELL_H * 7 + PAD;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"  <text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2,
        xml_escape(&report.study_id)
    );
    for (loc, result) in &report.locations {
        let col = if *loc <= 7 { 0 } else { 1 };
        let row = u32::from((loc - 1) % 7);
        let x = PAD + col * (CELL_W + PAD);
        let y = HEADER + PAD + row * CELL_H;
        let fg = if result.color == ScanColor::Black {
            "#ffffff"
        } else {
            "#000000"
        };
        let severity = result
            .video_severity
            .map_or_else(|| "n/a".to_string(), |s| s.to_string());
        let _ = writeln!(
            svg,
            r##"  <rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{}" stroke="#ffffff" stroke-width="2"/>"##,
            result.color.hex()
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" font-family="sans-serif" font-size="13" fill="{fg}" text-anchor="middle">{} ({severity})</text>"#,
            x + CELL_W / 2,
            y + CELL_H / 2 + 5,
            location_label(*loc)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
