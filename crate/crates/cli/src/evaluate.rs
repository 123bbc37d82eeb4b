use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use triage_core::annotation::load_manifest;
use triage_core::detection::{FrameDetections, LandmarkClass};
use triage_core::evaluation::{
    confidence_grid, curves_to_csv, evaluate_map, match_detections, operating_point, pr_f1_curves, CurveSet,
    OperatingPointRow,
};
use triage_core::study::{load_frames, AnnotationSource};
use triage_core::{PipelineConfig, SCHEMA_VERSION};

use crate::output::{write_json, write_text};

/// Confidence grid resolution of the PR/F1 curves.
const CURVE_STEPS: u32 = 100;

#[derive(Debug, Serialize)]
struct ClassEval {
    gt_count: usize,
    pred_count: usize,
    /// AP at each IoU threshold; null when the class has no boxes at all.
    ap: Vec<Option<f64>>,
    ap_mean: Option<f64>,
}

#[derive(Debug, Serialize)]
struct OperatingPoint {
    confidence_threshold: f64,
    iou_threshold: f64,
    rows: Vec<OperatingPointRow>,
}

#[derive(Debug, Serialize)]
struct Curves {
    iou_threshold: f64,
    #[serde(flatten)]
    curves: CurveSet,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    schema_version: u32,
    gt_study_id: String,
    pred_study_id: String,
    frame_count: usize,
    iou_thresholds: Vec<f64>,
    map: Option<f64>,
    map_per_threshold: Vec<Option<f64>>,
    per_class: BTreeMap<LandmarkClass, ClassEval>,
    operating_point: OperatingPoint,
    curves: Curves,
}

fn flatten(videos: Vec<(String, Vec<FrameDetections>)>) -> Vec<FrameDetections> {
    videos.into_iter().flat_map(|(_, frames)| frames).collect()
}

/// Raw predictions are evaluated as-is: AP needs the full ranking, so no
/// confidence filter or NMS is applied here.
pub fn run(
    config: &PipelineConfig,
    gt_manifest: &Path,
    pred_manifest: &Path,
    iou_thresholds: &[f64],
    out: Option<&Path>,
    curves_csv: Option<&Path>,
) -> Result<()> {
    let tables = config.tables()?;
    let gt_m = load_manifest(gt_manifest, false)?;
    let pred_m = load_manifest(pred_manifest, false)?;
    let gt = flatten(load_frames(&gt_m, AnnotationSource::GroundTruth, &tables)?);
    let pred = flatten(load_frames(&pred_m, AnnotationSource::Detections, &tables)?);

    let map = evaluate_map(&gt, &pred, iou_thresholds)?;
    let curve_iou = iou_thresholds[0];
    let matches = match_detections(&gt, &pred, curve_iou)?;

    let mut pred_counts: BTreeMap<LandmarkClass, usize> = BTreeMap::new();
    for d in pred.iter().flat_map(|f| &f.detections) {
        *pred_counts.entry(d.class).or_default() += 1;
    }
    let per_class = LandmarkClass::ALL
        .into_iter()
        .map(|c| {
            (
                c,
                ClassEval {
                    gt_count: matches.class(c).gt_count,
                    pred_count: pred_counts.get(&c).copied().unwrap_or(0),
                    ap: map.per_class[&c].clone(),
                    ap_mean: map.per_class_mean[&c],
                },
            )
        })
        .collect();

    let curves = pr_f1_curves(&matches, &confidence_grid(CURVE_STEPS));
    if let Some(path) = curves_csv {
        write_text(Some(path), &curves_to_csv(&curves))?;
    }
    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        gt_study_id: gt_m.study_id,
        pred_study_id: pred_m.study_id,
        frame_count: gt.len(),
        iou_thresholds: map.iou_thresholds,
        map: map.map,
        map_per_threshold: map.per_threshold,
        per_class,
        operating_point: OperatingPoint {
            confidence_threshold: config.confidence_threshold,
            iou_threshold: curve_iou,
            rows: operating_point(&matches, config.confidence_threshold),
        },
        curves: Curves {
            iou_threshold: curve_iou,
            curves,
        },
    };
    write_json(out, &report)
}
