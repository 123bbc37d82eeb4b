use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use chrono::Utc;
use serde::Serialize;
use triage_core::active_learning::{file_stem, AnnotationBox, EntryStatus, ExportFormat, OverrideRecord};
use triage_core::annotation::load_manifest;
use triage_core::evaluation::{
    binary_video_metrics, confusion_metrics, BinaryVideoMetrics, ClassMetric, ConfusionMatrix,
};
use triage_core::scoring::{QualityLabel, QualityResult, SeverityResult};
use triage_core::study::score_study;
use triage_core::video::{render_report_svg, summarize_video, Diagnosis};
use triage_core::{PipelineConfig, SCHEMA_VERSION};
use triage_service::store::{OpenMode, Study, StudyStore};
use triage_service::views::{OverrideCreated, QueueView};

use crate::output::{read_json, write_json, write_text};
use crate::StatusFilter;

fn open_study(config: &PipelineConfig, manifest: &Path, mode: OpenMode) -> Result<Study> {
    let tables = config.tables()?;
    Study::open(manifest, config, &tables, mode).with_context(|| format!("opening {}", manifest.display()))
}

pub fn score(config: &PipelineConfig, manifest: &Path, out: Option<&Path>) -> Result<()> {
    let m = load_manifest(manifest, false)?;
    let scores = score_study(&m, config, &config.tables()?)?;
    write_json(out, &scores)
}

#[derive(Debug, Serialize)]
struct SummaryFrame {
    frame_id: String,
    image: String,
    quality: QualityResult,
    severity: SeverityResult,
}

#[derive(Debug, Serialize)]
struct VideoSummary {
    schema_version: u32,
    study_id: String,
    video_id: String,
    video_severity: i8,
    diagnosis: Diagnosis,
    quality_min: Option<QualityLabel>,
    frames: Vec<SummaryFrame>,
}

pub fn summarize(
    config: &PipelineConfig,
    manifest: &Path,
    video_id: &str,
    out_dir: &Path,
    quality_min: Option<QualityLabel>,
) -> Result<()> {
    let study = open_study(config, manifest, OpenMode::ReadOnly)?;
    let quality_min = quality_min.or(config.summary.quality_min);
    let state = study.lock();
    let video = state
        .effective
        .video(video_id)
        .with_context(|| format!("study has no video {video_id:?}"))?;
    let record = study
        .manifest
        .video(video_id)
        .expect("scored videos come from the manifest");

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let ids = summarize_video(&video.analysis.frames, quality_min);
    let mut frames = Vec::with_capacity(ids.len());
    for id in ids {
        let analysis = video
            .analysis
            .frames
            .iter()
            .find(|f| f.frame_id == id)
            .expect("summary ids are frame ids");
        let frame = record
            .frames
            .iter()
            .find(|f| f.frame_id == id)
            .expect("summary ids are frame ids");
        let src = study.manifest.resolve(&frame.image);
        let name = match src.extension().and_then(|e| e.to_str()) {
            Some(ext) => format!("{}.{ext}", file_stem(&id)),
            None => file_stem(&id),
        };
        std::fs::copy(&src, out_dir.join(&name)).with_context(|| format!("copying {}", src.display()))?;
        frames.push(SummaryFrame {
            frame_id: id,
            image: name,
            quality: analysis.quality.clone(),
            severity: analysis.severity,
        });
    }
    let summary = VideoSummary {
        schema_version: SCHEMA_VERSION,
        study_id: study.id().to_string(),
        video_id: video_id.to_string(),
        video_severity: video.analysis.video_severity,
        diagnosis: video.analysis.diagnosis,
        quality_min,
        frames,
    };
    write_json(Some(&out_dir.join("summary.json")), &summary)
}

pub fn report(config: &PipelineConfig, manifest: &Path, out: Option<&Path>, svg: Option<&Path>) -> Result<()> {
    let study = open_study(config, manifest, OpenMode::ReadOnly)?;
    let report = study.report()?;
    if let Some(svg) = svg {
        write_text(Some(svg), &render_report_svg(&report))?;
    }
    write_json(out, &report)
}

#[derive(Debug, Serialize)]
struct ConfusionSection {
    matrix: ConfusionMatrix,
    excluded_columns: Vec<String>,
    classes: Vec<ClassMetric>,
}

#[derive(Debug, Serialize)]
struct BinaryVideoSection {
    matrix: ConfusionMatrix,
    #[serde(flatten)]
    metrics: BinaryVideoMetrics,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    schema_version: u32,
    confusion: Option<ConfusionSection>,
    binary_video: Option<BinaryVideoSection>,
}

const VIDEO_ROWS: [&str; 2] = ["Abnormal", "Normal"];
const VIDEO_COLUMNS: [&str; 3] = ["Abnormal", "Normal", "Undetected"];

fn video_counts(m: &ConfusionMatrix) -> Result<[[u64; 3]; 2]> {
    m.validate()?;
    ensure!(
        m.rows == VIDEO_ROWS && m.columns == VIDEO_COLUMNS,
        "video matrix must have rows {VIDEO_ROWS:?} and columns {VIDEO_COLUMNS:?}"
    );
    let mut counts = [[0u64; 3]; 2];
    for (r, row) in m.counts.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            counts[r][c] = u64::try_from(*v)?;
        }
    }
    Ok(counts)
}

pub fn metrics(
    confusion: Option<&Path>,
    exclude: &[String],
    binary_video: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    if confusion.is_none() && binary_video.is_none() {
        bail!("nothing to do: pass --confusion and/or --binary-video");
    }
    let confusion = match confusion {
        Some(path) => {
            let matrix: ConfusionMatrix = read_json(path)?;
            let metrics = confusion_metrics(&matrix, exclude)?;
            Some(ConfusionSection {
                matrix,
                excluded_columns: metrics.excluded_columns,
                classes: metrics.classes,
            })
        }
        None => None,
    };
    let binary_video = match binary_video {
        Some(path) => {
            let matrix: ConfusionMatrix = read_json(path)?;
            let metrics = binary_video_metrics(video_counts(&matrix)?);
            Some(BinaryVideoSection { matrix, metrics })
        }
        None => None,
    };
    write_json(
        out,
        &MetricsReport {
            schema_version: SCHEMA_VERSION,
            confusion,
            binary_video,
        },
    )
}

pub fn queue(config: &PipelineConfig, manifest: &Path, status: StatusFilter, out: Option<&Path>) -> Result<()> {
    let study = open_study(config, manifest, OpenMode::SyncQueue)?;
    let state = study.lock();
    let keep = |s: EntryStatus| match status {
        StatusFilter::Open => s != EntryStatus::Exported,
        StatusFilter::Pending => s == EntryStatus::Pending,
        StatusFilter::Reviewed => s == EntryStatus::Reviewed,
        StatusFilter::Exported => s == EntryStatus::Exported,
        StatusFilter::All => true,
    };
    let view = QueueView {
        schema_version: SCHEMA_VERSION,
        study_id: study.id().to_string(),
        entries: state
            .review
            .queue()
            .entries()
            .iter()
            .filter(|e| keep(e.status))
            .cloned()
            .collect(),
    };
    write_json(out, &view)
}

pub fn add_override(
    config: &PipelineConfig,
    manifest: &Path,
    frame_id: String,
    author: String,
    annotations: &Path,
    note: Option<String>,
) -> Result<()> {
    ensure!(!author.trim().is_empty(), "author is empty");
    let annotations: Vec<AnnotationBox> = read_json(annotations)?;
    let study = open_study(config, manifest, OpenMode::SyncQueue)?;
    let record = OverrideRecord {
        frame_id: frame_id.clone(),
        author,
        created_at: Utc::now(),
        annotations,
        note,
    };
    let outcome = study.add_override(record)?;
    let queue_entry = study.lock().review.queue().entry(&frame_id).cloned();
    write_json(
        None,
        &OverrideCreated {
            schema_version: SCHEMA_VERSION,
            quality: outcome.rescored.quality,
            severity: outcome.rescored.severity,
            record: outcome.record,
            queue_entry,
        },
    )
}

pub fn export(config: &PipelineConfig, manifest: &Path, format: ExportFormat, out: &Path) -> Result<()> {
    let study = open_study(config, manifest, OpenMode::SyncQueue)?;
    let (_, exported) = study.export(format, Some(out), Utc::now())?;
    eprintln!("exported {} frame(s) to {}", exported.frames.len(), out.display());
    write_json(None, &exported)
}

pub fn serve(config: PipelineConfig, root: &Path, addr: SocketAddr) -> Result<()> {
    let store = StudyStore::open(root, config).with_context(|| format!("opening studies under {}", root.display()))?;
    let n = store.studies().count();
    let app = triage_service::router(Arc::new(store));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!(
            "serving {n} stud{} on http://{}",
            if n == 1 { "y" } else { "ies" },
            listener.local_addr()?
        );
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
