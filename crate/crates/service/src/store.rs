//! File-backed study store.
//!
//! Everything served is derived from the manifest, the annotation files it
//! references and two append-only logs under `.triage/<study_id>/` next to
//! the manifest, so reopening a study reproduces the same state.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};
use std::time::SystemTime;

use chrono::{DateTime, SubsecRound, Utc};
use thiserror::Error;
use triage_core::active_learning::{
    export_retraining_set, ActiveLearningError, ExportFormat, ExportManifest, OverrideOutcome, OverrideRecord,
    QueueEvent, ReviewState,
};
use triage_core::annotation::{load_manifest, AnnotationError, StudyManifest};
use triage_core::config::{ConfigError, FormatTables, PipelineConfig};
use triage_core::jsonl::{append_jsonl, read_jsonl};
use triage_core::study::{
    export_items, frame_infos, score_study, state_dir, ExportSourceError, StudyError, StudyScores,
};
use triage_core::video::StudyReport;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const OVERRIDES_LOG: &str = "overrides.jsonl";
pub const QUEUE_LOG: &str = "queue.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown study {0:?}")]
    UnknownStudy(String),
    #[error("unknown video {0:?}")]
    UnknownVideo(String),
    #[error("unknown frame {0:?}")]
    UnknownFrame(String),
    #[error("study id {0:?} is used by more than one manifest")]
    DuplicateStudy(String),
    #[error(transparent)]
    Manifest(#[from] AnnotationError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Review(#[from] ActiveLearningError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<ExportSourceError> for StoreError {
    fn from(e: ExportSourceError) -> Self {
        match e {
            ExportSourceError::Study(e) => StoreError::Study(e),
            ExportSourceError::ActiveLearning(e) => StoreError::Review(e),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Whether opening a study may append newly selected frames to its queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenMode {
    ReadOnly,
    SyncQueue,
}

/// Mutable part of a study, guarded by the study's lock.
#[derive(Debug)]
pub struct StudyState {
    pub review: ReviewState,
    /// Detector scores with overrides applied.
    pub effective: StudyScores,
}

/// One study: its manifest, detector scores and review state.
#[derive(Debug)]
pub struct Study {
    pub manifest: StudyManifest,
    pub manifest_path: PathBuf,
    pub detector: StudyScores,
    /// Newest modification time among the manifest and its annotation files.
    pub data_time: DateTime<Utc>,
    config: PipelineConfig,
    tables: FormatTables,
    state_dir: PathBuf,
    state: Mutex<StudyState>,
}

fn modified(path: &Path) -> Option<DateTime<Utc>> {
    let t: SystemTime = std::fs::metadata(path).ok()?.modified().ok()?;
    Some(DateTime::<Utc>::from(t).trunc_subsecs(0))
}

fn newest_input_time(manifest_path: &Path, m: &StudyManifest) -> DateTime<Utc> {
    let files = m
        .videos
        .iter()
        .flat_map(|v| &v.frames)
        .flat_map(|f| f.detections.iter().chain(&f.ground_truth))
        .map(|rel| m.resolve(rel));
    std::iter::once(manifest_path.to_path_buf())
        .chain(files)
        .filter_map(|p| modified(&p))
        .max()
        .unwrap_or(DateTime::UNIX_EPOCH)
}

impl Study {
    pub fn open(
        manifest_path: &Path,
        config: &PipelineConfig,
        tables: &FormatTables,
        mode: OpenMode,
    ) -> Result<Self, StoreError> {
        let manifest = load_manifest(manifest_path, false)?;
        let detector = score_study(&manifest, config, tables)?;
        let frames = frame_infos(&manifest)?;
        let data_time = newest_input_time(manifest_path, &manifest);
        let dir = state_dir(&manifest.base_dir, &manifest.study_id);

        let overrides_path = dir.join(OVERRIDES_LOG);
        let queue_path = dir.join(QUEUE_LOG);
        let overrides: Vec<OverrideRecord> = read_jsonl(&overrides_path).map_err(io_err(&overrides_path))?;
        let events: Vec<QueueEvent> = read_jsonl(&queue_path).map_err(io_err(&queue_path))?;
        let mut review = ReviewState::new(frames, overrides, &events)?;

        if mode == OpenMode::SyncQueue {
            let new_events = review.sync_selection(&detector.analyses(), config.relabel.quality_cutoff, data_time);
            append_jsonl(&queue_path, &new_events).map_err(io_err(&queue_path))?;
        }

        let effective = detector.with_overrides(review.overrides(), config.quality, config.summary.quality_min);
        Ok(Study {
            manifest,
            manifest_path: manifest_path.to_path_buf(),
            detector,
            data_time,
            config: config.clone(),
            tables: tables.clone(),
            state_dir: dir,
            state: Mutex::new(StudyState { review, effective }),
        })
    }

    pub fn id(&self) -> &str {
        &self.manifest.study_id
    }

    pub fn state_dir(&self) -> &Path {
        &self.state_dir
    }

    pub fn tables(&self) -> &FormatTables {
        &self.tables
    }

    /// Locks the study. A poisoned lock is recovered: state is only replaced
    /// after its log has been written.
    pub fn lock(&self) -> MutexGuard<'_, StudyState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Report over the effective scores, stamped with the newest input or
    /// override time so it is reproducible.
    pub fn report(&self) -> Result<StudyReport, StoreError> {
        let state = self.lock();
        let latest_override = state.review.overrides().records().iter().map(|r| r.created_at).max();
        let at = latest_override.map_or(self.data_time, |o| o.max(self.data_time));
        Ok(state.effective.report(at)?)
    }

    /// Validates, persists and applies an override.
    pub fn add_override(&self, record: OverrideRecord) -> Result<OverrideOutcome, StoreError> {
        let mut state = self.lock();
        state.review.validate_override(&record)?;
        let overrides_path = self.state_dir.join(OVERRIDES_LOG);
        append_jsonl(&overrides_path, std::slice::from_ref(&record)).map_err(io_err(&overrides_path))?;

        let outcome = state.review.apply_override(record, self.config.quality)?;
        let queue_path = self.state_dir.join(QUEUE_LOG);
        append_jsonl(&queue_path, &outcome.queue_events).map_err(io_err(&queue_path))?;
        state.effective = self.detector.with_overrides(
            state.review.overrides(),
            self.config.quality,
            self.config.summary.quality_min,
        );
        Ok(outcome)
    }

    /// Exports every Reviewed frame and marks it Exported. Without a target
    /// the export goes to `exports/<timestamp>` in the state directory.
    pub fn export(
        &self,
        format: ExportFormat,
        target: Option<&Path>,
        at: DateTime<Utc>,
    ) -> Result<(PathBuf, ExportManifest), StoreError> {
        let mut state = self.lock();
        let frame_ids: Vec<String> = state.review.reviewed().iter().map(|e| e.frame_id.clone()).collect();
        let frames: BTreeMap<_, _> = frame_ids
            .iter()
            .map(|id| {
                let info = state
                    .review
                    .frame(id)
                    .cloned()
                    .ok_or_else(|| StoreError::UnknownFrame(id.clone()))?;
                Ok((id.clone(), info))
            })
            .collect::<Result<_, StoreError>>()?;
        let items = export_items(
            &self.manifest,
            &frames,
            state.review.overrides(),
            &frame_ids,
            &self.tables,
        )?;

        let target = match target {
            Some(t) => t.to_path_buf(),
            None => {
                let base = self.state_dir.join("exports");
                let stamp = at.format("%Y%m%dT%H%M%S%.3fZ").to_string();
                let mut dir = base.join(&stamp);
                let mut n = 1;
                while dir.exists() {
                    dir = base.join(format!("{stamp}-{n}"));
                    n += 1;
                }
                dir
            }
        };
        let manifest = export_retraining_set(&items, &target, format, &self.tables.ids, at)?;

        // Log first, then apply: a failed write leaves memory and disk in step.
        let mut preview = state.review.clone();
        let events = preview.mark_exported(&frame_ids, at)?;
        let queue_path = self.state_dir.join(QUEUE_LOG);
        append_jsonl(&queue_path, &events).map_err(io_err(&queue_path))?;
        state.review = preview;
        Ok((target, manifest))
    }
}

/// All studies found under a root directory, one per `<dir>/manifest.json`.
#[derive(Debug)]
pub struct StudyStore {
    root: PathBuf,
    config: PipelineConfig,
    studies: BTreeMap<String, Study>,
}

impl StudyStore {
    pub fn open(root: &Path, config: PipelineConfig) -> Result<Self, StoreError> {
        let tables = config.tables()?;
        let mut manifests = Vec::new();
        if root.join(MANIFEST_FILE).is_file() {
            manifests.push(root.join(MANIFEST_FILE));
        }
        for entry in std::fs::read_dir(root).map_err(io_err(root))? {
            let path = entry.map_err(io_err(root))?.path().join(MANIFEST_FILE);
            if path.is_file() {
                manifests.push(path);
            }
        }
        manifests.sort();

        let mut studies = BTreeMap::new();
        for path in manifests {
            let study = Study::open(&path, &config, &tables, OpenMode::SyncQueue)?;
            tracing::info!(study = study.id(), manifest = %path.display(), "opened study");
            let id = study.id().to_string();
            if studies.insert(id.clone(), study).is_some() {
                return Err(StoreError::DuplicateStudy(id));
            }
        }
        Ok(StudyStore {
            root: root.to_path_buf(),
            config,
            studies,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn studies(&self) -> impl Iterator<Item = &Study> {
        self.studies.values()
    }

    pub fn study(&self, id: &str) -> Result<&Study, StoreError> {
        self.studies
            .get(id)
            .ok_or_else(|| StoreError::UnknownStudy(id.to_string()))
    }
}
