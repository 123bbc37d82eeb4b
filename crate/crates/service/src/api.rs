//! HTTP routes over a [`StudyStore`].

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use tower_http::cors::{AllowOrigin, CorsLayer};
use triage_core::active_learning::{ActiveLearningError, AnnotationBox, EntryStatus, OverrideRequest};
use triage_core::SCHEMA_VERSION;

use crate::store::{StoreError, StudyStore};
use crate::views::{
    AnnotationOrigin, ErrorBody, ErrorEnvelope, ExportRequest, FrameView, OverrideCreated, QueueView, StudyList,
    StudySummary, VideoView,
};

/// An error rendered as `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorEnvelope {
            error: ErrorBody {
                code: self.code.to_string(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            StoreError::UnknownStudy(_) | StoreError::UnknownVideo(_) | StoreError::UnknownFrame(_) => {
                (StatusCode::NOT_FOUND, "not_found")
            }
            StoreError::Review(ActiveLearningError::UnknownFrame(_)) => (StatusCode::NOT_FOUND, "not_found"),
            StoreError::Review(ActiveLearningError::BoxOutOfBounds { .. }) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_annotation")
            }
            StoreError::Review(ActiveLearningError::Transition(_))
            | StoreError::Review(ActiveLearningError::NoAnnotationSource(_)) => (StatusCode::CONFLICT, "conflict"),
            _ => {
                tracing::error!(error = %e, "request failed");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, code, message)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let (status, code) = match &r {
            JsonRejection::JsonDataError(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_body"),
            JsonRejection::MissingJsonContentType(_) => (StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media_type"),
            _ => (StatusCode::BAD_REQUEST, "malformed_body"),
        };
        ApiError::new(status, code, r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;
type AppState = Arc<StudyStore>;

/// Builds the API router. CORS and the bearer-token check follow the
/// store's service config.
pub fn router(store: Arc<StudyStore>) -> Router {
    let service = store.config().service.clone();
    let api = Router::new()
        .route("/api/studies", get(list_studies))
        .route("/api/studies/{sid}/report", get(report))
        .route("/api/studies/{sid}/videos/{vid}", get(video))
        .route("/api/studies/{sid}/frames/{fid}", get(frame))
        .route("/api/studies/{sid}/frames/{fid}/image", get(frame_image))
        .route("/api/studies/{sid}/frames/{fid}/override", post(add_override))
        .route("/api/studies/{sid}/queue", get(queue))
        .route("/api/studies/{sid}/export", post(export))
        .fallback(not_found)
        .with_state(store);

    let api = match service.bearer_token {
        Some(token) => {
            let expected: Arc<str> = format!("Bearer {token}").into();
            api.layer(middleware::from_fn(move |req: Request, next: Next| {
                let expected = expected.clone();
                async move {
                    let ok = req
                        .headers()
                        .get(header::AUTHORIZATION)
                        .is_some_and(|v| v.as_bytes() == expected.as_bytes());
                    if ok {
                        next.run(req).await
                    } else {
                        ApiError::new(
                            StatusCode::UNAUTHORIZED,
                            "unauthorized",
                            "missing or invalid bearer token",
                        )
                        .into_response()
                    }
                }
            }))
        }
        None => api,
    };

    if service.cors_origins.is_empty() {
        return api;
    }
    let origins: Vec<HeaderValue> = service
        .cors_origins
        .iter()
        .filter_map(|o| HeaderValue::from_str(o).ok())
        .collect();
    api.layer(
        CorsLayer::new()
            .allow_origin(AllowOrigin::list(origins))
            .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
            .allow_headers([header::CONTENT_TYPE, header::AUTHORIZATION]),
    )
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn list_studies(State(store): State<AppState>) -> Json<StudyList> {
    Json(StudyList::new(store.studies().map(StudySummary::of).collect()))
}

async fn report(State(store): State<AppState>, Path(sid): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(store.study(&sid)?.report()?))
}

async fn video(State(store): State<AppState>, Path((sid, vid)): Path<(String, String)>) -> ApiResult<Json<VideoView>> {
    let study = store.study(&sid)?;
    let state = study.lock();
    let v = state
        .effective
        .video(&vid)
        .ok_or_else(|| StoreError::UnknownVideo(vid.clone()))?;
    Ok(Json(VideoView {
        schema_version: SCHEMA_VERSION,
        study_id: sid,
        scan_location: v.scan_location,
        fps: v.fps,
        analysis: v.analysis.clone(),
    }))
}

async fn frame(State(store): State<AppState>, Path((sid, fid)): Path<(String, String)>) -> ApiResult<Json<FrameView>> {
    let study = store.study(&sid)?;
    let state = study.lock();
    let info = state
        .review
        .frame(&fid)
        .ok_or_else(|| StoreError::UnknownFrame(fid.clone()))?;
    let find = |scores: &triage_core::study::StudyScores| {
        scores
            .video(&info.video_id)
            .and_then(|v| v.analysis.frames.iter().find(|f| f.frame_id == fid).cloned())
            .ok_or_else(|| StoreError::UnknownFrame(fid.clone()))
    };
    let detector = find(&study.detector)?;
    let effective = find(&state.effective)?;
    let latest = state.review.overrides().latest(&fid).cloned();
    let (source, effective_annotations) = match &latest {
        Some(o) => (AnnotationOrigin::Override, o.annotations.clone()),
        None => (
            AnnotationOrigin::Detector,
            detector.detections.iter().map(AnnotationBox::from).collect(),
        ),
    };
    Ok(Json(FrameView {
        schema_version: SCHEMA_VERSION,
        image_url: format!("/api/studies/{sid}/frames/{fid}/image"),
        study_id: sid,
        video_id: info.video_id.clone(),
        frame_id: fid.clone(),
        image_size: info.image_size,
        detections: detector.detections,
        quality: effective.quality,
        severity: effective.severity,
        source,
        effective_annotations,
        latest_override: latest,
        queue_entry: state.review.queue().entry(&fid).cloned(),
    }))
}

async fn frame_image(State(store): State<AppState>, Path((sid, fid)): Path<(String, String)>) -> ApiResult<Response> {
    let study = store.study(&sid)?;
    let (_, record) = study
        .manifest
        .frame(&fid)
        .ok_or_else(|| StoreError::UnknownFrame(fid.clone()))?;
    let path = study.manifest.resolve(&record.image);
    let bytes = tokio::fs::read(&path).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "not_found",
                format!("image for frame {fid:?} is missing"),
            )
        } else {
            ApiError::from(StoreError::Io {
                path: path.display().to_string(),
                source: e,
            })
        }
    })?;
    let mime = mime_guess::from_path(&path).first_or_octet_stream();
    Ok(([(header::CONTENT_TYPE, mime.essence_str().to_string())], bytes).into_response())
}

async fn queue(State(store): State<AppState>, Path(sid): Path<String>) -> ApiResult<Json<QueueView>> {
    let study = store.study(&sid)?;
    let state = study.lock();
    let entries = state
        .review
        .queue()
        .entries()
        .iter()
        .filter(|e| e.status != EntryStatus::Exported)
        .cloned()
        .collect();
    Ok(Json(QueueView {
        schema_version: SCHEMA_VERSION,
        study_id: sid,
        entries,
    }))
}

async fn add_override(
    State(store): State<AppState>,
    Path((sid, fid)): Path<(String, String)>,
    body: Result<Json<OverrideRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<OverrideCreated>)> {
    let study = store.study(&sid)?;
    let Json(req) = body?;
    if req.frame_id.as_ref().is_some_and(|f| *f != fid) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_body",
            "frame_id in the body does not match the URL",
        ));
    }
    if req.author.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_body",
            "author is empty",
        ));
    }
    let outcome = study.add_override(req.into_record(fid.clone(), Utc::now()))?;
    let queue_entry = study.lock().review.queue().entry(&fid).cloned();
    Ok((
        StatusCode::CREATED,
        Json(OverrideCreated {
            schema_version: SCHEMA_VERSION,
            quality: outcome.rescored.quality,
            severity: outcome.rescored.severity,
            record: outcome.record,
            queue_entry,
        }),
    ))
}

async fn export(
    State(store): State<AppState>,
    Path(sid): Path<String>,
    body: Result<Json<ExportRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let study = store.study(&sid)?;
    let Json(req) = body?;
    let (_, manifest) = study.export(req.format, None, Utc::now())?;
    Ok(Json(manifest))
}
