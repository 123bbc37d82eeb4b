mod common;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use common::{assert_schema, get, post_json, send, Fixture};
use serde_json::{json, Value};
use triage_core::annotation::{parse_label_file, ClassIdTable, LabelKind};
use triage_core::config::ServiceConfig;
use triage_core::detection::{ImageSize, LandmarkClass};
use triage_core::PipelineConfig;

const STUDY: &str = "/api/studies/demo";

#[tokio::test]
async fn study_list_counts_frames_and_queue() {
    let fx = Fixture::demo();
    let app = fx.app();
    let r = get(&app, "/api/studies").await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_schema("study-list", &body);
    let s = &body["studies"][0];
    assert_eq!(s["study_id"], "demo");
    assert_eq!(s["video_count"], 3);
    assert_eq!(s["frame_count"], 7);
    assert_eq!(s["pending_count"], 2);
    assert_eq!(s["reviewed_count"], 0);
}

#[tokio::test]
async fn report_colors_a_single_severe_location() {
    let fx = Fixture::demo();
    fx.edit_manifest(|m| {
        m["videos"].as_array_mut().unwrap().retain(|v| v["video_id"] == "r3");
    });
    let app = fx.app();
    let r = get(&app, &format!("{STUDY}/report")).await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_schema("study-report", &body);
    let locations = body["locations"].as_object().unwrap();
    assert_eq!(locations.len(), 14);
    for (key, cell) in locations {
        let expected = if key == "3" { "Red" } else { "Black" };
        assert_eq!(cell["color"], expected, "location {key}");
    }
    assert_eq!(locations["3"]["video_severity"], 4);
    assert_eq!(locations["3"]["video_id"], "r3");
}

#[tokio::test]
async fn video_endpoint_returns_scores_and_summary() {
    let fx = Fixture::demo();
    let app = fx.app();
    let r = get(&app, &format!("{STUDY}/videos/r3")).await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_schema("video", &body);
    assert_eq!(body["scan_location"], 3);
    assert_eq!(body["video_severity"], 4);
    assert_eq!(body["diagnosis"], "Abnormal");
    assert_eq!(body["worst_frame_id"], "r3_002");
    assert_eq!(body["summary_frame_ids"], json!(["r3_002", "r3_003"]));
    let severities: Vec<i64> = body["frames"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["severity"]["score"].as_i64().unwrap())
        .collect();
    assert_eq!(severities, [0, 4, 1]);

    let r = get(&app, &format!("{STUDY}/videos/nope")).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_schema("error", &r.json());
}

#[tokio::test]
async fn frame_endpoint_and_image_bytes() {
    let fx = Fixture::demo();
    let app = fx.app();
    let r = get(&app, &format!("{STUDY}/frames/r3_002")).await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_schema("frame", &body);
    assert_eq!(body["source"], "detector");
    assert_eq!(body["image_size"], json!({"width": 160, "height": 120}));
    assert_eq!(body["severity"]["score"], 4);
    assert_eq!(body["effective_annotations"].as_array().unwrap().len(), 3);
    assert!(body["override"].is_null());

    let url = body["image_url"].as_str().unwrap();
    let img = get(&app, url).await;
    assert_eq!(img.status, StatusCode::OK);
    assert_eq!(img.headers[header::CONTENT_TYPE], "image/png");
    let on_disk = std::fs::read(fx.study_dir().join("images/r3_002.png")).unwrap();
    assert_eq!(img.body, on_disk);

    // The frame whose only detection falls below the confidence cutoff.
    let r = get(&app, &format!("{STUDY}/frames/r7_003")).await;
    let body = r.json();
    assert_schema("frame", &body);
    assert_eq!(body["detections"], json!([]));
    assert_eq!(body["quality"]["label"], "Bad");
    assert_eq!(body["queue_entry"]["reason"], "LowQuality");
}

#[tokio::test]
async fn unknown_ids_are_404_with_envelope() {
    let fx = Fixture::demo();
    let app = fx.app();
    for uri in [
        format!("{STUDY}/frames/missing"),
        format!("{STUDY}/frames/missing/image"),
        "/api/studies/other/report".to_string(),
        "/api/nothing".to_string(),
    ] {
        let r = get(&app, &uri).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND, "{uri}");
        let body = r.json();
        assert_schema("error", &body);
        assert_eq!(body["error"]["code"], "not_found");
    }
    let r = post_json(
        &app,
        &format!("{STUDY}/frames/missing/override"),
        &json!({"author": "dr", "annotations": []}),
    )
    .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_schema("error", &r.json());
}

#[tokio::test]
async fn queue_holds_the_bad_frame() {
    let fx = Fixture::demo();
    let app = fx.app();
    let r = get(&app, &format!("{STUDY}/queue")).await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_schema("queue", &body);
    let entries = body["entries"].as_array().unwrap();
    let low: Vec<&Value> = entries.iter().filter(|e| e["reason"] == "LowQuality").collect();
    assert_eq!(low.len(), 1);
    assert_eq!(low[0]["frame_id"], "r7_003");
    assert_eq!(low[0]["status"], "Pending");
    // The pleura-only frame is queued as well; nothing else is.
    assert_eq!(entries.len(), 2);
    assert!(entries
        .iter()
        .any(|e| e["frame_id"] == "u_001" && e["reason"] == "PleuraOnly"));
}

fn consolidation_override() -> Value {
    json!({
        "author": "dr. lee",
        "annotations": [
            {"class": "Pleura", "bbox": [20.0, 30.0, 140.0, 40.0]},
            {"class": "Consolidation", "bbox": [60.0, 45.0, 100.0, 110.0]}
        ],
        "note": "B-lines were a consolidation"
    })
}

#[tokio::test]
async fn override_rescores_and_reviews_the_frame() {
    let fx = Fixture::demo();
    let app = fx.app();
    let before = get(&app, &format!("{STUDY}/frames/r3_003")).await.json();
    assert_eq!(before["severity"]["class"], 2);
    assert_eq!(before["severity"]["driving_class"], "BLines");

    let req = consolidation_override();
    assert_schema("override-request", &req);
    let r = post_json(&app, &format!("{STUDY}/frames/r3_003/override"), &req).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let body = r.json();
    assert_schema("override-created", &body);
    assert_eq!(body["frame_id"], "r3_003");
    assert_eq!(body["severity"]["class"], 4);
    assert_eq!(body["severity"]["driving_class"], "Consolidation");
    assert_eq!(body["queue_entry"]["status"], "Reviewed");
    assert_eq!(body["queue_entry"]["reason"], "ClinicianFlag");

    let after = get(&app, &format!("{STUDY}/frames/r3_003")).await.json();
    assert_schema("frame", &after);
    assert_eq!(after["source"], "override");
    assert_eq!(after["severity"]["score"], 3);
    assert_eq!(after["effective_annotations"], req["annotations"]);
    assert_eq!(after["override"]["author"], "dr. lee");
    // Detector output is kept alongside the override.
    assert_eq!(after["detections"], before["detections"]);

    // A second override appends rather than replaces, and adds no queue entry.
    let r = post_json(&app, &format!("{STUDY}/frames/r3_003/override"), &req).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let log = std::fs::read_to_string(fx.study_dir().join(".triage/demo/overrides.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let queue = get(&app, &format!("{STUDY}/queue")).await.json();
    let reviewed = queue["entries"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["status"] == "Reviewed")
        .count();
    assert_eq!(reviewed, 1);
}

#[tokio::test]
async fn override_feeds_the_video_and_report() {
    let fx = Fixture::demo();
    let app = fx.app();
    // The healthy location-7 video becomes severe when a clinician marks a consolidation.
    let r = post_json(
        &app,
        &format!("{STUDY}/frames/r7_002/override"),
        &consolidation_override(),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED);
    let video = get(&app, &format!("{STUDY}/videos/r7")).await.json();
    assert_eq!(video["video_severity"], 3);
    let report = get(&app, &format!("{STUDY}/report")).await.json();
    assert_eq!(report["locations"]["7"]["color"], "Orange");
}

#[tokio::test]
async fn override_validation_errors() {
    let fx = Fixture::demo();
    let app = fx.app();
    let uri = format!("{STUDY}/frames/r3_001/override");

    let outside = json!({"author": "dr", "annotations": [{"class": "Pleura", "bbox": [10.0, 10.0, 400.0, 20.0]}]});
    let r = post_json(&app, &uri, &outside).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let body = r.json();
    assert_schema("error", &body);
    assert_eq!(body["error"]["code"], "invalid_annotation");

    let inverted = json!({"author": "dr", "annotations": [{"class": "Pleura", "bbox": [50.0, 10.0, 40.0, 20.0]}]});
    assert_eq!(
        post_json(&app, &uri, &inverted).await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    let bad_class = json!({"author": "dr", "annotations": [{"class": "Heart", "bbox": [1.0, 1.0, 2.0, 2.0]}]});
    assert_eq!(
        post_json(&app, &uri, &bad_class).await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    let no_author = json!({"author": " ", "annotations": []});
    assert_eq!(
        post_json(&app, &uri, &no_author).await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    let other_frame = json!({"frame_id": "r3_002", "author": "dr", "annotations": []});
    assert_eq!(
        post_json(&app, &uri, &other_frame).await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    let malformed = Request::post(&uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let r = send(&app, malformed).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_schema("error", &r.json());

    let no_type = Request::post(&uri).body(Body::from("{}")).unwrap();
    assert_eq!(send(&app, no_type).await.status, StatusCode::UNSUPPORTED_MEDIA_TYPE);

    // Nothing was stored.
    assert!(
        !fx.study_dir().join(".triage/demo/overrides.jsonl").exists()
            || std::fs::read_to_string(fx.study_dir().join(".triage/demo/overrides.jsonl"))
                .unwrap()
                .is_empty()
    );
}

#[tokio::test]
async fn export_writes_the_override_as_labels() {
    let fx = Fixture::demo();
    let app = fx.app();
    let req = consolidation_override();
    post_json(&app, &format!("{STUDY}/frames/r3_003/override"), &req).await;

    let body = json!({"format": "label-text"});
    assert_schema("export-request", &body);
    let r = post_json(&app, &format!("{STUDY}/export"), &body).await;
    assert_eq!(r.status, StatusCode::OK);
    let manifest = r.json();
    assert_schema("export-manifest", &manifest);
    assert_eq!(manifest["frames"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["class_counts"]["Consolidation"], 1);
    assert_eq!(manifest["class_counts"]["Pleura"], 1);
    assert_eq!(manifest["class_counts"]["BLines"], 0);

    let exports = fx.study_dir().join(".triage/demo/exports");
    let dirs: Vec<_> = std::fs::read_dir(&exports)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1);
    let dir = &dirs[0];
    let label_file = manifest["frames"][0]["label_file"].as_str().unwrap();
    let text = std::fs::read_to_string(dir.join(label_file)).unwrap();
    let parsed = parse_label_file(
        &text,
        "r3_003",
        ImageSize::new(160, 120).unwrap(),
        LabelKind::GroundTruth,
        &ClassIdTable::canonical(),
    )
    .unwrap();
    let expected: Vec<(LandmarkClass, [f64; 4])> = req["annotations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            (
                serde_json::from_value(a["class"].clone()).unwrap(),
                serde_json::from_value(a["bbox"].clone()).unwrap(),
            )
        })
        .collect();
    assert_eq!(parsed.detections.len(), expected.len());
    for (d, (class, bbox)) in parsed.detections.iter().zip(&expected) {
        assert_eq!(d.class, *class);
        let got = d.bbox.corners();
        for (g, e) in got.iter().zip(bbox) {
            assert!((g - e).abs() < 1e-3, "{got:?} vs {bbox:?}");
        }
    }
    let image = manifest["frames"][0]["image"].as_str().unwrap();
    assert!(dir.join(image).is_file());

    // Exported entries leave the queue view; a second export is empty.
    let queue = get(&app, &format!("{STUDY}/queue")).await.json();
    assert!(queue["entries"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["frame_id"] != "r3_003"));
    let again = post_json(&app, &format!("{STUDY}/export"), &body).await.json();
    assert_eq!(again["frames"], json!([]));

    let r = post_json(&app, &format!("{STUDY}/export"), &json!({"format": "csv"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

async fn snapshot(app: &axum::Router) -> Vec<(String, Vec<u8>)> {
    let mut uris = vec![
        "/api/studies".to_string(),
        format!("{STUDY}/report"),
        format!("{STUDY}/queue"),
        format!("{STUDY}/frames/r3_003/image"),
    ];
    for v in ["r3", "r7", "unassigned"] {
        uris.push(format!("{STUDY}/videos/{v}"));
    }
    for f in ["r3_001", "r3_002", "r3_003", "r7_001", "r7_002", "r7_003", "u_001"] {
        uris.push(format!("{STUDY}/frames/{f}"));
    }
    let mut out = Vec::new();
    for uri in uris {
        let r = get(app, &uri).await;
        assert_eq!(r.status, StatusCode::OK, "{uri}");
        out.push((uri, r.body));
    }
    out
}

#[tokio::test]
async fn gets_are_identical_across_restarts() {
    let fx = Fixture::demo();
    let first = snapshot(&fx.app()).await;
    assert_eq!(first, snapshot(&fx.app()).await);

    // Also after writes: the override and queue logs fully determine state.
    let app = fx.app();
    post_json(
        &app,
        &format!("{STUDY}/frames/r3_003/override"),
        &consolidation_override(),
    )
    .await;
    let live = snapshot(&app).await;
    drop(app);
    assert_eq!(live, snapshot(&fx.app()).await);
    assert_ne!(first, live);

    // GETs never write.
    let app = fx.app();
    let logs = || std::fs::read_dir(fx.study_dir().join(".triage/demo")).unwrap().count();
    let n = logs();
    snapshot(&app).await;
    assert_eq!(n, logs());
}

fn secured(token: Option<&str>, origins: &[&str]) -> PipelineConfig {
    PipelineConfig {
        service: ServiceConfig {
            cors_origins: origins.iter().map(|s| s.to_string()).collect(),
            bearer_token: token.map(str::to_string),
        },
        ..PipelineConfig::default()
    }
}

#[tokio::test]
async fn bearer_token_is_enforced_when_configured() {
    let fx = Fixture::demo();
    let app = fx.app_with(secured(Some("s3cret"), &[]));

    let r = get(&app, "/api/studies").await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let body = r.json();
    assert_schema("error", &body);
    assert_eq!(body["error"]["code"], "unauthorized");

    let wrong = Request::get("/api/studies")
        .header(header::AUTHORIZATION, "Bearer nope")
        .body(Body::empty())
        .unwrap();
    assert_eq!(send(&app, wrong).await.status, StatusCode::UNAUTHORIZED);

    let right = Request::get("/api/studies")
        .header(header::AUTHORIZATION, "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(send(&app, right).await.status, StatusCode::OK);
}

#[tokio::test]
async fn cors_allows_only_configured_origins() {
    let fx = Fixture::demo();
    let app = fx.app_with(secured(None, &["http://localhost:5173"]));
    let req = |origin: &str| {
        Request::get("/api/studies")
            .header(header::ORIGIN, origin)
            .body(Body::empty())
            .unwrap()
    };
    let r = send(&app, req("http://localhost:5173")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
    let r = send(&app, req("http://evil.example")).await;
    assert!(r.headers.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());

    let preflight = Request::options("/api/studies/demo/frames/r3_001/override")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
        .body(Body::empty())
        .unwrap();
    let r = send(&app, preflight).await;
    assert!(r.status.is_success());
    let methods = r.headers[header::ACCESS_CONTROL_ALLOW_METHODS].to_str().unwrap();
    assert!(methods.contains("POST"));

    // Without configured origins no CORS headers are sent at all.
    let plain = fx.app();
    let r = send(&plain, req("http://localhost:5173")).await;
    assert!(r.headers.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}
