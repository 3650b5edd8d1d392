use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use kmgpt_service::bench::sidecar_for;
use kmgpt_service::{router, AppState, PipelineConfig};
use kmgpt_synthbench::{make_fixture, Fixture, GridCell, RenderStyle};
use serde_json::{json, Value};
use tower::ServiceExt;

const BOUNDARY: &str = "kmgpt-test-boundary";

fn fixture(code: &str, rep: usize) -> Fixture {
    make_fixture(&code.parse::<GridCell>().unwrap(), rep, 5, &RenderStyle::default()).unwrap()
}

fn multipart(png: &[u8]) -> Body {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"plot.png\"\r\nContent-Type: image/png\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(png);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    Body::from(body)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post_json(app: &Router, uri: &str, body: &Value) -> (StatusCode, Vec<u8>) {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, req).await
}

async fn create(app: &Router, fx: &Fixture) -> String {
    let req = Request::post("/api/jobs")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(multipart(&fx.plot.image.encode_png().unwrap()))
        .unwrap();
    let (status, body) = send(app, req).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["state"], "created");
    v["id"].as_str().unwrap().to_string()
}

fn run_body(fx: &Fixture) -> Value {
    serde_json::to_value(PipelineConfig::inline_sidecar(sidecar_for(fx), fx.seed)).unwrap()
}

async fn wait_done(app: &Router, id: &str) -> Value {
    let start = Instant::now();
    loop {
        let (status, body) = get(app, &format!("/api/jobs/{id}")).await;
        assert_eq!(status, StatusCode::OK);
        let job: Value = serde_json::from_slice(&body).unwrap();
        if job["state"] == "reconstructed" || job["state"] == "failed" {
            return job;
        }
        assert!(start.elapsed() < Duration::from_secs(300), "job {id} stuck in {}", job["state"]);
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn job_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(dir.path(), 2).unwrap());
    let fx = fixture("MMH", 0);

    assert_eq!(get(&app, "/api/jobs/not-a-uuid").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, &format!("/api/jobs/{}", uuid::Uuid::new_v4())).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/jobs/..%2F..%2Fetc/ipd.csv").await.0, StatusCode::NOT_FOUND);

    let id = create(&app, &fx).await;
    // nothing to download before the run
    assert_eq!(get(&app, &format!("/api/jobs/{id}/ipd.csv")).await.0, StatusCode::NOT_FOUND);

    let (status, _) = post_json(&app, &format!("/api/jobs/{id}/edits"), &json!({ "edits": [] })).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = post_json(&app, &format!("/api/jobs/{id}/run"), &json!({ "provider": "nonsense" })).await;
    assert!(status.is_client_error());

    let (status, body) = post_json(&app, &format!("/api/jobs/{id}/run"), &run_body(&fx)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&body));
    let (again, _) = post_json(&app, &format!("/api/jobs/{id}/run"), &run_body(&fx)).await;
    assert_eq!(again, StatusCode::CONFLICT);

    let job = wait_done(&app, &id).await;
    assert_eq!(job["state"], "reconstructed", "{job}");
    assert!(job["error"].is_null());
    for stage in ["validated", "prepared", "extracted", "reconstructed"] {
        assert!(job["stage_paths"][stage].is_array(), "no artifacts for {stage}");
    }

    let (status, csv) = get(&app, &format!("/api/jobs/{id}/ipd.csv")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(csv, std::fs::read(dir.path().join(&id).join("40_ipd.csv")).unwrap());
    let (status, png) = get(&app, &format!("/api/jobs/{id}/overlay.png")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(png.starts_with(b"\x89PNG"));
    let (_, meta) = get(&app, &format!("/api/jobs/{id}/metadata.json")).await;
    let meta: Value = serde_json::from_slice(&meta).unwrap();
    assert_eq!(meta["num_curves"], fx.records.len());
    let (_, report) = get(&app, &format!("/api/jobs/{id}/report.json")).await;
    let report: Value = serde_json::from_slice(&report).unwrap();
    let groups = report["groups"].as_array().unwrap();
    assert_eq!(groups.len(), fx.records.len());
    assert!(groups.iter().all(|g| g["diagnostics"]["converged"] == true && g["overlay"]["max_gap"].is_f64()));

    // finished jobs take no further edits or runs
    let (late, _) = post_json(&app, &format!("/api/jobs/{id}/edits"), &json!({ "edits": [] })).await;
    assert_eq!(late, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_uploads_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(dir.path(), 1).unwrap());
    let req = Request::post("/api/jobs")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(multipart(b"not an image"))
        .unwrap();
    assert_eq!(send(&app, req).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_jobs_finish_independently() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(dir.path(), 2).unwrap());
    let fixtures: Vec<Fixture> = ["LLL", "HMM", "MLH", "LHL"].iter().map(|c| fixture(c, 1)).collect();
    let mut ids = Vec::new();
    for fx in &fixtures {
        ids.push(create(&app, fx).await);
    }
    for (fx, id) in fixtures.iter().zip(&ids) {
        let (status, _) = post_json(&app, &format!("/api/jobs/{id}/run"), &run_body(fx)).await;
        assert_eq!(status, StatusCode::ACCEPTED);
    }
    let mut csvs = Vec::new();
    for (fx, id) in fixtures.iter().zip(&ids) {
        let job = wait_done(&app, id).await;
        assert_eq!(job["state"], "reconstructed", "{job}");
        let (_, csv) = get(&app, &format!("/api/jobs/{id}/ipd.csv")).await;
        let rows = String::from_utf8(csv).unwrap().lines().count() - 1;
        assert_eq!(rows, fx.records.iter().map(Vec::len).sum::<usize>());
        csvs.push(rows);
    }
    assert_eq!(csvs.len(), 4);
}
