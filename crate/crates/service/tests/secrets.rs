//! The provider key must reach the provider and nowhere else: not the job
//! directory, not the logs.

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::extract::State;
use axum::http::{header, HeaderMap, Request, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use kmgpt_service::bench::sidecar_for;
use kmgpt_service::{router, AppState};
use kmgpt_synthbench::{make_fixture, GridCell, RenderStyle};
use serde_json::{json, Value};
use tower::ServiceExt;

const KEY: &str = "sk-test-7f3a9c1e5b2d4f6a8c0e";

#[derive(Clone)]
struct Capture(Arc<Mutex<Vec<u8>>>);

impl Write for Capture {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[derive(Clone)]
struct Mock {
    metadata: String,
    calls: Arc<Mutex<Vec<bool>>>,
}

/// Answers validation requests with a clean verdict and everything else with
/// the fixture metadata, after checking the bearer key.
async fn completions(State(mock): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let authorized = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()) == Some(&format!("Bearer {KEY}"));
    mock.calls.lock().unwrap().push(authorized);
    if !authorized {
        return (StatusCode::UNAUTHORIZED, Json(json!({ "error": "bad key" })));
    }
    let user = body["messages"][1]["content"][0]["text"].as_str().unwrap_or_default();
    let content = if user.starts_with("Check this plot") {
        json!({ "ok": true, "issues": [] }).to_string()
    } else {
        mock.metadata.clone()
    };
    (StatusCode::OK, Json(json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] })))
}

fn scan(dir: &Path, needle: &[u8], hits: &mut Vec<String>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            scan(&path, needle, hits);
        } else if std::fs::read(&path).unwrap().windows(needle.len()).any(|w| w == needle) {
            hits.push(path.display().to_string());
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn provider_key_never_persists_or_logs() {
    let logs = Arc::new(Mutex::new(Vec::new()));
    let sink = Capture(logs.clone());
    tracing_subscriber::fmt()
        .with_env_filter("trace")
        .with_writer(move || sink.clone())
        .with_ansi(false)
        .init();

    let fx = make_fixture(&"MML".parse::<GridCell>().unwrap(), 0, 11, &RenderStyle::default()).unwrap();
    let mock = Mock {
        metadata: serde_json::to_string(&sidecar_for(&fx).metadata).unwrap(),
        calls: Arc::new(Mutex::new(Vec::new())),
    };
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let port = listener.local_addr().unwrap().port();
    let llm = Router::new().route("/v1/chat/completions", post(completions)).with_state(mock.clone());
    tokio::spawn(async move { axum::serve(listener, llm).await.unwrap() });

    let jobs = tempfile::tempdir().unwrap();
    let app = router(AppState::new(jobs.path(), 1).unwrap());
    let boundary = "b0undary";
    let mut upload = format!("--{boundary}\r\nContent-Disposition: form-data; name=\"image\"\r\n\r\n").into_bytes();
    upload.extend_from_slice(&fx.plot.image.encode_png().unwrap());
    upload.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let res = app
        .clone()
        .oneshot(
            Request::post("/api/jobs")
                .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
                .body(Body::from(upload))
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::CREATED);
    let created: Value = serde_json::from_slice(&to_bytes(res.into_body(), usize::MAX).await.unwrap()).unwrap();
    let id = created["id"].as_str().unwrap().to_string();

    let config = json!({
        "provider": "live",
        "endpoint": format!("http://127.0.0.1:{port}/v1"),
        "model": "mock-model",
        "seed": 4,
    });
    let res = app
        .clone()
        .oneshot(
            Request::post(format!("/api/jobs/{id}/run"))
                .header(header::CONTENT_TYPE, "application/json")
                .header("x-provider-key", KEY)
                .body(Body::from(config.to_string()))
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::ACCEPTED);

    let start = Instant::now();
    let job = loop {
        let res = app
            .clone()
            .oneshot(Request::get(format!("/api/jobs/{id}")).body(Body::empty()).unwrap())
            .await
            .unwrap();
        let job: Value = serde_json::from_slice(&to_bytes(res.into_body(), usize::MAX).await.unwrap()).unwrap();
        if job["state"] == "reconstructed" || job["state"] == "failed" {
            break job;
        }
        assert!(start.elapsed() < Duration::from_secs(300));
        tokio::time::sleep(Duration::from_millis(100)).await;
    };
    assert_eq!(job["state"], "reconstructed", "{job}");

    let calls = mock.calls.lock().unwrap().clone();
    assert!(calls.len() >= 2 && calls.iter().all(|&ok| ok), "provider calls {calls:?}");

    let mut hits = Vec::new();
    scan(jobs.path(), KEY.as_bytes(), &mut hits);
    assert!(hits.is_empty(), "key written to {hits:?}");
    let logs = logs.lock().unwrap();
    assert!(!logs.is_empty(), "no log output captured");
    assert!(!logs.windows(KEY.len()).any(|w| w == KEY.as_bytes()), "key appears in logs");
}
