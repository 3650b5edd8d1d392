//! Provider backends: a live chat-completion endpoint, a scripted stub and a
//! sidecar-file reader.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{PlotMetadata, ValidationReport};

pub const API_KEY_ENV: &str = "KMGPT_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderTask {
    Validate,
    Extract,
    Repair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderRequest {
    pub task: ProviderTask,
    pub system_prompt: String,
    pub user_text: String,
    /// PNG bytes, base-64 encoded.
    pub image_base64: String,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unreachable after {attempts} attempts: {message}")]
    Unreachable { attempts: usize, message: String },
    #[error("provider rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("provider reply is not usable: {0}")]
    BadResponse(String),
    #[error("no API key configured (set {API_KEY_ENV} or pass one per request)")]
    MissingKey,
    #[error("sidecar: {0}")]
    Sidecar(String),
    #[error("scripted provider has no reply left for {0:?}")]
    ScriptExhausted(ProviderTask),
}

/// Answers one request with the raw reply text, which must hold a single JSON
/// object.
pub trait MetadataProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

/// Counting semaphore capping in-flight live requests.
pub struct RateLimiter {
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl RateLimiter {
    pub fn new(max: usize) -> Self {
        Self {
            state: Mutex::new((0, max.max(1))),
            freed: Condvar::new(),
        }
    }

    pub fn set_max(&self, max: usize) {
        self.state.lock().expect("limiter lock").1 = max.max(1);
        self.freed.notify_all();
    }

    pub fn max(&self) -> usize {
        self.state.lock().expect("limiter lock").1
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("limiter lock");
        while st.0 >= st.1 {
            st = self.freed.wait(st).expect("limiter lock");
        }
        st.0 += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.limiter.state.lock().expect("limiter lock").0 -= 1;
        self.limiter.freed.notify_one();
    }
}

/// The process-wide limiter shared by every live provider (default 2).
pub fn live_limiter() -> &'static RateLimiter {
    static LIMITER: OnceLock<RateLimiter> = OnceLock::new();
    LIMITER.get_or_init(|| RateLimiter::new(2))
}

#[derive(Clone)]
pub struct LiveConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Waits before each retry; the request is attempted `backoff.len() + 1` times.
    pub backoff: Vec<Duration>,
}

impl LiveConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(120),
            backoff: [1, 4, 16].map(Duration::from_secs).to_vec(),
        }
    }
}

impl fmt::Debug for LiveConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout", &self.timeout)
            .field("backoff", &self.backoff)
            .finish()
    }
}

pub struct LiveProvider {
    config: LiveConfig,
    client: reqwest::blocking::Client,
    limiter: &'static RateLimiter,
}

enum Attempt {
    Retry(String),
    Fail(ProviderError),
}

impl LiveProvider {
    pub fn new(config: LiveConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::BadResponse(format!("client setup: {e}")))?;
        Ok(Self {
            config,
            client,
            limiter: live_limiter(),
        })
    }

    fn body(&self, req: &ProviderRequest) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": [
                    {"type": "text", "text": req.user_text},
                    {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{}", req.image_base64)}}
                ]}
            ]
        })
    }

    fn attempt(&self, key: &str, body: &serde_json::Value) -> Result<String, Attempt> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let _permit = self.limiter.acquire();
        let resp = self
            .client
            .post(url)
            .bearer_auth(key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(e.without_url().to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.without_url().to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fail(ProviderError::Rejected {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            }));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Attempt::Fail(ProviderError::BadResponse(e.to_string())))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| Attempt::Fail(ProviderError::BadResponse("missing choices[0].message.content".into())))
    }
}

impl MetadataProvider for LiveProvider {
    fn name(&self) -> &str {
        "live"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let key = self.config.api_key.as_deref().ok_or(ProviderError::MissingKey)?;
        let body = self.body(request);
        let attempts = self.config.backoff.len() + 1;
        let mut last = String::new();
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(self.config.backoff[i - 1]);
            }
            match self.attempt(key, &body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    tracing::warn!(attempt = i + 1, %msg, "provider request failed");
                    last = msg;
                }
            }
        }
        Err(ProviderError::Unreachable {
            attempts,
            message: last,
        })
    }
}

/// Replies from a prepared queue, in order, and records each request's task.
pub struct ScriptedProvider {
    replies: Mutex<VecDeque<Result<String, ProviderError>>>,
    seen: Mutex<Vec<ProviderRequest>>,
}

impl ScriptedProvider {
    pub fn new(replies: Vec<Result<String, ProviderError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into()),
            seen: Mutex::new(vec![]),
        }
    }

    pub fn requests(&self) -> Vec<ProviderRequest> {
        self.seen.lock().expect("script lock").clone()
    }
}

impl MetadataProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        self.seen.lock().expect("script lock").push(request.clone());
        self.replies
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or(Err(ProviderError::ScriptExhausted(request.task)))
    }
}

/// Ground truth authored next to a fixture image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarFile {
    pub metadata: PlotMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
}

/// Network-free provider answering from a [`SidecarFile`].
pub struct SidecarProvider {
    file: SidecarFile,
}

impl SidecarProvider {
    pub fn new(file: SidecarFile) -> Self {
        Self { file }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Sidecar(format!("{}: {e}", path.display())))?;
        let file = serde_json::from_str(&text).map_err(|e| ProviderError::Sidecar(format!("{}: {e}", path.display())))?;
        Ok(Self::new(file))
    }
}

impl MetadataProvider for SidecarProvider {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let value = match request.task {
            ProviderTask::Validate => {
                serde_json::to_string(self.file.validation.as_ref().unwrap_or(&ValidationReport::passed()))
            }
            ProviderTask::Extract | ProviderTask::Repair => serde_json::to_string(&self.file.metadata),
        };
        value.map_err(|e| ProviderError::Sidecar(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn request() -> ProviderRequest {
        ProviderRequest {
            task: ProviderTask::Extract,
            system_prompt: "sys".into(),
            user_text: "user".into(),
            image_base64: "AAAA".into(),
        }
    }

    #[test]
    fn limiter_caps_concurrency() {
        let limiter = Arc::new(RateLimiter::new(2));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..6)
            .map(|_| {
                let (limiter, live, peak) = (limiter.clone(), live.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = limiter.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(20));
                    live.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(peak.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn default_limit_is_two() {
        assert_eq!(RateLimiter::new(2).max(), 2);
        assert!(live_limiter().max() >= 1);
    }

    #[test]
    fn unreachable_endpoint_reports_all_attempts() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let mut cfg = LiveConfig::new(format!("http://127.0.0.1:{port}/v1"), "m");
        cfg.api_key = Some("secret".into());
        cfg.backoff = vec![Duration::ZERO; 3];
        let p = LiveProvider::new(cfg).unwrap();
        match p.complete(&request()) {
            Err(ProviderError::Unreachable { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_key_is_reported() {
        let mut cfg = LiveConfig::new("http://127.0.0.1:9/v1", "m");
        cfg.api_key = None;
        assert!(matches!(
            LiveProvider::new(cfg).unwrap().complete(&request()),
            Err(ProviderError::MissingKey)
        ));
    }

    #[test]
    fn debug_redacts_key() {
        let mut cfg = LiveConfig::new("http://x", "m");
        cfg.api_key = Some("sk-very-secret".into());
        assert!(!format!("{cfg:?}").contains("very-secret"));
    }

    #[test]
    fn scripted_replies_in_order_then_exhausts() {
        let p = ScriptedProvider::new(vec![Ok("{}".into()), Err(ProviderError::BadResponse("x".into()))]);
        assert_eq!(p.complete(&request()).unwrap(), "{}");
        assert!(p.complete(&request()).is_err());
        assert!(matches!(p.complete(&request()), Err(ProviderError::ScriptExhausted(_))));
        assert_eq!(p.requests().len(), 3);
    }
}
