//! Shared plumbing for the external model backends (saliency, OCR,
//! chart-to-table, object detection, LLM).

use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{backend} backend failed: {message}")]
pub struct BackendError {
    pub backend: String,
    pub message: String,
    /// Set when the backend asked us to back off (HTTP 429/503).
    pub retry_after: Option<Duration>,
}

impl BackendError {
    pub fn new(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            backend: backend.into(),
            message: message.into(),
            retry_after: None,
        }
    }
}

/// A blocking HTTP endpoint speaking one of the backend wire contracts.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    url: String,
    agent: ureq::Agent,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { url: url.into(), agent }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POSTs `body` with the given content type and returns the raw response
    /// body of a 2xx reply.
    pub fn post(&self, backend: &str, content_type: &str, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", content_type)
            .send(body)
            .map_err(|e| BackendError::new(backend, format!("{}: {e}", self.url)))?;
        let status = resp.status();
        if !status.is_success() {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(BackendError {
                backend: backend.to_string(),
                message: format!("{} returned HTTP {}", self.url, status.as_u16()),
                retry_after,
            });
        }
        resp.body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| BackendError::new(backend, format!("reading response: {e}")))
    }

    pub fn post_text(&self, backend: &str, content_type: &str, body: &[u8]) -> Result<String, BackendError> {
        let bytes = self.post(backend, content_type, body)?;
        String::from_utf8(bytes).map_err(|_| BackendError::new(backend, "response is not UTF-8"))
    }
}

/// Clamps a signed box to `[0, width) x [0, height)`. Returns `None` when
/// nothing of the box remains inside the image.
pub(crate) fn clip_box(x: i64, y: i64, w: i64, h: i64, width: u32, height: u32) -> Option<[u32; 4]> {
    let x0 = x.max(0);
    let y0 = y.max(0);
    let x1 = x.saturating_add(w).min(width as i64);
    let y1 = y.saturating_add(h).min(height as i64);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    Some([x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32])
}
