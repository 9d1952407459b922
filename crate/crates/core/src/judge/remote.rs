//! HTTP client for the judge sidecar.
//!
//! Wire protocol (JSON bodies; binary arrays are base64 of little-endian
//! `f32`, row-major):
//!
//! ```text
//! GET  /v1/health -> {"status":"ok","model":"<model-id>"}
//! POST /v1/judge  <- {"prompt","width","height","pixels_b64","augmentations","seed"}
//!                 -> {"score","grad_b64","grad_width","grad_height"}
//! errors: 400 {"error": "..."} for malformed payloads, 503 while the model loads
//! ```

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Judge, JudgeError, JudgeImage, JudgeResult};

pub const DEFAULT_AUGMENTATIONS: u32 = 16;
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;
const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub prompt: String,
    pub width: u32,
    pub height: u32,
    pub pixels_b64: String,
    pub augmentations: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub score: f64,
    pub grad_b64: String,
    pub grad_width: u32,
    pub grad_height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}

pub fn encode_f32_b64(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(4 * values.len());
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32_b64(text: &str) -> Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 4 != 0 {
        return Err(format!("{} bytes is not a whole number of f32 values", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

impl JudgeRequest {
    pub fn new(image: &JudgeImage, prompt: &str, augmentations: u32, seed: u64) -> Self {
        Self {
            prompt: prompt.to_string(),
            width: image.width() as u32,
            height: image.height() as u32,
            pixels_b64: encode_f32_b64(image.pixels()),
            augmentations,
            seed,
        }
    }
}

impl JudgeResponse {
    /// Validates the response against the submitted image.
    pub fn into_result(self, image: &JudgeImage, raw: &str) -> Result<JudgeResult, JudgeError> {
        let protocol = |message: String| {
            log::error!("malformed judge response ({message}): {raw}");
            JudgeError::Protocol {
                message,
                payload: raw.to_string(),
            }
        };
        if !self.score.is_finite() {
            return Err(protocol(format!("non-finite score {}", self.score)));
        }
        if self.grad_width as usize != image.width() || self.grad_height as usize != image.height() {
            return Err(protocol(format!(
                "gradient is {}x{}, image is {}x{}",
                self.grad_width,
                self.grad_height,
                image.width(),
                image.height()
            )));
        }
        let grad = decode_f32_b64(&self.grad_b64).map_err(&protocol)?;
        if grad.len() != image.width() * image.height() {
            return Err(protocol(format!("gradient has {} values", grad.len())));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(protocol("non-finite gradient".into()));
        }
        Ok(JudgeResult {
            score: self.score,
            grad,
        })
    }
}

/// Blocking client for one prompt.
pub struct RemoteJudge {
    endpoint: String,
    prompt: String,
    augmentations: u32,
    agent: ureq::Agent,
    model: Option<String>,
}

enum Attempt {
    Timeout(String),
    Done(Result<(u16, String), JudgeError>),
}

impl RemoteJudge {
    pub fn new(endpoint: &str, prompt: &str, augmentations: u32, timeout_ms: u64) -> Result<Self, JudgeError> {
        if augmentations == 0 {
            return Err(JudgeError::InvalidImage("augmentations must be at least 1".into()));
        }
        if prompt.trim().is_empty() {
            return Err(JudgeError::InvalidImage("empty prompt".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            prompt: prompt.to_string(),
            augmentations,
            agent,
            model: None,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn model(&self) -> Option<&str> {
        self.model.as_deref()
    }

    fn attempt(&self, path: &str, body: Option<&str>) -> Attempt {
        let url = format!("{}{}", self.endpoint, path);
        let response = match body {
            Some(b) => self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(b.as_bytes()),
            None => self.agent.get(&url).call(),
        };
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Attempt::Timeout(format!("{url}: timeout ({t})")),
            Err(e) => return Attempt::Done(Err(JudgeError::Unavailable(format!("{url}: {e}")))),
        };
        let status = response.status().as_u16();
        match response.body_mut().with_config().limit(MAX_BODY_BYTES).read_to_string() {
            Ok(text) => Attempt::Done(Ok((status, text))),
            Err(ureq::Error::Timeout(t)) => Attempt::Timeout(format!("{url}: timeout ({t})")),
            Err(e) => Attempt::Done(Err(JudgeError::Unavailable(format!("{url}: {e}")))),
        }
    }

    /// One retry on timeout, then [`JudgeError::Unavailable`].
    fn request(&self, path: &str, body: Option<&str>) -> Result<String, JudgeError> {
        let mut last = String::new();
        for _ in 0..2 {
            match self.attempt(path, body) {
                Attempt::Timeout(msg) => {
                    log::warn!("{msg}");
                    last = msg;
                }
                Attempt::Done(result) => {
                    let (status, text) = result?;
                    return match status {
                        200 => Ok(text),
                        503 => Err(JudgeError::Unavailable(format!("{path}: model loading (503)"))),
                        _ => {
                            let message = serde_json::from_str::<WireError>(&text)
                                .map(|e| e.error)
                                .unwrap_or_else(|_| format!("HTTP {status}"));
                            log::error!("judge rejected request with HTTP {status}: {text}");
                            Err(JudgeError::Protocol {
                                message: format!("HTTP {status}: {message}"),
                                payload: text,
                            })
                        }
                    };
                }
            }
        }
        Err(JudgeError::Unavailable(last))
    }

    pub fn health(&mut self) -> Result<HealthResponse, JudgeError> {
        let text = self.request("/v1/health", None)?;
        let health: HealthResponse = serde_json::from_str(&text).map_err(|e| {
            log::error!("malformed health response: {text}");
            JudgeError::Protocol {
                message: e.to_string(),
                payload: text.clone(),
            }
        })?;
        if health.status != "ok" {
            return Err(JudgeError::Unavailable(format!("health status {}", health.status)));
        }
        self.model = Some(health.model.clone());
        Ok(health)
    }
}

impl Judge for RemoteJudge {
    fn judge(&mut self, image: &JudgeImage, seed: u64) -> Result<JudgeResult, JudgeError> {
        let request = JudgeRequest::new(image, &self.prompt, self.augmentations, seed);
        let body = serde_json::to_string(&request).expect("request serializes");
        let text = self.request("/v1/judge", Some(&body))?;
        let response: JudgeResponse = serde_json::from_str(&text).map_err(|e| {
            log::error!("malformed judge response: {text}");
            JudgeError::Protocol {
                message: e.to_string(),
                payload: text.clone(),
            }
        })?;
        response.into_result(image, &text)
    }

    fn describe(&self) -> String {
        match &self.model {
            Some(m) => format!("remote({}, model={m})", self.endpoint),
            None => format!("remote({})", self.endpoint),
        }
    }
}
