//! Live HTTP backends.
//!
//! Transcription posts a multipart form (`file`, `model`, optional `prompt`)
//! to `{base}/audio/transcriptions` and reads `text` from the JSON reply.
//! Chat posts `{model, messages, temperature, max_tokens}` to
//! `{base}/chat/completions` and reads `choices[0].message.content`.

use std::time::Duration;

use reqwest::blocking::{multipart, Client, RequestBuilder};
use serde::Deserialize;
use serde_json::json;
use tracing::warn;

use super::{AsrBackend, BackendError, ChatBackend, ChatParams, TranscriptionRequest};

pub const API_KEY_ENV: &str = "READMISCUE_API_KEY";
pub const ASR_URL_ENV: &str = "READMISCUE_ASR_URL";
pub const CHAT_URL_ENV: &str = "READMISCUE_CHAT_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone)]
struct Endpoint {
    client: Client,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl Endpoint {
    fn new(base_url: String, api_key: Option<String>, retry: RetryPolicy) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(retry.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Endpoint {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            retry,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url, path)
    }

    /// Sends with retries on transient failures, doubling the backoff.
    fn send<F>(&self, build: F) -> Result<serde_json::Value, BackendError>
    where
        F: Fn() -> Result<RequestBuilder, BackendError>,
    {
        let mut backoff = self.retry.initial_backoff;
        let mut attempt = 0;
        loop {
            let result = build().and_then(|req| {
                let req = match &self.api_key {
                    Some(key) => req.bearer_auth(key),
                    None => req,
                };
                self.read_response(req)
            });
            match result {
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    attempt += 1;
                    warn!(attempt, error = %e, "retrying backend call");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                other => return other,
            }
        }
    }

    fn read_response(&self, req: RequestBuilder) -> Result<serde_json::Value, BackendError> {
        let resp = req.send().map_err(|e| self.classify(e))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| self.classify(e))?;
        match status {
            200..=299 => serde_json::from_str(&body).map_err(|e| BackendError::Malformed(e.to_string())),
            401 | 403 => Err(BackendError::Auth { status }),
            400 | 413 if body.contains("context_length") => Err(BackendError::ContextLength {
                prompt_tokens: 0,
                max_tokens: 0,
                limit: 0,
            }),
            _ => Err(BackendError::Http { status, body }),
        }
    }

    fn classify(&self, e: reqwest::Error) -> BackendError {
        if e.is_timeout() {
            BackendError::Timeout(self.retry.timeout)
        } else {
            BackendError::Transport(e.to_string())
        }
    }
}

fn api_key_from_env() -> Option<String> {
    std::env::var(API_KEY_ENV)
        .or_else(|_| std::env::var("OPENAI_API_KEY"))
        .ok()
        .filter(|k| !k.is_empty())
}

/// Transcription over HTTP.
#[derive(Debug, Clone)]
pub struct HttpAsr {
    endpoint: Endpoint,
}

impl HttpAsr {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Result<Self, BackendError> {
        Ok(HttpAsr {
            endpoint: Endpoint::new(base_url.into(), api_key, retry)?,
        })
    }

    /// Base URL and key from the environment.
    pub fn from_env(retry: RetryPolicy) -> Result<Self, BackendError> {
        let base = std::env::var(ASR_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Self::new(base, api_key_from_env(), retry)
    }

    fn load_audio(&self, audio_ref: &str) -> Result<(String, Vec<u8>), BackendError> {
        let name = audio_ref
            .rsplit(['/', '\\'])
            .next()
            .filter(|n| !n.is_empty())
            .unwrap_or("audio.wav")
            .to_string();
        if audio_ref.starts_with("http://") || audio_ref.starts_with("https://") {
            let resp = self
                .endpoint
                .client
                .get(audio_ref)
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| self.endpoint.classify(e))?;
            let bytes = resp.bytes().map_err(|e| self.endpoint.classify(e))?;
            return Ok((name, bytes.to_vec()));
        }
        let bytes = std::fs::read(audio_ref).map_err(|e| BackendError::Audio(format!("{audio_ref}: {e}")))?;
        Ok((name, bytes))
    }
}

impl AsrBackend for HttpAsr {
    fn transcribe_text(&self, request: &TranscriptionRequest) -> Result<String, BackendError> {
        let audio_ref = request
            .audio_ref
            .as_deref()
            .ok_or_else(|| BackendError::Audio(format!("record `{}` has no audio_ref", request.record_id)))?;
        let (name, bytes) = self.load_audio(audio_ref)?;
        let url = self.endpoint.url("audio/transcriptions");
        let value = self.endpoint.send(|| {
            let file = multipart::Part::bytes(bytes.clone()).file_name(name.clone());
            let mut form = multipart::Form::new()
                .part("file", file)
                .text("model", request.model_id.clone())
                .text("response_format", "json");
            if let Some(prompt) = &request.prompt {
                form = form.text("prompt", prompt.clone());
            }
            Ok(self.endpoint.client.post(&url).multipart(form))
        })?;
        value
            .get("text")
            .and_then(|t| t.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("transcription response has no `text`".into()))
    }
}

/// Chat completions over HTTP.
#[derive(Debug, Clone)]
pub struct HttpChat {
    endpoint: Endpoint,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl HttpChat {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Result<Self, BackendError> {
        Ok(HttpChat {
            endpoint: Endpoint::new(base_url.into(), api_key, retry)?,
        })
    }

    pub fn from_env(retry: RetryPolicy) -> Result<Self, BackendError> {
        let base = std::env::var(CHAT_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Self::new(base, api_key_from_env(), retry)
    }
}

impl ChatBackend for HttpChat {
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<String, BackendError> {
        let url = self.endpoint.url("chat/completions");
        let body = json!({
            "model": params.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let value = self
            .endpoint
            .send(|| Ok(self.endpoint.client.post(&url).json(&body)))?;
        let completion: Completion =
            serde_json::from_value(value).map_err(|e| BackendError::Malformed(e.to_string()))?;
        completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("completion has no message content".into()))
    }
}
