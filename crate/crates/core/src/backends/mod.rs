//! Speech recognizer and chat LLM clients.
//!
//! Both services sit behind small blocking traits. [`replay::Replay`] answers
//! from recorded fixtures and is what the test suite uses; [`http`] speaks
//! the common transcription and chat-completion HTTP protocols.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::textnorm::{Normalizer, TokenSeq};

pub mod cache;
pub mod ctc;
pub mod http;
pub mod replay;

pub use cache::TranscriptCache;
pub use ctc::ingest_ctc;
pub use replay::{FixtureKind, FixtureLine, FixtureRecorder, Recording, Replay};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("no replay fixture for {kind} key `{key}`")]
    FixtureMiss { kind: FixtureKind, key: String },

    #[error("fixture store: {0}")]
    Fixture(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },

    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("request timed out after {0:?}")]
    Timeout(Duration),

    #[error("prompt of {prompt_tokens} tokens plus {max_tokens} completion tokens exceeds the context limit of {limit}")]
    ContextLength {
        prompt_tokens: usize,
        max_tokens: usize,
        limit: usize,
    },

    #[error("malformed response: {0}")]
    Malformed(String),

    #[error("{0}")]
    Audio(String),
}

impl BackendError {
    /// Worth retrying against a live service.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Timeout(_) => true,
            BackendError::Http { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Where a hypothesis came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HypothesisSource {
    WhisperPrompted,
    WhisperPlain,
    #[serde(rename = "CTC")]
    Ctc,
    #[serde(rename = "LLM")]
    Llm,
}

/// Provenance markers attached to hypotheses and per-record results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Kept,
    Replaced,
    FallbackAlsoFlagged,
    PromptTruncated,
    LlmFallback,
    LlmChunked,
    Excluded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub record_id: String,
    pub tokens: TokenSeq,
    pub source: HypothesisSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<Flag>,
}

impl Hypothesis {
    pub fn new(record_id: impl Into<String>, tokens: TokenSeq, source: HypothesisSource) -> Self {
        Hypothesis {
            record_id: record_id.into(),
            tokens,
            source,
            prompt_hash: None,
            flags: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptionRequest {
    pub record_id: String,
    /// Local path or URL of the recording.
    pub audio_ref: Option<String>,
    pub prompt: Option<String>,
    pub model_id: String,
}

impl TranscriptionRequest {
    pub fn prompt_hash(&self) -> Option<String> {
        self.prompt.as_deref().map(prompt_digest)
    }

    /// `record_id:prompt_hash`, or `record_id:noprompt` without a prompt.
    pub fn fixture_key(&self) -> String {
        asr_fixture_key(&self.record_id, self.prompt.as_deref())
    }
}

/// Hex SHA-256 of a prompt.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

pub fn asr_fixture_key(record_id: &str, prompt: Option<&str>) -> String {
    match prompt {
        Some(p) => format!("{record_id}:{}", prompt_digest(p)),
        None => format!("{record_id}:noprompt"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatParams {
    #[serde(alias = "model")]
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    /// Local precheck limit on prompt plus completion tokens, counted as
    /// whitespace tokens.
    #[serde(default)]
    pub context_limit: Option<usize>,
}

fn default_max_tokens() -> usize {
    2048
}

impl Default for ChatParams {
    fn default() -> Self {
        ChatParams {
            model_id: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            context_limit: None,
        }
    }
}

/// Digest keying a chat completion: prompt plus the sampling parameters
/// that influence the output.
pub fn chat_fixture_key(prompt: &str, params: &ChatParams) -> String {
    #[derive(Serialize)]
    struct Keyed<'a> {
        prompt: &'a str,
        model: &'a str,
        temperature: f64,
        max_tokens: usize,
    }
    let canonical = serde_json::to_string(&Keyed {
        prompt,
        model: &params.model_id,
        temperature: params.temperature,
        max_tokens: params.max_tokens,
    })
    .expect("plain struct serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub trait AsrBackend: Send + Sync {
    /// Raw transcript text for one request.
    fn transcribe_text(&self, request: &TranscriptionRequest) -> Result<String, BackendError>;
}

pub trait ChatBackend: Send + Sync {
    /// Raw completion text for one single-turn prompt.
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<String, BackendError>;
}

impl<T: AsrBackend + ?Sized> AsrBackend for &T {
    fn transcribe_text(&self, request: &TranscriptionRequest) -> Result<String, BackendError> {
        (**self).transcribe_text(request)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<String, BackendError> {
        (**self).complete(prompt, params)
    }
}

impl<T: AsrBackend + ?Sized> AsrBackend for Box<T> {
    fn transcribe_text(&self, request: &TranscriptionRequest) -> Result<String, BackendError> {
        (**self).transcribe_text(request)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<String, BackendError> {
        (**self).complete(prompt, params)
    }
}

/// Transcribes and normalizes. Requests with a prompt produce
/// `WhisperPrompted` hypotheses, requests without one `WhisperPlain`.
pub fn transcribe(
    request: &TranscriptionRequest,
    backend: &dyn AsrBackend,
    normalizer: &Normalizer,
) -> Result<Hypothesis, BackendError> {
    let text = backend.transcribe_text(request)?;
    let source = if request.prompt.is_some() {
        HypothesisSource::WhisperPrompted
    } else {
        HypothesisSource::WhisperPlain
    };
    let mut hyp = Hypothesis::new(request.record_id.clone(), normalizer.normalize(&text), source);
    hyp.prompt_hash = request.prompt_hash();
    Ok(hyp)
}

/// Whitespace-token count used for prompt budgets and context prechecks.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Sends a chat prompt after checking it against the configured context
/// limit, so oversized prompts never reach the network.
pub fn chat(prompt: &str, backend: &dyn ChatBackend, params: &ChatParams) -> Result<String, BackendError> {
    if let Some(limit) = params.context_limit {
        let prompt_tokens = count_tokens(prompt);
        if prompt_tokens + params.max_tokens > limit {
            return Err(BackendError::ContextLength {
                prompt_tokens,
                max_tokens: params.max_tokens,
                limit,
            });
        }
    }
    backend.complete(prompt, params)
}
