//! Fixture-backed replay and recording.
//!
//! Fixture files are JSONL, one response per line:
//!
//! ```text
//! {"kind":"asr","key":"r1:noprompt","value":"het is zondag"}
//! {"kind":"chat","key":"<sha256 hex>","value":"..."}
//! ```
//!
//! ASR keys are `record_id:prompt_sha256` (or `record_id:noprompt`); chat
//! keys are [`chat_fixture_key`] digests.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{chat_fixture_key, AsrBackend, BackendError, ChatBackend, ChatParams, TranscriptionRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    Asr,
    Chat,
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FixtureKind::Asr => "asr",
            FixtureKind::Chat => "chat",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureLine {
    pub kind: FixtureKind,
    pub key: String,
    pub value: String,
}

impl FixtureLine {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

/// Read-only response store.
#[derive(Debug, Clone, Default)]
pub struct Replay {
    entries: HashMap<(FixtureKind, String), String>,
}

impl Replay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        let file = File::open(path)
            .map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_reader(BufReader::new(file))
            .map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, BackendError> {
        let mut store = Replay::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| BackendError::Fixture(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureLine = serde_json::from_str(&line)
                .map_err(|e| BackendError::Fixture(format!("line {}: {e}", idx + 1)))?;
            store
                .insert(entry)
                .map_err(|e| BackendError::Fixture(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(store)
    }

    /// Adds an entry. Re-adding an identical entry is a no-op; a conflicting
    /// value for an existing key is an error.
    pub fn insert(&mut self, entry: FixtureLine) -> Result<(), BackendError> {
        let key = (entry.kind, entry.key);
        match self.entries.get(&key) {
            Some(existing) if *existing != entry.value => Err(BackendError::Fixture(format!(
                "conflicting values for {} key `{}`",
                key.0, key.1
            ))),
            Some(_) => Ok(()),
            None => {
                self.entries.insert(key, entry.value);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, kind: FixtureKind, key: &str) -> Result<&str, BackendError> {
        self.entries
            .get(&(kind, key.to_string()))
            .map(String::as_str)
            .ok_or_else(|| BackendError::FixtureMiss {
                kind,
                key: key.to_string(),
            })
    }

    /// Entries sorted by kind then key, as fixture lines.
    pub fn to_lines(&self) -> Vec<FixtureLine> {
        let mut lines: Vec<FixtureLine> = self
            .entries
            .iter()
            .map(|((kind, key), value)| FixtureLine {
                kind: *kind,
                key: key.clone(),
                value: value.clone(),
            })
            .collect();
        lines.sort_by(|a, b| (a.kind, &a.key).cmp(&(b.kind, &b.key)));
        lines
    }
}

impl AsrBackend for Replay {
    fn transcribe_text(&self, request: &TranscriptionRequest) -> Result<String, BackendError> {
        self.get(FixtureKind::Asr, &request.fixture_key()).map(str::to_string)
    }
}

impl ChatBackend for Replay {
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<String, BackendError> {
        self.get(FixtureKind::Chat, &chat_fixture_key(prompt, params))
            .map(str::to_string)
    }
}

/// Appends fixture lines for responses obtained from live backends.
#[derive(Debug)]
pub struct FixtureRecorder {
    inner: Mutex<RecorderState>,
}

#[derive(Debug)]
struct RecorderState {
    out: BufWriter<File>,
    seen: HashSet<(FixtureKind, String)>,
}

impl FixtureRecorder {
    /// Opens `path` for appending; keys already present are not written again.
    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let existing = if path.exists() {
            Replay::from_path(path)?
        } else {
            Replay::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        let seen = existing
            .to_lines()
            .into_iter()
            .map(|l| (l.kind, l.key))
            .collect();
        Ok(FixtureRecorder {
            inner: Mutex::new(RecorderState {
                out: BufWriter::new(file),
                seen,
            }),
        })
    }

    pub fn record(&self, kind: FixtureKind, key: &str, value: &str) -> Result<(), BackendError> {
        let mut state = self.inner.lock().expect("recorder lock poisoned");
        if !state.seen.insert((kind, key.to_string())) {
            return Ok(());
        }
        let line = FixtureLine {
            kind,
            key: key.to_string(),
            value: value.to_string(),
        };
        writeln!(state.out, "{}", line.to_json())
            .and_then(|_| state.out.flush())
            .map_err(|e| BackendError::Fixture(e.to_string()))
    }
}

/// Wraps a live backend and records every successful response.
pub struct Recording<B> {
    inner: B,
    recorder: std::sync::Arc<FixtureRecorder>,
}

impl<B> Recording<B> {
    pub fn new(inner: B, recorder: std::sync::Arc<FixtureRecorder>) -> Self {
        Recording { inner, recorder }
    }
}

impl<B: AsrBackend> AsrBackend for Recording<B> {
    fn transcribe_text(&self, request: &TranscriptionRequest) -> Result<String, BackendError> {
        let text = self.inner.transcribe_text(request)?;
        self.recorder
            .record(FixtureKind::Asr, &request.fixture_key(), &text)?;
        Ok(text)
    }
}

impl<B: ChatBackend> ChatBackend for Recording<B> {
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<String, BackendError> {
        let text = self.inner.complete(prompt, params)?;
        self.recorder
            .record(FixtureKind::Chat, &chat_fixture_key(prompt, params), &text)?;
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{transcribe, HypothesisSource};
    use crate::textnorm::{Normalizer, TokenSeq};

    fn request(prompt: Option<&str>) -> TranscriptionRequest {
        TranscriptionRequest {
            record_id: "r1".into(),
            audio_ref: None,
            prompt: prompt.map(str::to_string),
            model_id: "whisper".into(),
        }
    }

    #[test]
    fn replays_plain_and_prompted_rows() {
        let prompted_key = request(Some("h het it is")).fixture_key();
        let doc = format!(
            "{}\n\n{}\n",
            r#"{"kind":"asr","key":"r1:noprompt","value":"Het is zondag."}"#,
            FixtureLine {
                kind: FixtureKind::Asr,
                key: prompted_key,
                value: "h het is zondag".into()
            }
            .to_json()
        );
        let replay = Replay::from_reader(doc.as_bytes()).unwrap();
        let n = Normalizer::default();

        let plain = transcribe(&request(None), &replay, &n).unwrap();
        assert_eq!(plain.tokens, TokenSeq::from_normalized(["het", "is", "zondag"]));
        assert_eq!(plain.source, HypothesisSource::WhisperPlain);
        assert_eq!(plain.prompt_hash, None);

        let prompted = transcribe(&request(Some("h het it is")), &replay, &n).unwrap();
        assert_eq!(prompted.source, HypothesisSource::WhisperPrompted);
        assert_eq!(prompted.tokens.len(), 4);
        assert!(prompted.prompt_hash.is_some());

        let miss = transcribe(&request(Some("other")), &replay, &n).unwrap_err();
        assert!(matches!(miss, BackendError::FixtureMiss { kind: FixtureKind::Asr, .. }));
        let mut unknown = request(None);
        unknown.record_id = "zz".into();
        assert_eq!(
            replay.transcribe_text(&unknown).unwrap_err(),
            BackendError::FixtureMiss {
                kind: FixtureKind::Asr,
                key: "zz:noprompt".into()
            }
        );
    }

    #[test]
    fn chat_replay_is_verbatim() {
        let params = ChatParams::default();
        let mut replay = Replay::new();
        replay
            .insert(FixtureLine {
                kind: FixtureKind::Chat,
                key: chat_fixture_key("prompt", &params),
                value: "```\nhet is\n```".into(),
            })
            .unwrap();
        assert_eq!(replay.complete("prompt", &params).unwrap(), "```\nhet is\n```");
        assert!(replay.complete("prompt2", &params).is_err());
    }

    #[test]
    fn conflicting_and_malformed_fixtures_are_rejected() {
        let doc = concat!(
            r#"{"kind":"asr","key":"a","value":"x"}"#,
            "\n",
            r#"{"kind":"asr","key":"a","value":"y"}"#
        );
        assert!(Replay::from_reader(doc.as_bytes()).is_err());
        let dup = concat!(
            r#"{"kind":"asr","key":"a","value":"x"}"#,
            "\n",
            r#"{"kind":"asr","key":"a","value":"x"}"#
        );
        assert_eq!(Replay::from_reader(dup.as_bytes()).unwrap().len(), 1);
        assert!(Replay::from_reader(&b"{\"kind\":\"tts\",\"key\":\"a\",\"value\":\"x\"}"[..]).is_err());
    }

    #[test]
    fn fixture_line_format_is_stable() {
        let line = FixtureLine {
            kind: FixtureKind::Chat,
            key: "k".into(),
            value: "a\tb\n".into(),
        };
        assert_eq!(line.to_json(), r#"{"kind":"chat","key":"k","value":"a\tb\n"}"#);
    }

    struct Fixed;

    impl AsrBackend for Fixed {
        fn transcribe_text(&self, _r: &TranscriptionRequest) -> Result<String, BackendError> {
            Ok("de kat".into())
        }
    }

    #[test]
    fn recording_round_trips_through_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let recorder = std::sync::Arc::new(FixtureRecorder::open(&path).unwrap());
        let live = Recording::new(Fixed, recorder.clone());
        live.transcribe_text(&request(None)).unwrap();
        live.transcribe_text(&request(None)).unwrap();
        live.transcribe_text(&request(Some("p"))).unwrap();
        drop(live);
        drop(recorder);

        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let replay = Replay::from_path(&path).unwrap();
        assert_eq!(replay.transcribe_text(&request(Some("p"))).unwrap(), "de kat");

        // Reopening does not duplicate keys already on disk.
        let recorder = std::sync::Arc::new(FixtureRecorder::open(&path).unwrap());
        Recording::new(Fixed, recorder).transcribe_text(&request(None)).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
    }
}
