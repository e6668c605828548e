use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use super::{transcribe, AsrBackend, BackendError, Hypothesis, TranscriptionRequest};
use crate::textnorm::Normalizer;

type Slot = Arc<OnceLock<Result<Hypothesis, BackendError>>>;

/// Run-scoped transcription cache keyed by `(record_id, prompt_hash)`.
///
/// Concurrent requests for the same key block on a single backend call, so
/// each key is transcribed at most once per run. Failures are cached too.
#[derive(Debug, Default)]
pub struct TranscriptCache {
    slots: Mutex<HashMap<String, Slot>>,
    backend_calls: AtomicUsize,
}

impl TranscriptCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_transcribe(
        &self,
        request: &TranscriptionRequest,
        backend: &dyn AsrBackend,
        normalizer: &Normalizer,
    ) -> Result<Hypothesis, BackendError> {
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock poisoned");
            slots.entry(request.fixture_key()).or_default().clone()
        };
        slot.get_or_init(|| {
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            transcribe(request, backend, normalizer)
        })
        .clone()
    }

    /// Number of calls that reached the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }
}
