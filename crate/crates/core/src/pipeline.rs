//! Corpus runs of the prompted-recognizer pipeline and the LLM-refinement
//! pipeline built on top of it.
//!
//! Records are processed by a bounded worker pool. Results are emitted in
//! corpus order whatever the completion order, so replay runs are
//! byte-identical at any parallelism.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::alignment::{align, extract_miscues, Miscue, Weights};
use crate::backends::{
    chat, ingest_ctc, prompt_digest, AsrBackend, BackendError, ChatBackend, ChatParams, Flag, Hypothesis,
    HypothesisSource, TranscriptCache, TranscriptionRequest,
};
use crate::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::hallucination::{guard, is_hallucination, GuardOutcome, HallucinationPolicy};
use crate::llm::{
    build_llm_prompt, default_mistake_examples, load_mistake_examples, parse_llm_response, ContextBudget,
    LlmMode, LlmTaskInput, MistakeExample, PromptTemplates,
};
use crate::mistakes::{build_prompt, PromptSpec};
use crate::ratio::Rational;
use crate::textnorm::{Normalizer, TokenSeq};

/// Irrelevant text used for prompts when no other text is configured.
pub const DEFAULT_IRRELEVANT_TEXT: &str = include_str!("../data/irrelevant_nl.txt");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Replay,
    Live,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Fixture file read in replay mode and appended to when recording.
    pub fixtures: Option<PathBuf>,
    pub record: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub mode: Option<LlmMode>,
    /// Maximum number of read-text words sent in one LLM prompt.
    pub chunk_words: usize,
    /// `spoken<TAB>read text` example file replacing the built-in examples.
    pub examples: Option<PathBuf>,
    /// Directory holding `hypothesis.txt` and `alignment.txt`.
    pub templates: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            mode: None,
            chunk_words: 200,
            examples: None,
            templates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; per-record prompt seeds are derived from it.
    pub seed: u64,
    pub parallelism: usize,
    pub prompt: PromptSpec,
    pub hallucination: HallucinationPolicy,
    pub asr_model: String,
    pub chat: ChatParams,
    pub llm: LlmConfig,
    pub backend: BackendConfig,
    pub weights: Weights,
    pub irrelevant_text: Option<PathBuf>,
    /// CTC transcripts as `{"id", "text"}` lines, used for records without
    /// `ctc_text`.
    pub ctc: Option<PathBuf>,
    /// Transcribe records marked excluded. They are flagged and still left
    /// out of scoring.
    pub transcribe_excluded: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            parallelism: 4,
            prompt: PromptSpec::default(),
            hallucination: HallucinationPolicy::default(),
            asr_model: "whisper-large-v2".into(),
            chat: ChatParams::default(),
            llm: LlmConfig::default(),
            backend: BackendConfig::default(),
            weights: Weights::default(),
            irrelevant_text: None,
            ctc: None,
            transcribe_excluded: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML config. Relative paths inside it are resolved against
    /// the config file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.backend.fixtures,
            &mut config.llm.examples,
            &mut config.llm.templates,
            &mut config.irrelevant_text,
            &mut config.ctc,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.llm.chunk_words == 0 {
            return Err(Error::Config("llm.chunk_words must be at least 1".into()));
        }
        if self.prompt.seed != 0 && self.prompt.seed != self.seed {
            return Err(Error::Config("set the seed at the top level, not in [prompt]".into()));
        }
        Weights::new(self.weights.sub, self.weights.ins, self.weights.del)?;
        self.prompt.validate()?;
        self.hallucination.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    PromptingWhisper,
    PromptingLlm,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptArtifact {
    pub text: String,
    pub hash: String,
    pub token_count: usize,
    pub truncated: bool,
    pub mistakes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmCall {
    pub read_words: usize,
    pub prompt_hash: String,
    pub response: String,
}

/// Intermediate outputs kept with each result for auditing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Artifacts {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PromptArtifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompted: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plain: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard: Option<GuardOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub whisper: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ctc: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub llm_calls: Vec<LlmCall>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub llm_error: Option<String>,
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordResult {
    pub id: String,
    /// `None` when the record failed.
    pub source: Option<HypothesisSource>,
    pub hypothesis: String,
    pub miscues: Vec<Miscue>,
    pub flags: BTreeSet<Flag>,
    /// WER of the hypothesis against the gold transcript, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wer: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub artifacts: Artifacts,
}

impl RecordResult {
    pub fn failed(&self) -> bool {
        self.flags.contains(&Flag::Failed)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }

    pub fn hypothesis_tokens(&self) -> TokenSeq {
        TokenSeq::from_normalized(self.hypothesis.split_whitespace())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub processed: usize,
    pub resumed: usize,
    pub skipped_excluded: usize,
    pub failed: usize,
    pub replaced: usize,
    pub llm_fallbacks: usize,
}

enum RefineError {
    Overflow,
    Invalid(Error),
    Backend(BackendError),
}

/// Everything a run needs besides the corpus.
pub struct Pipeline<'a> {
    config: RunConfig,
    asr: &'a dyn AsrBackend,
    chat: Option<&'a dyn ChatBackend>,
    normalizer: Normalizer,
    irrelevant_text: TokenSeq,
    templates: PromptTemplates,
    examples: Vec<MistakeExample>,
    ctc: BTreeMap<String, Hypothesis>,
    cache: TranscriptCache,
}

impl<'a> Pipeline<'a> {
    /// Loads the prompt text, LLM templates, examples and CTC file named in
    /// `config`, falling back to the built-in defaults.
    pub fn new(config: RunConfig, asr: &'a dyn AsrBackend) -> Result<Self> {
        Self::with_normalizer(config, asr, Normalizer::default())
    }

    pub fn with_normalizer(config: RunConfig, asr: &'a dyn AsrBackend, normalizer: Normalizer) -> Result<Self> {
        config.validate()?;
        let irrelevant_raw = match &config.irrelevant_text {
            Some(path) => std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
            None => DEFAULT_IRRELEVANT_TEXT.to_string(),
        };
        let templates = match &config.llm.templates {
            Some(dir) => PromptTemplates::from_dir(dir)?,
            None => PromptTemplates::default(),
        };
        let examples = match &config.llm.examples {
            Some(path) => load_mistake_examples(path)?,
            None => default_mistake_examples(),
        };
        let ctc = match &config.ctc {
            Some(path) => ingest_ctc(path, &normalizer)?,
            None => BTreeMap::new(),
        };
        Ok(Pipeline {
            irrelevant_text: normalizer.normalize(&irrelevant_raw),
            config,
            asr,
            chat: None,
            normalizer,
            templates,
            examples,
            ctc,
            cache: TranscriptCache::new(),
        })
    }

    pub fn with_chat(mut self, chat: &'a dyn ChatBackend) -> Self {
        self.chat = Some(chat);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Backend calls made so far; repeated requests are served from cache.
    pub fn asr_calls(&self) -> usize {
        self.cache.backend_calls()
    }

    fn request(&self, record: &CorpusRecord, prompt: Option<String>) -> TranscriptionRequest {
        TranscriptionRequest {
            record_id: record.id.clone(),
            audio_ref: record.audio_ref.clone(),
            prompt,
            model_id: self.config.asr_model.clone(),
        }
    }

    fn transcribe(&self, record: &CorpusRecord, prompt: Option<String>) -> Result<Hypothesis> {
        Ok(self.cache.get_or_transcribe(&self.request(record, prompt), self.asr, &self.normalizer)?)
    }

    /// Prompt, transcribe, guard. A zero mistake rate means no prompt, so
    /// the result is the plain transcription with nothing to guard.
    fn whisper_hypothesis(&self, record: &CorpusRecord, artifacts: &mut Artifacts) -> Result<Hypothesis> {
        if self.config.prompt.rate.is_zero() {
            let plain = self.transcribe(record, None)?;
            artifacts.plain = Some(plain.tokens.join());
            return Ok(plain);
        }
        let spec = PromptSpec {
            seed: self.config.seed,
            ..self.config.prompt.clone()
        }
        .for_record(&record.id);
        let prompt = build_prompt(&spec, &record.read_text, &self.irrelevant_text)?;
        artifacts.prompt = Some(PromptArtifact {
            hash: prompt_digest(&prompt.text),
            text: prompt.text.clone(),
            token_count: prompt.token_count,
            truncated: prompt.truncated,
            mistakes: prompt.insertions.len(),
        });
        let truncated = prompt.truncated;
        let prompted = self.transcribe(record, Some(prompt.text))?;
        artifacts.prompted = Some(prompted.tokens.join());
        let policy = &self.config.hallucination;
        let fallback = if is_hallucination(&prompted.tokens, &record.read_text, policy)? {
            let plain = self.transcribe(record, None)?;
            artifacts.plain = Some(plain.tokens.join());
            plain
        } else {
            prompted.clone()
        };
        let (mut hyp, outcome) = guard(prompted, fallback, &record.read_text, policy)?;
        artifacts.guard = Some(outcome);
        if truncated {
            hyp.flags.insert(Flag::PromptTruncated);
        }
        Ok(hyp)
    }

    fn ctc_for(&self, record: &CorpusRecord) -> Option<Hypothesis> {
        match &record.ctc_text {
            Some(tokens) => Some(Hypothesis::new(record.id.clone(), tokens.clone(), HypothesisSource::Ctc)),
            None => self.ctc.get(&record.id).cloned(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &self,
        record: &CorpusRecord,
        whisper: &Hypothesis,
        ctc: &Hypothesis,
        mode: LlmMode,
        window: usize,
        chat_backend: &dyn ChatBackend,
        calls: &mut Vec<LlmCall>,
    ) -> std::result::Result<(TokenSeq, usize), RefineError> {
        let weights = &self.config.weights;
        let input = LlmTaskInput::new(
            record.read_text.clone(),
            whisper.clone(),
            ctc.clone(),
            mode,
            self.examples.clone(),
            weights,
        );
        let parts = if record.read_text.len() > window {
            input.split(window, weights)
        } else {
            vec![input]
        };
        let budget = self.config.chat.context_limit.map(|limit| ContextBudget {
            limit,
            reserved_for_completion: self.config.chat.max_tokens,
        });
        let mut tokens = TokenSeq::new();
        for part in &parts {
            let prompt = match build_llm_prompt(part, &self.templates, budget) {
                Ok(p) => p,
                Err(Error::ContextOverflow { .. }) => return Err(RefineError::Overflow),
                Err(e) => return Err(RefineError::Invalid(e)),
            };
            let response = match chat(&prompt, chat_backend, &self.config.chat) {
                Ok(r) => r,
                Err(BackendError::ContextLength { .. }) => return Err(RefineError::Overflow),
                Err(e) => return Err(RefineError::Backend(e)),
            };
            calls.push(LlmCall {
                read_words: part.read_text.len(),
                prompt_hash: prompt_digest(&prompt),
                response: response.clone(),
            });
            let hyp = parse_llm_response(mode, &response, &part.read_text, &record.id, &self.normalizer)
                .map_err(RefineError::Invalid)?;
            tokens.extend_from(&hyp.tokens);
        }
        Ok((tokens, parts.len()))
    }

    /// Refines the prompted hypothesis with the LLM, halving the chunk size
    /// when a prompt does not fit. Invalid responses fall back to `whisper`.
    fn llm_hypothesis(&self, record: &CorpusRecord, whisper: Hypothesis, artifacts: &mut Artifacts) -> Result<Hypothesis> {
        let mode = self
            .config
            .llm
            .mode
            .ok_or_else(|| Error::Config("no LLM mode configured".into()))?;
        let chat_backend = self
            .chat
            .ok_or_else(|| Error::Config("no chat backend configured".into()))?;
        let ctc = self
            .ctc_for(record)
            .ok_or_else(|| Error::Config(format!("record `{}` has no CTC hypothesis", record.id)))?;
        artifacts.whisper = Some(whisper.tokens.join());
        artifacts.ctc = Some(ctc.tokens.join());
        let mut window = self.config.llm.chunk_words.min(record.read_text.len());
        loop {
            let mut calls = Vec::new();
            let outcome = self.refine(record, &whisper, &ctc, mode, window, chat_backend, &mut calls);
            artifacts.llm_calls.extend(calls);
            let reason = match outcome {
                Ok((tokens, parts)) => {
                    let mut hyp = Hypothesis::new(record.id.clone(), tokens, HypothesisSource::Llm);
                    hyp.flags = whisper.flags.clone();
                    if parts > 1 {
                        hyp.flags.insert(Flag::LlmChunked);
                    }
                    return Ok(hyp);
                }
                Err(RefineError::Backend(e)) => return Err(e.into()),
                Err(RefineError::Overflow) if window > 1 => {
                    window /= 2;
                    warn!(id = %record.id, window, "LLM prompt too long, retrying with smaller chunks");
                    continue;
                }
                Err(RefineError::Overflow) => "prompt does not fit the context window".to_string(),
                Err(RefineError::Invalid(e)) => e.to_string(),
            };
            warn!(id = %record.id, %reason, "falling back to the prompted hypothesis");
            artifacts.llm_error = Some(reason);
            let mut hyp = whisper;
            hyp.flags.insert(Flag::LlmFallback);
            return Ok(hyp);
        }
    }

    fn finish(&self, record: &CorpusRecord, hyp: Hypothesis, artifacts: Artifacts) -> RecordResult {
        let weights = &self.config.weights;
        let miscues = extract_miscues(&align(&record.read_text, &hyp.tokens, weights));
        let wer = record
            .gold_transcript
            .as_ref()
            .filter(|g| !g.is_empty())
            .map(|gold| {
                let errors = align(gold, &hyp.tokens, weights).counts().errors();
                Rational::new(errors as u64, gold.len() as u64).expect("nonzero length")
            });
        let mut flags = hyp.flags;
        if record.excluded {
            flags.insert(Flag::Excluded);
        }
        RecordResult {
            id: record.id.clone(),
            source: Some(hyp.source),
            hypothesis: hyp.tokens.join(),
            miscues,
            flags,
            wer,
            error: None,
            artifacts,
        }
    }

    /// Runs one record; failures are reported in the result, not returned.
    pub fn process(&self, record: &CorpusRecord, kind: PipelineKind) -> RecordResult {
        let mut artifacts = Artifacts::default();
        let outcome = self.whisper_hypothesis(record, &mut artifacts).and_then(|hyp| match kind {
            PipelineKind::PromptingWhisper => Ok(hyp),
            PipelineKind::PromptingLlm => self.llm_hypothesis(record, hyp, &mut artifacts),
        });
        match outcome {
            Ok(hyp) => self.finish(record, hyp, artifacts),
            Err(e) => {
                warn!(id = %record.id, error = %e, "record failed");
                let mut flags = BTreeSet::from([Flag::Failed]);
                if record.excluded {
                    flags.insert(Flag::Excluded);
                }
                RecordResult {
                    id: record.id.clone(),
                    source: None,
                    hypothesis: String::new(),
                    miscues: Vec::new(),
                    flags,
                    wer: None,
                    error: Some(e.to_string()),
                    artifacts,
                }
            }
        }
    }

    fn check_ctc(&self, records: &[&CorpusRecord]) -> Result<()> {
        let missing: Vec<&str> = records
            .iter()
            .filter(|r| r.ctc_text.is_none() && !self.ctc.contains_key(&r.id))
            .map(|r| r.id.as_str())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("LLM runs need CTC hypotheses; missing for {missing:?}")))
        }
    }

    /// Processes `corpus` minus the ids in `done`, handing results to `sink`
    /// in corpus order.
    pub fn run_with<F>(
        &self,
        corpus: &[CorpusRecord],
        kind: PipelineKind,
        done: &HashSet<String>,
        mut sink: F,
    ) -> Result<RunSummary>
    where
        F: FnMut(&RecordResult) -> Result<()>,
    {
        let mut summary = RunSummary::default();
        let mut todo = Vec::new();
        for record in corpus {
            if done.contains(&record.id) {
                summary.resumed += 1;
            } else if record.excluded && !self.config.transcribe_excluded {
                summary.skipped_excluded += 1;
            } else {
                todo.push(record);
            }
        }
        if kind == PipelineKind::PromptingLlm {
            if self.config.llm.mode.is_none() {
                return Err(Error::Config("run-llm needs an LLM mode".into()));
            }
            if self.chat.is_none() {
                return Err(Error::Config("run-llm needs a chat backend".into()));
            }
            self.check_ctc(&todo)?;
        }
        let workers = self.config.parallelism.min(todo.len()).max(1);
        info!(records = todo.len(), workers, ?kind, "starting run");
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, RecordResult)>();
        std::thread::scope(|scope| -> Result<()> {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, todo) = (&next, &todo);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(record) = todo.get(i) else { break };
                    if tx.send((i, self.process(record, kind))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            let mut pending = BTreeMap::new();
            let mut expected = 0;
            for (i, result) in rx {
                pending.insert(i, result);
                while let Some(result) = pending.remove(&expected) {
                    summary.processed += 1;
                    summary.failed += usize::from(result.failed());
                    summary.replaced += usize::from(result.flags.contains(&Flag::Replaced));
                    summary.llm_fallbacks += usize::from(result.flags.contains(&Flag::LlmFallback));
                    sink(&result)?;
                    expected += 1;
                }
            }
            Ok(())
        })?;
        info!(?summary, "run finished");
        if summary.failed * 2 > summary.processed {
            return Err(Error::TooManyFailures {
                failed: summary.failed,
                total: summary.processed,
            });
        }
        Ok(summary)
    }

    /// Appends results to a JSONL file, one line per record as it is ready.
    /// With `resume`, records already present in the file are skipped.
    pub fn run_to_file(&self, corpus: &[CorpusRecord], kind: PipelineKind, path: &Path, resume: bool) -> Result<RunSummary> {
        let done = if resume && path.exists() {
            completed_ids(path)?
        } else {
            HashSet::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(resume)
            .truncate(!resume)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.run_with(corpus, kind, &done, |result| {
            writeln!(out, "{}", result.to_json_line())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(path, e))
        })
    }

    fn collect(&self, corpus: &[CorpusRecord], kind: PipelineKind) -> Result<Vec<RecordResult>> {
        let mut results = Vec::new();
        self.run_with(corpus, kind, &HashSet::new(), |r| {
            results.push(r.clone());
            Ok(())
        })?;
        Ok(results)
    }
}

/// Prompt, transcribe, guard and align every record.
pub fn run_prompting_whisper(pipeline: &Pipeline<'_>, corpus: &[CorpusRecord]) -> Result<Vec<RecordResult>> {
    pipeline.collect(corpus, PipelineKind::PromptingWhisper)
}

/// The prompted-recognizer steps followed by LLM refinement with the CTC
/// hypothesis as extra evidence.
pub fn run_prompting_llm(pipeline: &Pipeline<'_>, corpus: &[CorpusRecord]) -> Result<Vec<RecordResult>> {
    pipeline.collect(corpus, PipelineKind::PromptingLlm)
}

/// Ids present in an existing results file. A torn final line, left by an
/// interrupted run, is cut off so the file can be appended to.
pub fn completed_ids(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let complete = match text.rfind('\n') {
        Some(end) => &text[..=end],
        None => "",
    };
    if complete.len() != text.len() {
        warn!(path = %path.display(), "dropping incomplete last line");
        let file = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
        file.set_len(complete.len() as u64).map_err(|e| Error::io(path, e))?;
    }
    let mut ids = HashSet::new();
    for (idx, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let result: RecordResult = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        ids.insert(result.id);
    }
    Ok(ids)
}

pub fn read_results(path: &Path) -> Result<Vec<RecordResult>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let result: RecordResult = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if !seen.insert(result.id.clone()) {
            return Err(Error::DuplicateId(result.id));
        }
        out.push(result);
    }
    Ok(out)
}
