//! Synthetic corpus with planted reading mistakes, plus replay fixtures
//! recorded from scripted stand-ins for the recognizer and the LLM.
//!
//! Each record gets a read text, a gold transcript derived from it by
//! planting insertions, substitutions and deletions, and three simulated
//! recognizer views of the gold transcript. The plain view corrects most
//! mistakes towards the read text. The prompted view keeps more of them. The
//! CTC view keeps them all but misspells words. A few records are built to
//! trip the hallucination guard, to return unusable LLM output, or to be
//! marked excluded.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignment::{align, extract_miscues, AlignStep, Weights};
use crate::backends::{
    chat_fixture_key, AsrBackend, BackendError, ChatBackend, ChatParams, FixtureKind, FixtureLine, Replay,
    TranscriptionRequest,
};
use crate::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::llm::LlmMode;
use crate::mistakes::{make_mistake, record_seed, MistakeKind};
use crate::pipeline::{Pipeline, PipelineKind, RunConfig};
use crate::ratio::Rational;
use crate::textnorm::TokenSeq;

const VOCABULARY: &[&str] = &[
    "de", "het", "een", "en", "is", "in", "op", "naar", "met", "van", "ze", "hij", "wij", "niet", "ook", "al",
    "kat", "hond", "boom", "huis", "school", "fiets", "straat", "tafel", "molen", "kabel", "wagen", "appel",
    "vogel", "water", "zondag", "morgen", "avond", "winter", "zomer", "haven", "markt", "bakker", "juffrouw",
    "cameraploeg", "toonden", "lopen", "fietsen", "zingen", "spelen", "lachen", "kijken", "vertelde", "zagen",
    "groot", "klein", "mooi", "snel", "rustig", "donker", "vrolijk", "anneleen", "pieter", "sanne", "utrecht",
];

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const FIXTURES_FILE: &str = "fixtures.jsonl";
pub const IDENTITY_FIXTURES_FILE: &str = "identity_fixtures.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthOptions {
    pub records: usize,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { records: 50, seed: 2024 }
    }
}

/// A generated corpus and two fixture sets. `fixtures` answers LLM prompts
/// with a refinement close to the gold transcript; `identity_fixtures`
/// answers with the prompted-recognizer input unchanged.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Vec<CorpusRecord>,
    pub fixtures: Replay,
    pub identity_fixtures: Replay,
}

#[derive(Debug, Clone)]
struct Plan {
    read: TokenSeq,
    prompted: TokenSeq,
    plain: TokenSeq,
    refined: TokenSeq,
    malformed_llm: bool,
}

struct Views {
    revert: f64,
    noise: f64,
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    VOCABULARY.choose(rng).expect("non-empty vocabulary").to_string()
}

/// Walks the read/gold alignment and undoes each planted mistake with
/// probability `revert`, and swaps correct words for random ones with
/// probability `noise`.
fn recognizer_view(read: &TokenSeq, gold: &TokenSeq, views: &Views, rng: &mut ChaCha8Rng) -> TokenSeq {
    let alignment = align(read, gold, &Weights::default());
    let mut out = TokenSeq::new();
    for step in &alignment.steps {
        let undo = rng.random_bool(views.revert);
        match *step {
            AlignStep::Correct { ref_index, .. } => {
                if rng.random_bool(views.noise) {
                    out.push(random_word(rng));
                } else {
                    out.push(read[ref_index].clone());
                }
            }
            AlignStep::Substitution { ref_index, hyp_index } => {
                out.push(if undo { read[ref_index].clone() } else { gold[hyp_index].clone() });
            }
            AlignStep::Insertion { hyp_index, .. } => {
                if !undo {
                    out.push(gold[hyp_index].clone());
                }
            }
            AlignStep::Deletion { ref_index } => {
                if undo {
                    out.push(read[ref_index].clone());
                }
            }
        }
    }
    out
}

fn plant_mistakes(read: &TokenSeq, rng: &mut ChaCha8Rng) -> TokenSeq {
    let mut gold = TokenSeq::new();
    for word in read.iter() {
        if rng.random_bool(0.08) {
            let kind = if rng.random_bool(0.5) {
                MistakeKind::LetterFragment
            } else {
                MistakeKind::PartialRepetition
            };
            gold.extend_from(&make_mistake(word, kind, rng).tokens);
        }
        let roll: f64 = rng.random();
        if roll < 0.06 {
            continue;
        }
        if roll < 0.14 {
            let near = make_mistake(word, MistakeKind::NearSubstitution, rng);
            if near.degenerated() || near.tokens.tokens() == [word.clone()] {
                let mut other = random_word(rng);
                while &other == word {
                    other = random_word(rng);
                }
                gold.push(other);
            } else {
                gold.extend_from(&near.tokens);
            }
            continue;
        }
        gold.push(word.clone());
    }
    gold
}

fn misspell(gold: &TokenSeq, rng: &mut ChaCha8Rng) -> TokenSeq {
    let mut out = TokenSeq::new();
    for word in gold.iter() {
        if rng.random_bool(0.03) {
            continue;
        }
        if rng.random_bool(0.12) {
            out.extend_from(&make_mistake(word, MistakeKind::NearSubstitution, rng).tokens);
        } else {
            out.push(word.clone());
        }
    }
    out
}

fn lengthen(hyp: &TokenSeq, read: &TokenSeq) -> TokenSeq {
    let mut out = hyp.clone();
    let target = read.len() * 13 / 10 + 1;
    let mut i = 0;
    while out.len() < target {
        out.push(read[i % read.len()].clone());
        i += 1;
    }
    out
}

fn plan_record(index: usize, id: &str, seed: u64) -> (CorpusRecord, Plan) {
    let mut rng = ChaCha8Rng::seed_from_u64(record_seed(seed, id));
    let len = rng.random_range(10..=24);
    let read: TokenSeq = (0..len).map(|_| random_word(&mut rng)).collect();
    let gold = plant_mistakes(&read, &mut rng);
    let mut prompted = recognizer_view(&read, &gold, &Views { revert: 0.25, noise: 0.03 }, &mut rng);
    let mut plain = recognizer_view(&read, &gold, &Views { revert: 0.6, noise: 0.04 }, &mut rng);
    let refined = recognizer_view(&read, &gold, &Views { revert: 0.1, noise: 0.0 }, &mut rng);
    let ctc = misspell(&gold, &mut rng);
    if index % 10 == 3 {
        prompted = lengthen(&prompted, &read);
    }
    if index == 13 {
        plain = lengthen(&plain, &read);
    }
    if index % 16 == 9 {
        let keep = read.len() * 7 / 10;
        prompted = TokenSeq::from_normalized(prompted.iter().take(keep).cloned());
    }
    let gold_miscues = extract_miscues(&align(&read, &gold, &Weights::default()));
    let record = CorpusRecord {
        id: id.to_string(),
        read_text: read.clone(),
        gold_transcript: Some(gold),
        gold_miscues: Some(gold_miscues),
        audio_ref: Some(format!("audio/{id}.wav")),
        ctc_text: Some(ctc),
        excluded: index % 17 == 16,
    };
    let plan = Plan {
        read,
        prompted,
        plain,
        refined,
        malformed_llm: index % 12 == 5,
    };
    (record, plan)
}

struct ScriptedAsr {
    plans: HashMap<String, Plan>,
}

impl AsrBackend for ScriptedAsr {
    fn transcribe_text(&self, request: &TranscriptionRequest) -> std::result::Result<String, BackendError> {
        let plan = self.plans.get(&request.record_id).ok_or_else(|| BackendError::FixtureMiss {
            kind: FixtureKind::Asr,
            key: request.fixture_key(),
        })?;
        Ok(match request.prompt {
            Some(_) => plan.prompted.join(),
            None => plan.plain.join(),
        })
    }
}

fn line_after<'p>(prompt: &'p str, heading: &str) -> Option<&'p str> {
    let start = prompt.find(heading)? + heading.len();
    prompt[start..].lines().next()
}

fn first_tsv_block(prompt: &str) -> Option<&str> {
    let start = prompt.find("```tsv\n")? + "```tsv\n".len();
    let len = prompt[start..].find("```")?;
    Some(&prompt[start..start + len])
}

fn prompt_mode(prompt: &str) -> LlmMode {
    if prompt.contains("```tsv") {
        LlmMode::AlignmentHypothesisMode
    } else {
        LlmMode::HypothesisMode
    }
}

/// Chat stand-in that hands back the prompted-recognizer input unchanged:
/// the Whisper alignment table in alignment mode, the Whisper hypothesis in
/// hypothesis mode. It reads prompts rendered from the default templates.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoChat;

impl ChatBackend for EchoChat {
    fn complete(&self, prompt: &str, _params: &ChatParams) -> std::result::Result<String, BackendError> {
        let malformed = || BackendError::Malformed("prompt lacks the expected sections".into());
        match prompt_mode(prompt) {
            LlmMode::AlignmentHypothesisMode => {
                let table = first_tsv_block(prompt).ok_or_else(malformed)?;
                Ok(format!("```tsv\n{table}```\n"))
            }
            LlmMode::HypothesisMode => {
                let hyp = line_after(prompt, "Whisper hypothesis:\n").ok_or_else(malformed)?;
                Ok(format!("```text\n{hyp}\n```\n"))
            }
        }
    }
}

struct OracleChat {
    by_read_text: HashMap<String, Plan>,
}

impl ChatBackend for OracleChat {
    fn complete(&self, prompt: &str, _params: &ChatParams) -> std::result::Result<String, BackendError> {
        let read = line_after(prompt, "Read text:\n").unwrap_or_default();
        let plan = self
            .by_read_text
            .get(read)
            .ok_or_else(|| BackendError::Malformed(format!("no scripted answer for read text `{read}`")))?;
        Ok(match (prompt_mode(prompt), plan.malformed_llm) {
            (LlmMode::AlignmentHypothesisMode, false) => {
                let table = align(&plan.read, &plan.refined, &Weights::default()).to_table();
                format!("Here is the improved alignment.\n```tsv\n{table}```\n")
            }
            (LlmMode::AlignmentHypothesisMode, true) => {
                let reversed: TokenSeq = plan.read.iter().rev().cloned().collect();
                let table = align(&reversed, &plan.refined, &Weights::default()).to_table();
                format!("```tsv\n{table}```\n")
            }
            (LlmMode::HypothesisMode, false) => format!("```text\n{}\n```\n", plan.refined.join()),
            (LlmMode::HypothesisMode, true) => format!("The child probably said: {}", plan.refined.join()),
        })
    }
}

/// Wraps a backend and keeps every answer as a fixture line.
struct Capture<B> {
    inner: B,
    store: Mutex<Replay>,
}

impl<B> Capture<B> {
    fn new(inner: B) -> Self {
        Capture {
            inner,
            store: Mutex::new(Replay::new()),
        }
    }

    fn keep(&self, kind: FixtureKind, key: String, value: &str) -> std::result::Result<(), BackendError> {
        self.store.lock().expect("capture lock").insert(FixtureLine {
            kind,
            key,
            value: value.to_string(),
        })
    }

    fn into_replay(self) -> Replay {
        self.store.into_inner().expect("capture lock")
    }
}

impl<B: AsrBackend> AsrBackend for Capture<B> {
    fn transcribe_text(&self, request: &TranscriptionRequest) -> std::result::Result<String, BackendError> {
        let value = self.inner.transcribe_text(request)?;
        self.keep(FixtureKind::Asr, request.fixture_key(), &value)?;
        Ok(value)
    }
}

impl<B: ChatBackend> ChatBackend for Capture<B> {
    fn complete(&self, prompt: &str, params: &ChatParams) -> std::result::Result<String, BackendError> {
        let value = self.inner.complete(prompt, params)?;
        self.keep(FixtureKind::Chat, chat_fixture_key(prompt, params), &value)?;
        Ok(value)
    }
}

fn merge(parts: impl IntoIterator<Item = Replay>) -> Result<Replay> {
    let mut out = Replay::new();
    for part in parts {
        for line in part.to_lines() {
            out.insert(line)?;
        }
    }
    Ok(out)
}

/// Records the fixtures the whisper pipeline (with and without prompt)
/// and both LLM modes request, under `config`.
fn record_fixtures<C: ChatBackend>(corpus: &[CorpusRecord], config: &RunConfig, asr: ScriptedAsr, chat: C) -> Result<Replay> {
    let asr = Capture::new(asr);
    let chat = Capture::new(chat);
    let mut plain = config.clone();
    plain.prompt.rate = Rational::ZERO;
    Pipeline::new(plain, &asr)?.run_with(corpus, PipelineKind::PromptingWhisper, &Default::default(), |_| Ok(()))?;
    for mode in [LlmMode::HypothesisMode, LlmMode::AlignmentHypothesisMode] {
        let mut llm = config.clone();
        llm.llm.mode = Some(mode);
        Pipeline::new(llm, &asr)?
            .with_chat(&chat)
            .run_with(corpus, PipelineKind::PromptingLlm, &Default::default(), |_| Ok(()))?;
    }
    merge([asr.into_replay(), chat.into_replay()])
}

/// Builds the corpus and records fixtures for every request a run with
/// `config` makes, in both LLM modes and without a prompt.
pub fn generate(options: &SynthOptions, config: &RunConfig) -> Result<SynthOutput> {
    let width = options.records.max(1).to_string().len().max(3);
    let (corpus, plans): (Vec<CorpusRecord>, Vec<Plan>) = (0..options.records)
        .map(|i| plan_record(i, &format!("syn{:0width$}", i + 1), options.seed))
        .unzip();
    let by_id: HashMap<String, Plan> = corpus.iter().map(|r| r.id.clone()).zip(plans.iter().cloned()).collect();
    let by_read_text: HashMap<String, Plan> = plans.iter().map(|p| (p.read.join(), p.clone())).collect();
    let fixtures = record_fixtures(
        &corpus,
        config,
        ScriptedAsr { plans: by_id.clone() },
        OracleChat { by_read_text },
    )?;
    let identity_fixtures = record_fixtures(&corpus, config, ScriptedAsr { plans: by_id }, EchoChat)?;
    Ok(SynthOutput {
        corpus,
        fixtures,
        identity_fixtures,
    })
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = String::new();
    for line in lines {
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl SynthOutput {
    /// Writes `corpus.jsonl`, `fixtures.jsonl` and `identity_fixtures.jsonl`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_lines(&dir.join(CORPUS_FILE), self.corpus.iter().map(CorpusRecord::to_json_line))?;
        write_lines(&dir.join(FIXTURES_FILE), self.fixtures.to_lines().iter().map(FixtureLine::to_json))?;
        write_lines(
            &dir.join(IDENTITY_FIXTURES_FILE),
            self.identity_fixtures.to_lines().iter().map(FixtureLine::to_json),
        )
    }
}
