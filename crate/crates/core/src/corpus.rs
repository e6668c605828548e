//! Corpus records and their JSONL form.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::{align, extract_miscues, Miscue, MiscueKind, Weights};
use crate::error::{Error, Result};
use crate::textnorm::{Normalizer, TokenSeq};

/// One reading attempt. Texts are normalized at load time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub read_text: TokenSeq,
    pub gold_transcript: Option<TokenSeq>,
    /// Annotated miscues. When a gold transcript is present these are the
    /// miscues of its alignment with the read text, filled in if the corpus
    /// did not list them.
    pub gold_miscues: Option<Vec<Miscue>>,
    pub audio_ref: Option<String>,
    pub ctc_text: Option<TokenSeq>,
    pub excluded: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TokensField {
    Text(String),
    List(Vec<String>),
}

impl TokensField {
    fn normalize(self, normalizer: &Normalizer) -> TokenSeq {
        match self {
            TokensField::Text(s) => normalizer.normalize(&s),
            TokensField::List(words) => normalizer.normalize(&words.join(" ")),
        }
    }
}

#[derive(Deserialize)]
struct RawMiscue {
    kind: MiscueKind,
    position: usize,
    #[serde(default)]
    hyp_tokens: Option<TokensField>,
    #[serde(default)]
    ref_token: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    read_text: String,
    #[serde(default)]
    gold_transcript: Option<String>,
    #[serde(default)]
    gold_miscues: Option<Vec<RawMiscue>>,
    #[serde(default)]
    audio_ref: Option<String>,
    #[serde(default)]
    ctc_text: Option<String>,
    #[serde(default)]
    excluded: bool,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    id: &'a str,
    read_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold_transcript: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold_miscues: Option<&'a [Miscue]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    audio_ref: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ctc_text: Option<String>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    excluded: bool,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, read_text: TokenSeq) -> Self {
        CorpusRecord {
            id: id.into(),
            read_text,
            gold_transcript: None,
            gold_miscues: None,
            audio_ref: None,
            ctc_text: None,
            excluded: false,
        }
    }

    /// Serializes as one corpus JSONL line (without the newline).
    pub fn to_json_line(&self) -> String {
        let line = RecordLine {
            id: &self.id,
            read_text: self.read_text.join(),
            gold_transcript: self.gold_transcript.as_ref().map(TokenSeq::join),
            gold_miscues: self.gold_miscues.as_deref(),
            audio_ref: self.audio_ref.as_deref(),
            ctc_text: self.ctc_text.as_ref().map(TokenSeq::join),
            excluded: self.excluded,
        };
        serde_json::to_string(&line).expect("record serializes")
    }
}

fn miscue_matches(given: &Miscue, derived: &Miscue) -> bool {
    given.kind == derived.kind
        && given.position == derived.position
        && (given.hyp_tokens.is_empty() || given.hyp_tokens == derived.hyp_tokens)
        && given.ref_token.as_ref().is_none_or(|r| Some(r) == derived.ref_token.as_ref())
}

fn sort_key(m: &Miscue) -> (usize, MiscueKind) {
    (m.position, m.kind)
}

/// Checks annotated miscues against the read text and, when available, the
/// gold transcript. Returns the miscue list to keep.
pub fn reconcile_gold(
    read_text: &TokenSeq,
    gold_transcript: Option<&TokenSeq>,
    given: Option<Vec<Miscue>>,
    weights: &Weights,
) -> std::result::Result<Option<Vec<Miscue>>, String> {
    let n = read_text.len();
    if let Some(given) = &given {
        for m in given {
            let in_range = match m.kind {
                MiscueKind::Ins => m.position <= n,
                MiscueKind::Sub | MiscueKind::Del => m.position < n,
            };
            if !in_range {
                return Err(format!("{} miscue at position {} is outside a read text of {n} words", m.kind, m.position));
            }
            if m.kind == MiscueKind::Del && !m.hyp_tokens.is_empty() {
                return Err(format!("deletion at position {} carries hyp_tokens", m.position));
            }
        }
    }
    let Some(transcript) = gold_transcript else {
        return Ok(given);
    };
    let derived = extract_miscues(&align(read_text, transcript, weights));
    if let Some(mut given) = given {
        let mut sorted = derived.clone();
        given.sort_by_key(sort_key);
        sorted.sort_by_key(sort_key);
        if given.len() != sorted.len() || !given.iter().zip(&sorted).all(|(g, d)| miscue_matches(g, d)) {
            return Err("gold miscues disagree with the gold transcript".into());
        }
    }
    Ok(Some(derived))
}

/// Parses corpus JSONL. `path` only labels errors.
pub fn parse_corpus<R: BufRead>(
    reader: R,
    path: &Path,
    normalizer: &Normalizer,
    weights: &Weights,
) -> Result<Vec<CorpusRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        let read_text = normalizer.normalize(&raw.read_text);
        if read_text.is_empty() {
            return Err(parse_err(format!("record `{}` has an empty read_text", raw.id)));
        }
        let gold_transcript = raw.gold_transcript.map(|t| normalizer.normalize(&t));
        let given = raw.gold_miscues.map(|list| {
            list.into_iter()
                .map(|m| Miscue {
                    kind: m.kind,
                    position: m.position,
                    hyp_tokens: m.hyp_tokens.map(|t| t.normalize(normalizer)).unwrap_or_default(),
                    ref_token: m.ref_token,
                })
                .collect()
        });
        let gold_miscues = reconcile_gold(&read_text, gold_transcript.as_ref(), given, weights).map_err(|reason| {
            tracing::debug!(id = %raw.id, %reason, "inconsistent gold annotation");
            Error::InconsistentGold { id: raw.id.clone() }
        })?;
        out.push(CorpusRecord {
            id: raw.id,
            read_text,
            gold_transcript,
            gold_miscues,
            audio_ref: raw.audio_ref,
            ctc_text: raw.ctc_text.map(|t| normalizer.normalize(&t)),
            excluded: raw.excluded,
        });
    }
    Ok(out)
}

pub fn load_corpus(path: &Path, normalizer: &Normalizer, weights: &Weights) -> Result<Vec<CorpusRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), path, normalizer, weights)
}
