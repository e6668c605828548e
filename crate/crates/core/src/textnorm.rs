//! Text normalization into comparable word sequences.
//!
//! Raw story text, annotations, and recognizer output all pass through
//! [`Normalizer::normalize`] before they are compared. The rules:
//!
//! * NFC, then lowercase;
//! * whitespace splits tokens;
//! * inside a token every character that is not alphanumeric, an apostrophe
//!   or a hyphen is deleted;
//! * apostrophes and hyphens are trimmed from token edges, except a leading
//!   apostrophe on a Dutch clitic (`'s`, `'t`, `'n`, ...);
//! * tokens starting with the noise marker `ggg:` keep their prefix;
//! * an optional standardization table maps whole tokens to replacements.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Prefix of annotation noise markers such as `ggg:noise`.
pub const NOISE_MARKER: &str = "ggg:";

const CLITICS: &[&str] = &["s", "t", "n", "k", "m", "r", "ns"];

/// An ordered list of normalized word tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new() -> Self {
        TokenSeq(Vec::new())
    }

    /// Wraps tokens that are already normalized. Callers that hold raw text
    /// should go through [`normalize`] instead.
    pub fn from_normalized<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSeq(tokens.into_iter().map(Into::into).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn push(&mut self, token: impl Into<String>) {
        self.0.push(token.into());
    }

    pub fn extend_from(&mut self, other: &TokenSeq) {
        self.0.extend(other.0.iter().cloned());
    }

    /// Tokens joined by single spaces.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    /// True when every token satisfies the normalized alphabet.
    pub fn is_normalized(&self) -> bool {
        self.0.iter().all(|t| is_normalized_token(t))
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join())
    }
}

impl FromIterator<String> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Joins tokens with single spaces.
pub fn join(seq: &TokenSeq) -> String {
    seq.join()
}

/// Normalizes with the default (empty) standardization table.
pub fn normalize(raw: &str) -> TokenSeq {
    Normalizer::default().normalize(raw)
}

/// Normalizer with a word-form standardization table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalizer {
    #[serde(default)]
    standardize: BTreeMap<String, String>,
}

impl Normalizer {
    /// Builds a normalizer from a raw key/value table. Keys are normalized so
    /// lookups match normalized tokens.
    pub fn with_table<I, K, V>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        let standardize = entries
            .into_iter()
            .filter_map(|(k, v)| {
                let key = clean_chunk(&prepare(k.as_ref()))?;
                Some((key, v.into()))
            })
            .collect();
        Normalizer { standardize }
    }

    /// Parses a TOML document with a `[standardize]` table of word forms.
    pub fn from_toml_str(doc: &str) -> Result<Self> {
        let raw: Normalizer =
            toml::from_str(doc).map_err(|e| Error::Config(format!("normalization table: {e}")))?;
        Ok(Normalizer::with_table(raw.standardize))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let doc = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&doc)
    }

    pub fn table(&self) -> &BTreeMap<String, String> {
        &self.standardize
    }

    pub fn normalize(&self, raw: &str) -> TokenSeq {
        let prepared = prepare(raw);
        let mut out = Vec::new();
        for chunk in prepared.split_whitespace() {
            let Some(token) = clean_chunk(chunk) else {
                continue;
            };
            match self.standardize.get(&token) {
                Some(replacement) => out.extend(
                    prepare(replacement)
                        .split_whitespace()
                        .filter_map(clean_chunk),
                ),
                None => out.push(token),
            }
        }
        TokenSeq(out)
    }
}

fn prepare(raw: &str) -> String {
    let composed: String = raw.nfc().collect();
    composed
        .to_lowercase()
        .chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '\u{02BC}' | '`' => '\'',
            '\u{2010}' | '\u{2011}' => '-',
            other => other,
        })
        .nfc()
        .collect()
}

fn keep_char(c: char) -> bool {
    (c.is_alphanumeric() && !c.is_uppercase()) || c == '\'' || c == '-'
}

fn is_edge_mark(c: char) -> bool {
    c == '\'' || c == '-'
}

fn clean_chunk(chunk: &str) -> Option<String> {
    if let Some(rest) = chunk.strip_prefix(NOISE_MARKER) {
        let body = clean_body(rest).unwrap_or_default();
        return Some(format!("{NOISE_MARKER}{body}"));
    }
    clean_body(chunk)
}

fn clean_body(chunk: &str) -> Option<String> {
    // Deleting characters can expose new canonical compositions, so iterate
    // to a fixed point.
    let mut current = chunk.to_string();
    loop {
        let next = clean_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    (!current.is_empty()).then_some(current)
}

fn clean_once(chunk: &str) -> String {
    let filtered: String = chunk
        .chars()
        .filter(|&c| keep_char(c))
        .nfc()
        .filter(|&c| keep_char(c))
        .collect();
    let core = filtered.trim_matches(is_edge_mark);
    if core.is_empty() {
        return String::new();
    }
    let start = filtered.len() - filtered.trim_start_matches(is_edge_mark).len();
    if filtered[..start].ends_with('\'') && CLITICS.contains(&core) {
        format!("'{core}")
    } else {
        core.to_string()
    }
}

fn is_normalized_token(token: &str) -> bool {
    let body = token.strip_prefix(NOISE_MARKER).unwrap_or(token);
    if token.is_empty() || (body.is_empty() && !token.starts_with(NOISE_MARKER)) {
        return false;
    }
    body.chars().all(keep_char)
}
