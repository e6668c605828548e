//! Categorization of frequent recognizer substitutions and a ranking of
//! deleted words.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::alignment::{align_slices, AlignStep, Miscue, MiscueKind, Weights};
use crate::ratio::Rational;
use crate::scoring::ReportFormat;
use crate::textnorm::TokenSeq;

/// Substitution categories. When several apply, the first in this order
/// wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubErrorCategory {
    BreakLongWord,
    NameEntity,
    DelInsENTH,
    SimilarVowel,
    SimilarConsonant,
    MonoSyllable,
    Other,
}

impl SubErrorCategory {
    pub const ALL: [SubErrorCategory; 7] = [
        SubErrorCategory::BreakLongWord,
        SubErrorCategory::NameEntity,
        SubErrorCategory::SimilarConsonant,
        SubErrorCategory::SimilarVowel,
        SubErrorCategory::MonoSyllable,
        SubErrorCategory::DelInsENTH,
        SubErrorCategory::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SubErrorCategory::BreakLongWord => "Break long words",
            SubErrorCategory::NameEntity => "Name entity error",
            SubErrorCategory::SimilarConsonant => "Similar consonant",
            SubErrorCategory::SimilarVowel => "Similar vowel",
            SubErrorCategory::MonoSyllable => "Mono-syllable",
            SubErrorCategory::DelInsENTH => "Delete/insert e/n/t/h",
            SubErrorCategory::Other => "Other substitutions",
        }
    }
}

impl fmt::Display for SubErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn is_vowel(c: char) -> bool {
    matches!(
        c,
        'a' | 'e' | 'i' | 'o' | 'u' | 'y'
            | 'à' | 'á' | 'â' | 'ä' | 'è' | 'é' | 'ê' | 'ë' | 'ì' | 'í' | 'î' | 'ï'
            | 'ò' | 'ó' | 'ô' | 'ö' | 'ù' | 'ú' | 'û' | 'ü' | 'ý' | 'ÿ'
    )
}

fn is_consonant(c: char) -> bool {
    c.is_alphabetic() && !is_vowel(c)
}

/// Number of maximal vowel runs, a stand-in for syllables.
pub fn vowel_groups(word: &str) -> usize {
    let mut groups = 0;
    let mut in_group = false;
    for c in word.chars() {
        let v = is_vowel(c);
        if v && !in_group {
            groups += 1;
        }
        in_group = v;
    }
    groups
}

/// Characters touched by a minimal character-level edit script, and
/// whether the script substitutes any character.
fn char_edits(reference: &str, hypothesis: &str) -> (Vec<char>, bool) {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    let unit = Weights { sub: 1, ins: 1, del: 1 };
    let (steps, _) = align_slices(&r, &h, &unit);
    let mut touched = Vec::new();
    let mut substitutes = false;
    for step in steps {
        match step {
            AlignStep::Correct { .. } => {}
            AlignStep::Substitution { ref_index, hyp_index } => {
                substitutes = true;
                touched.push(r[ref_index]);
                touched.push(h[hyp_index]);
            }
            AlignStep::Insertion { hyp_index, .. } => touched.push(h[hyp_index]),
            AlignStep::Deletion { ref_index } => touched.push(r[ref_index]),
        }
    }
    (touched, substitutes)
}

/// Assigns a substitution (`ref_token` heard as `hyp_tokens`) to a category.
///
/// Character rules only apply when the hypothesis is a single token.
/// Edits mixing vowels and consonants fall through to the syllable rule and
/// then to `Other`.
pub fn classify_substitution(ref_token: &str, hyp_tokens: &TokenSeq, entity_lexicon: &BTreeSet<String>) -> SubErrorCategory {
    if hyp_tokens.len() >= 2 && hyp_tokens.iter().map(String::as_str).collect::<String>() == ref_token {
        return SubErrorCategory::BreakLongWord;
    }
    if entity_lexicon.contains(ref_token) {
        return SubErrorCategory::NameEntity;
    }
    if let [hyp] = hyp_tokens.tokens() {
        let (touched, substitutes) = char_edits(ref_token, hyp);
        if !touched.is_empty() {
            if !substitutes && touched.iter().all(|c| matches!(c, 'e' | 'n' | 't' | 'h')) {
                return SubErrorCategory::DelInsENTH;
            }
            if touched.iter().all(|&c| is_vowel(c)) {
                return SubErrorCategory::SimilarVowel;
            }
            if touched.iter().all(|&c| is_consonant(c)) && vowel_groups(ref_token) >= 2 {
                return SubErrorCategory::SimilarConsonant;
            }
        }
    }
    if vowel_groups(ref_token) == 1 {
        return SubErrorCategory::MonoSyllable;
    }
    SubErrorCategory::Other
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub ref_token: String,
    pub hyp: String,
    pub count: usize,
    pub category: SubErrorCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: SubErrorCategory,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub min_count: usize,
    /// One row per category, in display order.
    pub rows: Vec<CategoryRow>,
    pub total: usize,
    /// Kept substitution pairs, most frequent first.
    pub pairs: Vec<PairCount>,
}

impl FrequencyTable {
    pub fn count(&self, category: SubErrorCategory) -> usize {
        self.rows.iter().find(|r| r.category == category).map_or(0, |r| r.count)
    }

    /// Share of the kept total, exact. Zero when nothing was kept.
    pub fn share(&self, category: SubErrorCategory) -> Rational {
        if self.total == 0 {
            return Rational::ZERO;
        }
        Rational::new(self.count(category) as u64, self.total as u64).expect("nonzero total")
    }
}

/// Groups identical substitutions, keeps pairs seen at least `min_count`
/// times, and sums their occurrences per category.
pub fn frequency_table<'a, I>(miscues: I, entity_lexicon: &BTreeSet<String>, min_count: usize) -> FrequencyTable
where
    I: IntoIterator<Item = &'a Miscue>,
{
    let min_count = min_count.max(1);
    let mut groups: BTreeMap<(String, TokenSeq), usize> = BTreeMap::new();
    for m in miscues {
        if m.kind != MiscueKind::Sub || m.hyp_tokens.is_empty() {
            continue;
        }
        let Some(r) = &m.ref_token else { continue };
        *groups.entry((r.clone(), m.hyp_tokens.clone())).or_default() += 1;
    }
    let mut per_category: BTreeMap<SubErrorCategory, usize> = BTreeMap::new();
    let mut pairs = Vec::new();
    for ((ref_token, hyp), count) in groups {
        if count < min_count {
            continue;
        }
        let category = classify_substitution(&ref_token, &hyp, entity_lexicon);
        *per_category.entry(category).or_default() += count;
        pairs.push(PairCount {
            ref_token,
            hyp: hyp.join(),
            count,
            category,
        });
    }
    pairs.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| (&a.ref_token, &a.hyp).cmp(&(&b.ref_token, &b.hyp))));
    let rows: Vec<CategoryRow> = SubErrorCategory::ALL
        .iter()
        .map(|&category| CategoryRow {
            category,
            count: per_category.get(&category).copied().unwrap_or(0),
        })
        .collect();
    FrequencyTable {
        min_count,
        total: rows.iter().map(|r| r.count).sum(),
        rows,
        pairs,
    }
}

/// Read-text words most often deleted, most frequent first, ties by word.
pub fn deletion_ranking<'a, I>(miscues: I, top: usize) -> Vec<(String, usize)>
where
    I: IntoIterator<Item = &'a Miscue>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for m in miscues {
        if m.kind == MiscueKind::Del {
            if let Some(r) = &m.ref_token {
                *counts.entry(r.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().map(|(w, c)| (w.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top);
    ranked
}

/// Reads an entity lexicon: one token per line, `#` comments allowed.
pub fn parse_lexicon(text: &str, normalizer: &crate::textnorm::Normalizer) -> BTreeSet<String> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| normalizer.normalize(l).into_inner())
        .collect()
}

pub fn render_analysis(table: &FrequencyTable, deletions: &[(String, usize)], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = format!("| Substitution type (count >= {}) | Count | % |\n|---|---:|---:|\n", table.min_count);
            for row in &table.rows {
                out.push_str(&format!(
                    "| {} | {} | {} |\n",
                    row.category,
                    row.count,
                    crate::scoring::wer_percent(table.share(row.category))
                ));
            }
            out.push_str(&format!("| Total | {} | {} |\n", table.total, if table.total > 0 { "100.0" } else { "0.0" }));
            out.push_str("\n| Deleted word | Count |\n|---|---:|\n");
            for (word, count) in deletions {
                out.push_str(&format!("| {word} | {count} |\n"));
            }
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["section", "item", "count", "percent"]).expect("in-memory write");
            for row in &table.rows {
                let pct = crate::scoring::wer_percent(table.share(row.category));
                w.write_record(["substitution", row.category.label(), &row.count.to_string(), &pct])
                    .expect("in-memory write");
            }
            for (word, count) in deletions {
                w.write_record(["deletion", word, &count.to_string(), ""]).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
    }
}
