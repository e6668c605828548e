//! Rule-based reading-mistake generation for recognizer prompts.
//!
//! Mistakes are only ever inserted *before* their target word, so the source
//! text stays a subsequence of the output. `"het is zondag"` can become
//! `"h het it is zon zondag"`: a letter fragment, a near substitution and a
//! partial repetition.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ratio::Rational;
use crate::textnorm::{normalize, TokenSeq};

/// Default prompt budget in whitespace tokens.
pub const DEFAULT_TOKEN_BUDGET: usize = 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MistakeKind {
    LetterFragment,
    PartialRepetition,
    WholeRepetition,
    NearSubstitution,
}

impl MistakeKind {
    pub const ALL: [MistakeKind; 4] = [
        MistakeKind::LetterFragment,
        MistakeKind::PartialRepetition,
        MistakeKind::WholeRepetition,
        MistakeKind::NearSubstitution,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    #[serde(alias = "read")]
    ReadText,
    #[serde(alias = "irrelevant")]
    IrrelevantText,
}

/// How to build a recognizer prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub source: PromptSource,
    /// Expected mistakes per word: `0.1` is one per ten words, `3` is three
    /// per word.
    pub rate: Rational,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub token_budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_TOKEN_BUDGET
}

impl Default for PromptSpec {
    /// Irrelevant text with three mistakes per word.
    fn default() -> Self {
        PromptSpec {
            source: PromptSource::IrrelevantText,
            rate: Rational::from_integer(3),
            seed: 0,
            token_budget: DEFAULT_TOKEN_BUDGET,
        }
    }
}

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        if self.token_budget == 0 {
            return Err(Error::Config("prompt token budget must be at least 1".into()));
        }
        Ok(())
    }

    /// The same spec with the seed replaced by the per-record seed.
    pub fn for_record(&self, record_id: &str) -> PromptSpec {
        PromptSpec {
            seed: record_seed(self.seed, record_id),
            ..self.clone()
        }
    }
}

/// Derives a per-record seed so that record order and worker scheduling
/// cannot change generated prompts.
pub fn record_seed(global_seed: u64, record_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update(record_id.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// One generated mistake. `applied` differs from `requested` when the word
/// was too short for the requested kind and a whole repetition was used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedMistake {
    pub tokens: TokenSeq,
    pub requested: MistakeKind,
    pub applied: MistakeKind,
}

impl GeneratedMistake {
    pub fn degenerated(&self) -> bool {
        self.requested != self.applied
    }
}

/// Generates the tokens to insert before `word`.
pub fn make_mistake<R: Rng + ?Sized>(word: &str, kind: MistakeKind, rng: &mut R) -> GeneratedMistake {
    let chars: Vec<char> = word.chars().collect();
    let produced = match kind {
        MistakeKind::LetterFragment if chars.len() >= 2 => {
            let max = 2.min(chars.len() - 1);
            let len = rng.random_range(1..=max);
            single_token(&chars[..len])
        }
        MistakeKind::PartialRepetition if chars.len() >= 2 => {
            single_token(&chars[..chars.len().div_ceil(2)])
        }
        MistakeKind::NearSubstitution => near_substitution(&chars, rng),
        _ => None,
    };
    match produced {
        Some(token) if kind != MistakeKind::WholeRepetition => GeneratedMistake {
            tokens: TokenSeq::from_normalized([token]),
            requested: kind,
            applied: kind,
        },
        _ => GeneratedMistake {
            tokens: TokenSeq::from_normalized([word]),
            requested: kind,
            applied: MistakeKind::WholeRepetition,
        },
    }
}

fn single_token(chars: &[char]) -> Option<String> {
    let s: String = chars.iter().collect();
    let mut seq = normalize(&s).into_inner();
    (seq.len() == 1).then(|| seq.remove(0))
}

fn neighbours(c: char) -> Vec<char> {
    let (lo, hi) = if c.is_ascii_lowercase() {
        ('a', 'z')
    } else if c.is_ascii_digit() {
        ('0', '9')
    } else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(2);
    if c > lo {
        out.push((c as u8 - 1) as char);
    }
    if c < hi {
        out.push((c as u8 + 1) as char);
    }
    out
}

enum Edit {
    Replace(usize, char),
    Drop(usize),
}

/// Replaces one letter with an alphabet neighbour or drops one letter.
fn near_substitution<R: Rng + ?Sized>(chars: &[char], rng: &mut R) -> Option<String> {
    let mut edits = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        for n in neighbours(c) {
            edits.push(Edit::Replace(i, n));
        }
        if chars.len() >= 2 && c.is_alphanumeric() {
            edits.push(Edit::Drop(i));
        }
    }
    if edits.is_empty() {
        return None;
    }
    let mut out = chars.to_vec();
    match edits[rng.random_range(0..edits.len())] {
        Edit::Replace(i, c) => out[i] = c,
        Edit::Drop(i) => {
            out.remove(i);
        }
    }
    single_token(&out).filter(|t| t.chars().ne(chars.iter().copied()))
}

/// A mistake group inserted before the word at `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub target: usize,
    pub kind: MistakeKind,
    pub applied: MistakeKind,
    pub tokens: TokenSeq,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injected {
    pub tokens: TokenSeq,
    pub insertions: Vec<Insertion>,
}

/// Number of mistake groups for a text of `len` words: `round(rate * len)`.
pub fn mistake_count(rate: Rational, len: usize) -> usize {
    rate.mul_round(len as u64) as usize
}

/// Inserts `round(rate * |text|)` mistake groups before sampled words.
///
/// Each word first receives `floor(rate)` groups; the remaining groups go to
/// distinct words sampled without replacement. Kinds are uniform.
pub fn inject_mistakes(text: &TokenSeq, rate: Rational, seed: u64) -> Injected {
    let n = text.len();
    let total = mistake_count(rate, n);
    if n == 0 || total == 0 {
        return Injected {
            tokens: text.clone(),
            insertions: Vec::new(),
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = rate.floor_int() as usize;
    let extra = total - base * n;
    let mut per_word = vec![base; n];
    for i in index::sample(&mut rng, n, extra).into_iter() {
        per_word[i] += 1;
    }

    let mut tokens = TokenSeq::new();
    let mut insertions = Vec::with_capacity(total);
    for (target, word) in text.iter().enumerate() {
        for _ in 0..per_word[target] {
            let kind = MistakeKind::ALL[rng.random_range(0..MistakeKind::ALL.len())];
            let made = make_mistake(word, kind, &mut rng);
            tokens.extend_from(&made.tokens);
            insertions.push(Insertion {
                target,
                kind,
                applied: made.applied,
                tokens: made.tokens,
            });
        }
        tokens.push(word.clone());
    }
    Injected { tokens, insertions }
}

/// A recognizer prompt plus the metadata needed to audit it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub source: PromptSource,
    pub rate: Rational,
    pub seed: u64,
    pub token_count: usize,
    pub truncated: bool,
    pub insertions: Vec<Insertion>,
}

/// Selects the source text, injects mistakes, and keeps the first
/// `token_budget` whitespace tokens.
pub fn build_prompt(spec: &PromptSpec, read_text: &TokenSeq, irrelevant_text: &TokenSeq) -> Result<Prompt> {
    spec.validate()?;
    let source = match spec.source {
        PromptSource::ReadText => read_text,
        PromptSource::IrrelevantText => irrelevant_text,
    };
    if source.is_empty() {
        return Err(Error::Config(format!("prompt source {:?} is empty", spec.source)));
    }
    let injected = inject_mistakes(source, spec.rate, spec.seed);
    let truncated = injected.tokens.len() > spec.token_budget;
    let kept = &injected.tokens[..injected.tokens.len().min(spec.token_budget)];
    Ok(Prompt {
        text: kept.join(" "),
        source: spec.source,
        rate: spec.rate,
        seed: spec.seed,
        token_count: kept.len(),
        truncated,
        insertions: injected.insertions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Seed for which `het is zondag` at rate 1 yields `h het it is zon zondag`.
    const WORKED_EXAMPLE_SEED: u64 = 1050;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_normalized(s.split_whitespace())
    }

    fn rate(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn mistake_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = make_mistake("zondag", MistakeKind::PartialRepetition, &mut rng);
        assert_eq!(m.tokens, seq("zon"));
        let m = make_mistake("is", MistakeKind::WholeRepetition, &mut rng);
        assert_eq!(m.tokens, seq("is"));
        for _ in 0..20 {
            let m = make_mistake("het", MistakeKind::LetterFragment, &mut rng);
            assert!(m.tokens == seq("h") || m.tokens == seq("he"));
        }
    }

    #[test]
    fn short_words_degenerate_to_repetition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [MistakeKind::LetterFragment, MistakeKind::PartialRepetition] {
            let m = make_mistake("u", kind, &mut rng);
            assert_eq!(m.tokens, seq("u"));
            assert!(m.degenerated());
            assert_eq!(m.applied, MistakeKind::WholeRepetition);
        }
        let m = make_mistake("é", MistakeKind::NearSubstitution, &mut rng);
        assert!(m.degenerated());
        let m = make_mistake("a", MistakeKind::NearSubstitution, &mut rng);
        assert_eq!(m.tokens, seq("b"));
    }

    #[test]
    fn worked_example() {
        let out = inject_mistakes(&seq("het is zondag"), Rational::ONE, WORKED_EXAMPLE_SEED);
        assert_eq!(out.tokens, seq("h het it is zon zondag"));
        let kinds: Vec<MistakeKind> = out.insertions.iter().map(|i| i.kind).collect();
        assert_eq!(
            kinds,
            [
                MistakeKind::LetterFragment,
                MistakeKind::NearSubstitution,
                MistakeKind::PartialRepetition
            ]
        );
    }

    #[test]
    fn zero_rate_is_identity() {
        let text = seq("de kat zit op de mat");
        let out = inject_mistakes(&text, Rational::ZERO, 9);
        assert_eq!(out.tokens, text);
        assert!(out.insertions.is_empty());
        // 0.1 * 4 rounds to zero as well.
        assert_eq!(inject_mistakes(&seq("a b c d"), rate("0.1"), 9).tokens, seq("a b c d"));
    }

    #[test]
    fn ten_percent_of_ten_words_is_one_group() {
        let text = seq("een twee drie vier vijf zes zeven acht negen tien");
        let out = inject_mistakes(&text, rate("0.1"), 5);
        assert_eq!(out.insertions.len(), 1);
    }

    #[test]
    fn prompt_truncates_from_the_end() {
        let read = seq("het is zondag");
        let mut spec = PromptSpec {
            source: PromptSource::ReadText,
            rate: Rational::ONE,
            seed: WORKED_EXAMPLE_SEED,
            token_budget: 10_000,
        };
        let p = build_prompt(&spec, &read, &TokenSeq::new()).unwrap();
        assert_eq!(p.text, "h het it is zon zondag");
        assert!(!p.truncated);
        spec.token_budget = 4;
        let p = build_prompt(&spec, &read, &TokenSeq::new()).unwrap();
        assert_eq!(p.text, "h het it is");
        assert_eq!(p.token_count, 4);
        assert!(p.truncated);
    }

    #[test]
    fn three_hundred_percent_on_irrelevant_text() {
        let irrelevant: TokenSeq = (0..20).map(|i| format!("woord{i}")).collect();
        let spec = PromptSpec {
            source: PromptSource::IrrelevantText,
            rate: rate("3"),
            seed: 11,
            token_budget: 10_000,
        };
        let p = build_prompt(&spec, &seq("niet gebruikt"), &irrelevant).unwrap();
        assert_eq!(p.insertions.len(), 60);
        assert_eq!(p.token_count, 80);
        assert!(p.insertions.iter().all(|i| i.tokens.len() == 1));
    }

    #[test]
    fn empty_source_and_zero_budget_are_rejected() {
        let spec = PromptSpec::default();
        assert!(build_prompt(&spec, &seq("a"), &TokenSeq::new()).is_err());
        let spec = PromptSpec { token_budget: 0, ..PromptSpec::default() };
        assert!(build_prompt(&spec, &seq("a"), &seq("b")).is_err());
    }

    #[test]
    fn record_seeds_differ_by_record() {
        assert_ne!(record_seed(1, "r1"), record_seed(1, "r2"));
        assert_ne!(record_seed(1, "r1"), record_seed(2, "r1"));
        assert_eq!(record_seed(1, "r1"), record_seed(1, "r1"));
    }

    fn is_subsequence(needle: &[String], hay: &[String]) -> bool {
        let mut it = hay.iter();
        needle.iter().all(|n| it.any(|h| h == n))
    }

    fn text_strategy() -> impl Strategy<Value = TokenSeq> {
        proptest::collection::vec("[a-z]{1,9}", 1..40).prop_map(TokenSeq::from_normalized)
    }

    proptest! {
        #[test]
        fn count_law_and_subsequence(text in text_strategy(), seed in any::<u64>(),
                                     r in prop_oneof![Just("0.1"), Just("0.5"), Just("1"), Just("3")]) {
            let rate = rate(r);
            let out = inject_mistakes(&text, rate, seed);
            prop_assert_eq!(out.insertions.len(), rate.mul_round(text.len() as u64) as usize);
            prop_assert!(is_subsequence(&text, &out.tokens));
            prop_assert_eq!(
                out.tokens.len(),
                text.len() + out.insertions.iter().map(|i| i.tokens.len()).sum::<usize>()
            );
            prop_assert_eq!(inject_mistakes(&text, rate, seed), out);
        }

        #[test]
        fn groups_satisfy_their_kind(text in text_strategy(), seed in any::<u64>()) {
            let out = inject_mistakes(&text, rate("3"), seed);
            for ins in &out.insertions {
                let word = &text[ins.target];
                let got = ins.tokens.join();
                let wc: Vec<char> = word.chars().collect();
                match ins.applied {
                    MistakeKind::LetterFragment => {
                        prop_assert!(got.chars().count() <= 2 && word.starts_with(&got) && got != *word);
                    }
                    MistakeKind::PartialRepetition => {
                        let want: String = wc[..wc.len().div_ceil(2)].iter().collect();
                        prop_assert_eq!(got, want);
                    }
                    MistakeKind::WholeRepetition => prop_assert_eq!(&got, word),
                    MistakeKind::NearSubstitution => {
                        let gc: Vec<char> = got.chars().collect();
                        if gc.len() == wc.len() {
                            let diffs: Vec<usize> = (0..wc.len()).filter(|&i| wc[i] != gc[i]).collect();
                            prop_assert_eq!(diffs.len(), 1);
                            let (a, b) = (wc[diffs[0]] as i32, gc[diffs[0]] as i32);
                            prop_assert_eq!((a - b).abs(), 1);
                        } else {
                            prop_assert_eq!(gc.len() + 1, wc.len());
                            let one_dropped = (0..wc.len()).any(|i| {
                                let mut w = wc.clone();
                                w.remove(i);
                                w == gc
                            });
                            prop_assert!(one_dropped);
                        }
                    }
                }
            }
        }
    }
}
