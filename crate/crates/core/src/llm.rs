//! LLM refinement prompts and response parsing.
//!
//! Two configurations exist. In hypothesis mode the model sees the read text
//! and both raw hypotheses and answers with a refined transcript in a fenced
//! block. In alignment mode it sees the Whisper and CTC alignments against
//! the read text as `REF\tHYP\tOP` tables and answers with a table for its
//! refined hypothesis, from which the HYP column is projected.
//!
//! Prompt wording lives in versioned template files under `templates/`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::{align, parse_table_rows, Alignment, Weights};
use crate::backends::{count_tokens, Hypothesis, HypothesisSource};
use crate::error::{Error, Result};
use crate::textnorm::{Normalizer, TokenSeq};

pub const TEMPLATE_VERSION: &str = "v1";

const HYPOTHESIS_TEMPLATE: &str = include_str!("../templates/v1/hypothesis.txt");
const ALIGNMENT_TEMPLATE: &str = include_str!("../templates/v1/alignment.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    #[serde(alias = "hypothesis")]
    HypothesisMode,
    #[serde(alias = "alignment")]
    AlignmentHypothesisMode,
}

impl FromStr for LlmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hypothesis" | "hypothesis_mode" => Ok(LlmMode::HypothesisMode),
            "alignment" | "alignment_hypothesis_mode" => Ok(LlmMode::AlignmentHypothesisMode),
            other => Err(Error::Config(format!("unknown LLM mode `{other}`"))),
        }
    }
}

impl fmt::Display for LlmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LlmMode::HypothesisMode => "hypothesis",
            LlmMode::AlignmentHypothesisMode => "alignment",
        })
    }
}

/// A reading-mistake example: what was said, and the text that was read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MistakeExample {
    pub wrong: String,
    pub context: String,
}

impl MistakeExample {
    pub fn new(wrong: impl Into<String>, context: impl Into<String>) -> Self {
        MistakeExample {
            wrong: wrong.into(),
            context: context.into(),
        }
    }
}

/// Built-in examples: fragment, repetition, near substitution, short-word
/// insertion, deletion.
pub fn default_mistake_examples() -> Vec<MistakeExample> {
    vec![
        MistakeExample::new("h het is zondag", "het is zondag"),
        MistakeExample::new("de de kat slaapt", "de kat slaapt"),
        MistakeExample::new("de boot staat in de tuin", "de boom staat in de tuin"),
        MistakeExample::new("ze liep en naar huis", "ze liep naar huis"),
        MistakeExample::new("ik zie de hond", "ik zie de grote hond"),
    ]
}

/// Reads examples from a file with one `spoken<TAB>read text` pair per line.
/// Blank lines and lines starting with `#` are ignored.
pub fn load_mistake_examples(path: &Path) -> Result<Vec<MistakeExample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (wrong, context) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: "expected `spoken<TAB>read text`".into(),
        })?;
        out.push(MistakeExample::new(wrong.trim(), context.trim()));
    }
    Ok(out)
}

/// Prompt templates, one per mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    hypothesis: String,
    alignment: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            hypothesis: HYPOTHESIS_TEMPLATE.to_string(),
            alignment: ALIGNMENT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn new(hypothesis: String, alignment: String) -> Result<Self> {
        check_template(&hypothesis, LlmMode::HypothesisMode)?;
        check_template(&alignment, LlmMode::AlignmentHypothesisMode)?;
        Ok(PromptTemplates { hypothesis, alignment })
    }

    /// Loads `hypothesis.txt` and `alignment.txt` from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        Self::new(read("hypothesis.txt")?, read("alignment.txt")?)
    }

    pub fn for_mode(&self, mode: LlmMode) -> &str {
        match mode {
            LlmMode::HypothesisMode => &self.hypothesis,
            LlmMode::AlignmentHypothesisMode => &self.alignment,
        }
    }
}

fn placeholders_for(mode: LlmMode) -> [&'static str; 4] {
    match mode {
        LlmMode::HypothesisMode => ["examples", "read_text", "whisper_hypothesis", "ctc_hypothesis"],
        LlmMode::AlignmentHypothesisMode => ["examples", "read_text", "whisper_alignment", "ctc_alignment"],
    }
}

fn template_names(template: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                names.push(&after[..end]);
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    names
}

fn check_template(template: &str, mode: LlmMode) -> Result<()> {
    let names = template_names(template);
    let allowed = placeholders_for(mode);
    if let Some(unknown) = names.iter().find(|n| !allowed.contains(n)) {
        return Err(Error::Template(format!("{mode} template: unknown placeholder `{unknown}`")));
    }
    for want in allowed {
        let count = names.iter().filter(|n| **n == want).count();
        if count != 1 {
            return Err(Error::Template(format!(
                "{mode} template: placeholder `{want}` must appear exactly once (found {count})"
            )));
        }
    }
    Ok(())
}

/// Substitutes placeholders. A placeholder alone on its line with an empty
/// value removes that line and the blank line after it.
fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut lines = template.split_inclusive('\n').peekable();
    while let Some(line) = lines.next() {
        let body = line.trim_end_matches(['\n', '\r']);
        if let Some(name) = body.strip_prefix("{{").and_then(|s| s.strip_suffix("}}")) {
            if let Some((_, value)) = values.iter().find(|(k, _)| *k == name) {
                if value.is_empty() {
                    if lines.peek().is_some_and(|next| next.trim().is_empty()) {
                        lines.next();
                    }
                    continue;
                }
            }
        }
        let mut rendered = line.to_string();
        for (name, value) in values {
            rendered = rendered.replace(&format!("{{{{{name}}}}}"), value);
        }
        out.push_str(&rendered);
    }
    out
}

/// Everything the refinement prompt is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmTaskInput {
    pub read_text: TokenSeq,
    pub whisper_hyp: Hypothesis,
    pub ctc_hyp: Hypothesis,
    pub mode: LlmMode,
    pub mistake_examples: Vec<MistakeExample>,
    /// `(read vs Whisper, read vs CTC)`; required in alignment mode only.
    pub alignments: Option<(Alignment, Alignment)>,
}

impl LlmTaskInput {
    /// Builds an input for `mode`, computing alignments when the mode needs
    /// them.
    pub fn new(
        read_text: TokenSeq,
        whisper_hyp: Hypothesis,
        ctc_hyp: Hypothesis,
        mode: LlmMode,
        mistake_examples: Vec<MistakeExample>,
        weights: &Weights,
    ) -> Self {
        let alignments = (mode == LlmMode::AlignmentHypothesisMode).then(|| {
            (
                align(&read_text, &whisper_hyp.tokens, weights),
                align(&read_text, &ctc_hyp.tokens, weights),
            )
        });
        LlmTaskInput {
            read_text,
            whisper_hyp,
            ctc_hyp,
            mode,
            mistake_examples,
            alignments,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.mode, &self.alignments) {
            (LlmMode::AlignmentHypothesisMode, None) => {
                Err(Error::Config("alignment mode needs both alignments".into()))
            }
            (LlmMode::HypothesisMode, Some(_)) => {
                Err(Error::Config("hypothesis mode takes no alignments".into()))
            }
            (LlmMode::AlignmentHypothesisMode, Some((w, c)))
                if w.reference != self.read_text || c.reference != self.read_text =>
            {
                Err(Error::Config("alignments must be against the read text".into()))
            }
            _ => Ok(()),
        }
    }

    /// Splits the task into pieces of at most `window` read-text words,
    /// cutting both hypotheses along their alignments to the read text.
    pub fn split(&self, window: usize, weights: &Weights) -> Vec<LlmTaskInput> {
        let (w_align, c_align) = match &self.alignments {
            Some(pair) => pair.clone(),
            None => (
                align(&self.read_text, &self.whisper_hyp.tokens, weights),
                align(&self.read_text, &self.ctc_hyp.tokens, weights),
            ),
        };
        let w_parts = w_align.split_by_reference(window);
        let c_parts = c_align.split_by_reference(window);
        w_parts
            .into_iter()
            .zip(c_parts)
            .map(|(w, c)| {
                let mut whisper_hyp = self.whisper_hyp.clone();
                whisper_hyp.tokens = w.hypothesis.clone();
                let mut ctc_hyp = self.ctc_hyp.clone();
                ctc_hyp.tokens = c.hypothesis.clone();
                LlmTaskInput {
                    read_text: w.reference.clone(),
                    whisper_hyp,
                    ctc_hyp,
                    mode: self.mode,
                    mistake_examples: self.mistake_examples.clone(),
                    alignments: (self.mode == LlmMode::AlignmentHypothesisMode).then_some((w, c)),
                }
            })
            .collect()
    }
}

/// Local check of prompt size against a model context window, counted in
/// whitespace tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextBudget {
    pub limit: usize,
    pub reserved_for_completion: usize,
}

fn render_examples(examples: &[MistakeExample]) -> String {
    if examples.is_empty() {
        return String::new();
    }
    let mut out = String::from("Examples of common reading mistakes by children:\n");
    for ex in examples {
        out.push_str(&format!("- read \"{}\" as \"{}\"\n", ex.context, ex.wrong));
    }
    out.pop();
    out
}

/// Assembles the refinement prompt: instructions, mistake examples, read
/// text, then the hypotheses or alignments, then the output contract.
pub fn build_llm_prompt(
    input: &LlmTaskInput,
    templates: &PromptTemplates,
    budget: Option<ContextBudget>,
) -> Result<String> {
    input.validate()?;
    let examples = render_examples(&input.mistake_examples);
    let read_text = input.read_text.join();
    let prompt = match (&input.mode, &input.alignments) {
        (LlmMode::AlignmentHypothesisMode, Some((whisper, ctc))) => {
            let w = whisper.to_table();
            let c = ctc.to_table();
            render(
                templates.for_mode(input.mode),
                &[
                    ("examples", &examples),
                    ("read_text", &read_text),
                    ("whisper_alignment", w.trim_end_matches('\n')),
                    ("ctc_alignment", c.trim_end_matches('\n')),
                ],
            )
        }
        _ => render(
            templates.for_mode(input.mode),
            &[
                ("examples", &examples),
                ("read_text", &read_text),
                ("whisper_hypothesis", &input.whisper_hyp.tokens.join()),
                ("ctc_hypothesis", &input.ctc_hyp.tokens.join()),
            ],
        ),
    };
    if let Some(budget) = budget {
        let prompt_tokens = count_tokens(&prompt);
        if prompt_tokens + budget.reserved_for_completion > budget.limit {
            return Err(Error::ContextOverflow {
                prompt_tokens,
                max_tokens: budget.reserved_for_completion,
                limit: budget.limit,
            });
        }
    }
    Ok(prompt)
}

/// Contents of the first fenced block, if any.
pub fn extract_fenced_block(response: &str) -> Option<String> {
    let mut inside = false;
    let mut body = String::new();
    for line in response.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") {
            if inside {
                return Some(body);
            }
            inside = true;
            continue;
        }
        if inside {
            body.push_str(line);
            body.push('\n');
        }
    }
    None
}

/// Recovers the refined hypothesis from an LLM response.
///
/// Alignment responses may be fenced or bare; their REF column must equal
/// the read text in order, otherwise [`Error::RefMismatch`] is returned.
pub fn parse_llm_response(
    mode: LlmMode,
    response: &str,
    read_text: &TokenSeq,
    record_id: &str,
    normalizer: &Normalizer,
) -> Result<Hypothesis> {
    let tokens = match mode {
        LlmMode::HypothesisMode => {
            let block = extract_fenced_block(response).ok_or(Error::NoFencedBlock)?;
            normalizer.normalize(&block)
        }
        LlmMode::AlignmentHypothesisMode => {
            let table = extract_fenced_block(response).unwrap_or_else(|| response.to_string());
            let rows = parse_table_rows(&table)?;
            let mut reference = TokenSeq::new();
            let mut hypothesis = TokenSeq::new();
            for row in rows {
                if let Some(r) = &row.reference {
                    reference.extend_from(&normalizer.normalize(r));
                }
                if let Some(h) = &row.hypothesis {
                    hypothesis.extend_from(&normalizer.normalize(h));
                }
            }
            if reference != *read_text {
                return Err(Error::RefMismatch);
            }
            hypothesis
        }
    };
    Ok(Hypothesis::new(record_id, tokens, HypothesisSource::Llm))
}
