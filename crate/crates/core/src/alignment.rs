//! Word-level forced alignment, WER, and miscue extraction.
//!
//! Alignment is a weighted edit-distance DP with sclite-style default weights
//! (substitution 4, insertion 3, deletion 3). Ties in the backtrace, which
//! runs from the end of both sequences, prefer the diagonal move
//! (correct/substitution), then deletion, then insertion. One consequence is
//! that a repeated word aligns its *last* copy to the reference, so the
//! repetition shows up as an insertion before the target word.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::TokenSeq;

/// Placeholder for the absent side of an insertion or deletion.
pub const GAP: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EditOp {
    Correct,
    Substitution,
    Insertion,
    Deletion,
}

impl EditOp {
    pub fn letter(self) -> char {
        match self {
            EditOp::Correct => 'C',
            EditOp::Substitution => 'S',
            EditOp::Insertion => 'I',
            EditOp::Deletion => 'D',
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        match s {
            "C" => Some(EditOp::Correct),
            "S" => Some(EditOp::Substitution),
            "I" => Some(EditOp::Insertion),
            "D" => Some(EditOp::Deletion),
            _ => None,
        }
    }
}

/// One step of an alignment. Insertions record the reference position they
/// precede (`gap`), with `gap == reference.len()` meaning the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AlignStep {
    Correct { ref_index: usize, hyp_index: usize },
    Substitution { ref_index: usize, hyp_index: usize },
    Insertion { gap: usize, hyp_index: usize },
    Deletion { ref_index: usize },
}

impl AlignStep {
    pub fn op(&self) -> EditOp {
        match self {
            AlignStep::Correct { .. } => EditOp::Correct,
            AlignStep::Substitution { .. } => EditOp::Substitution,
            AlignStep::Insertion { .. } => EditOp::Insertion,
            AlignStep::Deletion { .. } => EditOp::Deletion,
        }
    }

    pub fn ref_index(&self) -> Option<usize> {
        match *self {
            AlignStep::Correct { ref_index, .. }
            | AlignStep::Substitution { ref_index, .. }
            | AlignStep::Deletion { ref_index } => Some(ref_index),
            AlignStep::Insertion { .. } => None,
        }
    }

    pub fn hyp_index(&self) -> Option<usize> {
        match *self {
            AlignStep::Correct { hyp_index, .. }
            | AlignStep::Substitution { hyp_index, .. }
            | AlignStep::Insertion { hyp_index, .. } => Some(hyp_index),
            AlignStep::Deletion { .. } => None,
        }
    }
}

/// Per-operation costs. Correct steps cost nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Weights {
    pub sub: u32,
    pub ins: u32,
    pub del: u32,
}

impl Weights {
    pub fn new(sub: u32, ins: u32, del: u32) -> Result<Self> {
        if sub == 0 || ins == 0 || del == 0 {
            return Err(Error::Config(format!(
                "alignment weights must be positive (sub={sub}, ins={ins}, del={del})"
            )));
        }
        Ok(Weights { sub, ins, del })
    }

    pub fn cost_of(&self, op: EditOp) -> u64 {
        match op {
            EditOp::Correct => 0,
            EditOp::Substitution => self.sub as u64,
            EditOp::Insertion => self.ins as u64,
            EditOp::Deletion => self.del as u64,
        }
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            sub: 4,
            ins: 3,
            del: 3,
        }
    }
}

/// Minimum-cost alignment steps between two arbitrary sequences.
pub fn align_slices<T: PartialEq>(reference: &[T], hypothesis: &[T], weights: &Weights) -> (Vec<AlignStep>, u64) {
    let n = reference.len();
    let m = hypothesis.len();
    let width = m + 1;
    let (sub, ins, del) = (weights.sub as u64, weights.ins as u64, weights.del as u64);

    let mut table = vec![0u64; (n + 1) * width];
    for j in 1..=m {
        table[j] = table[j - 1] + ins;
    }
    for i in 1..=n {
        table[i * width] = table[(i - 1) * width] + del;
        for j in 1..=m {
            let diag = table[(i - 1) * width + j - 1]
                + if reference[i - 1] == hypothesis[j - 1] { 0 } else { sub };
            let up = table[(i - 1) * width + j] + del;
            let left = table[i * width + j - 1] + ins;
            table[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = table[i * width + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = table[(i - 1) * width + j - 1] + if same { 0 } else { sub };
            if diag == here {
                steps.push(if same {
                    AlignStep::Correct { ref_index: i - 1, hyp_index: j - 1 }
                } else {
                    AlignStep::Substitution { ref_index: i - 1, hyp_index: j - 1 }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && table[(i - 1) * width + j] + del == here {
            steps.push(AlignStep::Deletion { ref_index: i - 1 });
            i -= 1;
            continue;
        }
        steps.push(AlignStep::Insertion { gap: i, hyp_index: j - 1 });
        j -= 1;
    }
    steps.reverse();
    (steps, table[n * width + m])
}

/// Counts of steps by operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub correct: usize,
    pub sub: usize,
    pub ins: usize,
    pub del: usize,
}

impl OpCounts {
    pub fn errors(&self) -> usize {
        self.sub + self.ins + self.del
    }
}

/// A word alignment between a reference and a hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub reference: TokenSeq,
    pub hypothesis: TokenSeq,
    pub steps: Vec<AlignStep>,
    pub cost: u64,
}

/// Aligns `hypothesis` against `reference` at minimum cost under `weights`.
pub fn align(reference: &TokenSeq, hypothesis: &TokenSeq, weights: &Weights) -> Alignment {
    let (steps, cost) = align_slices(reference.tokens(), hypothesis.tokens(), weights);
    Alignment {
        reference: reference.clone(),
        hypothesis: hypothesis.clone(),
        steps,
        cost,
    }
}

/// `(S + D + I) / |reference|`.
pub fn wer(alignment: &Alignment) -> Result<f64> {
    alignment.wer()
}

impl Alignment {
    pub fn counts(&self) -> OpCounts {
        let mut c = OpCounts::default();
        for step in &self.steps {
            match step.op() {
                EditOp::Correct => c.correct += 1,
                EditOp::Substitution => c.sub += 1,
                EditOp::Insertion => c.ins += 1,
                EditOp::Deletion => c.del += 1,
            }
        }
        c
    }

    pub fn wer(&self) -> Result<f64> {
        if self.reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        Ok(self.counts().errors() as f64 / self.reference.len() as f64)
    }

    /// Recomputes the cost of the steps under `weights`.
    pub fn step_cost(&self, weights: &Weights) -> u64 {
        self.steps.iter().map(|s| weights.cost_of(s.op())).sum()
    }

    /// One `REF\tHYP\tOP` line per step, `*` marking the absent side.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            let r = step.ref_index().map_or(GAP, |i| self.reference[i].as_str());
            let h = step.hyp_index().map_or(GAP, |i| self.hypothesis[i].as_str());
            out.push_str(r);
            out.push('\t');
            out.push_str(h);
            out.push('\t');
            out.push(step.op().letter());
            out.push('\n');
        }
        out
    }

    /// Parses a table produced by [`Alignment::to_table`], checking that each
    /// row's operation is consistent with its tokens.
    pub fn from_table(text: &str, weights: &Weights) -> Result<Self> {
        let rows = parse_table_rows(text)?;
        let mut reference = TokenSeq::new();
        let mut hypothesis = TokenSeq::new();
        let mut steps = Vec::with_capacity(rows.len());
        for row in rows {
            let bad = |reason: &str| Error::AlignmentTable {
                line: row.line,
                reason: reason.to_string(),
            };
            let step = match (row.op, &row.reference, &row.hypothesis) {
                (EditOp::Correct, Some(r), Some(h)) if r == h => AlignStep::Correct {
                    ref_index: reference.len(),
                    hyp_index: hypothesis.len(),
                },
                (EditOp::Substitution, Some(r), Some(h)) if r != h => AlignStep::Substitution {
                    ref_index: reference.len(),
                    hyp_index: hypothesis.len(),
                },
                (EditOp::Insertion, None, Some(_)) => AlignStep::Insertion {
                    gap: reference.len(),
                    hyp_index: hypothesis.len(),
                },
                (EditOp::Deletion, Some(_), None) => AlignStep::Deletion {
                    ref_index: reference.len(),
                },
                _ => return Err(bad("operation inconsistent with tokens")),
            };
            if let Some(r) = row.reference {
                reference.push(r);
            }
            if let Some(h) = row.hypothesis {
                hypothesis.push(h);
            }
            steps.push(step);
        }
        let mut alignment = Alignment {
            reference,
            hypothesis,
            steps,
            cost: 0,
        };
        alignment.cost = alignment.step_cost(weights);
        Ok(alignment)
    }

    /// Splits the alignment into consecutive pieces covering at most
    /// `window` reference words each. Insertions travel with the reference
    /// word they precede; trailing insertions join the last piece.
    pub fn split_by_reference(&self, window: usize) -> Vec<Alignment> {
        let window = window.max(1);
        if self.reference.len() <= window {
            return vec![self.clone()];
        }
        let pieces = self.reference.len().div_ceil(window);
        let mut buckets: Vec<Vec<AlignStep>> = vec![Vec::new(); pieces];
        for step in &self.steps {
            let anchor = match *step {
                AlignStep::Insertion { gap, .. } => gap.min(self.reference.len() - 1),
                other => other.ref_index().unwrap_or(0),
            };
            buckets[anchor / window].push(*step);
        }
        buckets
            .into_iter()
            .map(|steps| {
                let mut reference = TokenSeq::new();
                let mut hypothesis = TokenSeq::new();
                let mut local = Vec::with_capacity(steps.len());
                for step in steps {
                    let ri = reference.len();
                    let hi = hypothesis.len();
                    if let Some(r) = step.ref_index() {
                        reference.push(self.reference[r].clone());
                    }
                    if let Some(h) = step.hyp_index() {
                        hypothesis.push(self.hypothesis[h].clone());
                    }
                    local.push(match step {
                        AlignStep::Correct { .. } => AlignStep::Correct { ref_index: ri, hyp_index: hi },
                        AlignStep::Substitution { .. } => {
                            AlignStep::Substitution { ref_index: ri, hyp_index: hi }
                        }
                        AlignStep::Insertion { .. } => AlignStep::Insertion { gap: ri, hyp_index: hi },
                        AlignStep::Deletion { .. } => AlignStep::Deletion { ref_index: ri },
                    });
                }
                Alignment {
                    reference,
                    hypothesis,
                    steps: local,
                    cost: 0,
                }
            })
            .collect()
    }
}

/// A single parsed `REF\tHYP\tOP` row; `None` marks a `*` cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRow {
    pub line: usize,
    pub reference: Option<String>,
    pub hypothesis: Option<String>,
    pub op: EditOp,
}

/// Parses table rows without checking op/token consistency. Blank lines and
/// a leading `REF\tHYP\tOP` header are skipped.
pub fn parse_table_rows(text: &str) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::AlignmentTable {
                line,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let (r, h, op) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        if rows.is_empty() && r.eq_ignore_ascii_case("ref") && h.eq_ignore_ascii_case("hyp") {
            continue;
        }
        let op = EditOp::from_letter(op).ok_or_else(|| Error::AlignmentTable {
            line,
            reason: format!("unknown operation `{op}`"),
        })?;
        let cell = |s: &str| (!s.is_empty() && s != GAP).then(|| s.to_string());
        rows.push(TableRow {
            line,
            reference: cell(r),
            hypothesis: cell(h),
            op,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MiscueKind {
    #[serde(alias = "ins", alias = "I", alias = "insertion")]
    Ins,
    #[serde(alias = "sub", alias = "S", alias = "substitution")]
    Sub,
    #[serde(alias = "del", alias = "D", alias = "deletion")]
    Del,
}

impl MiscueKind {
    pub const ALL: [MiscueKind; 3] = [MiscueKind::Ins, MiscueKind::Sub, MiscueKind::Del];
}

impl fmt::Display for MiscueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MiscueKind::Ins => "Ins",
            MiscueKind::Sub => "Sub",
            MiscueKind::Del => "Del",
        })
    }
}

/// A reading mistake located against the read text. `position` is the
/// reference index for substitutions and deletions and the gap index for
/// insertions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Miscue {
    pub kind: MiscueKind,
    pub position: usize,
    #[serde(default, skip_serializing_if = "TokenSeq::is_empty")]
    pub hyp_tokens: TokenSeq,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_token: Option<String>,
}

impl Miscue {
    pub fn ins(position: usize, hyp_tokens: TokenSeq) -> Self {
        Miscue { kind: MiscueKind::Ins, position, hyp_tokens, ref_token: None }
    }

    pub fn sub(position: usize, ref_token: impl Into<String>, hyp_tokens: TokenSeq) -> Self {
        Miscue {
            kind: MiscueKind::Sub,
            position,
            hyp_tokens,
            ref_token: Some(ref_token.into()),
        }
    }

    pub fn del(position: usize, ref_token: impl Into<String>) -> Self {
        Miscue {
            kind: MiscueKind::Del,
            position,
            hyp_tokens: TokenSeq::new(),
            ref_token: Some(ref_token.into()),
        }
    }

    /// Checks kind/field consistency against a reference of `ref_len` words.
    pub fn is_consistent(&self, ref_len: usize) -> bool {
        match self.kind {
            MiscueKind::Ins => self.position <= ref_len && !self.hyp_tokens.is_empty(),
            MiscueKind::Sub => self.position < ref_len && !self.hyp_tokens.is_empty(),
            MiscueKind::Del => self.position < ref_len && self.hyp_tokens.is_empty(),
        }
    }
}

/// Substitutions and deletions map one-to-one; each run of consecutive
/// insertions at the same gap becomes one insertion miscue.
pub fn extract_miscues(alignment: &Alignment) -> Vec<Miscue> {
    let mut out: Vec<Miscue> = Vec::new();
    let mut open_run = false;
    for step in &alignment.steps {
        match *step {
            AlignStep::Insertion { gap, hyp_index } => {
                let token = alignment.hypothesis[hyp_index].clone();
                match out.last_mut() {
                    Some(last) if open_run && last.position == gap => last.hyp_tokens.push(token),
                    _ => out.push(Miscue::ins(gap, TokenSeq::from_normalized([token]))),
                }
                open_run = true;
                continue;
            }
            AlignStep::Substitution { ref_index, hyp_index } => out.push(Miscue::sub(
                ref_index,
                alignment.reference[ref_index].clone(),
                TokenSeq::from_normalized([alignment.hypothesis[hyp_index].clone()]),
            )),
            AlignStep::Deletion { ref_index } => {
                out.push(Miscue::del(ref_index, alignment.reference[ref_index].clone()))
            }
            AlignStep::Correct { .. } => {}
        }
        open_run = false;
    }
    out
}

/// True-positive, false-positive and false-negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Match counts broken down by miscue kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub ins: Counts,
    pub sub: Counts,
    pub del: Counts,
}

impl KindCounts {
    pub fn get(&self, kind: MiscueKind) -> Counts {
        match kind {
            MiscueKind::Ins => self.ins,
            MiscueKind::Sub => self.sub,
            MiscueKind::Del => self.del,
        }
    }

    pub fn get_mut(&mut self, kind: MiscueKind) -> &mut Counts {
        match kind {
            MiscueKind::Ins => &mut self.ins,
            MiscueKind::Sub => &mut self.sub,
            MiscueKind::Del => &mut self.del,
        }
    }

    pub fn overall(&self) -> Counts {
        let mut total = self.ins;
        total.add(self.sub);
        total.add(self.del);
        total
    }

    pub fn add(&mut self, other: &KindCounts) {
        self.ins.add(other.ins);
        self.sub.add(other.sub);
        self.del.add(other.del);
    }
}

/// Exact label-and-position matching.
pub fn match_miscues(predicted: &[Miscue], gold: &[Miscue]) -> KindCounts {
    match_miscues_with_tolerance(predicted, gold, 0)
}

/// Greedy left-to-right matching: a prediction consumes the first unused
/// gold miscue of the same kind whose position is within `tolerance`.
pub fn match_miscues_with_tolerance(predicted: &[Miscue], gold: &[Miscue], tolerance: usize) -> KindCounts {
    let mut predicted: Vec<&Miscue> = predicted.iter().collect();
    predicted.sort_by_key(|m| m.position);
    let mut gold: Vec<&Miscue> = gold.iter().collect();
    gold.sort_by_key(|m| m.position);

    let mut used = vec![false; gold.len()];
    let mut counts = KindCounts::default();
    for p in predicted {
        let hit = gold.iter().enumerate().position(|(gi, g)| {
            !used[gi] && g.kind == p.kind && g.position.abs_diff(p.position) <= tolerance
        });
        match hit {
            Some(gi) => {
                used[gi] = true;
                counts.get_mut(p.kind).tp += 1;
            }
            None => counts.get_mut(p.kind).fp += 1,
        }
    }
    for (g, _) in gold.iter().zip(&used).filter(|(_, u)| !**u) {
        counts.get_mut(g.kind).fn_ += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_normalized(s.split_whitespace())
    }

    /// Exhaustive minimum over every monotone alignment path.
    fn brute_force_cost(r: &[String], h: &[String], w: &Weights) -> u64 {
        fn go(r: &[String], h: &[String], w: &Weights) -> u64 {
            if r.is_empty() {
                return h.len() as u64 * w.ins as u64;
            }
            if h.is_empty() {
                return r.len() as u64 * w.del as u64;
            }
            let diag = go(&r[1..], &h[1..], w) + if r[0] == h[0] { 0 } else { w.sub as u64 };
            let del = go(&r[1..], h, w) + w.del as u64;
            let ins = go(r, &h[1..], w) + w.ins as u64;
            diag.min(del).min(ins)
        }
        go(r, h, w)
    }

    #[test]
    fn swapping_sides_keeps_cost_but_not_counts() {
        // Two optimal paths of cost 15: 3I+2D one way round, 3S+1D the other.
        let (r, h) = (seq("a b b a"), seq("c c c a b"));
        let w = Weights::default();
        let (f, b) = (align(&r, &h, &w), align(&h, &r, &w));
        assert_eq!((f.cost, b.cost), (15, 15));
        assert_eq!((f.counts().sub, f.counts().ins, f.counts().del), (0, 3, 2));
        assert_eq!((b.counts().sub, b.counts().ins, b.counts().del), (3, 0, 1));
    }

    #[test]
    fn worked_example_is_three_insertions() {
        let a = align(&seq("het is zondag"), &seq("h het it is zon zondag"), &Weights::default());
        assert_eq!(a.cost, 9);
        let c = a.counts();
        assert_eq!((c.correct, c.ins, c.sub, c.del), (3, 3, 0, 0));
        let gaps: Vec<usize> = a
            .steps
            .iter()
            .filter_map(|s| match s {
                AlignStep::Insertion { gap, .. } => Some(*gap),
                _ => None,
            })
            .collect();
        assert_eq!(gaps, [0, 1, 2]);
        assert_eq!(a.wer().unwrap(), 1.0);
        assert_eq!(
            extract_miscues(&a),
            vec![
                Miscue::ins(0, seq("h")),
                Miscue::ins(1, seq("it")),
                Miscue::ins(2, seq("zon")),
            ]
        );
    }

    #[test]
    fn identity_and_empty_sides() {
        let x = seq("de kat zit");
        let a = align(&x, &x, &Weights::default());
        assert_eq!(a.cost, 0);
        assert!(a.steps.iter().all(|s| s.op() == EditOp::Correct));
        assert_eq!(a.wer().unwrap(), 0.0);
        assert!(extract_miscues(&a).is_empty());

        let a = align(&seq("a b"), &TokenSeq::new(), &Weights::default());
        assert_eq!(a.cost, 6);
        assert_eq!(a.counts().del, 2);
        assert_eq!(a.wer().unwrap(), 1.0);

        let a = align(&TokenSeq::new(), &seq("a"), &Weights::default());
        assert_eq!(a.steps, vec![AlignStep::Insertion { gap: 0, hyp_index: 0 }]);
        assert!(matches!(a.wer(), Err(Error::EmptyReference)));
    }

    #[test]
    fn wer_counts_every_error_kind() {
        let r = seq("a b c d e f g h i j");
        let h = seq("a b x d e f g h i");
        let a = align(&r, &h, &Weights::default());
        assert_eq!(a.counts().sub, 1);
        assert_eq!(a.counts().del, 1);
        assert!((a.wer().unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_substitution() {
        let a = align(&seq("de kat"), &seq("de rat"), &Weights::default());
        assert_eq!(extract_miscues(&a), vec![Miscue::sub(1, "kat", seq("rat"))]);
    }

    #[test]
    fn insertion_runs_merge_per_gap() {
        let a = align(&seq("de kat"), &seq("d de de kat k"), &Weights::default());
        assert_eq!(
            extract_miscues(&a),
            vec![Miscue::ins(0, seq("d de")), Miscue::ins(2, seq("k"))]
        );
    }

    #[test]
    fn repetition_aligns_last_copy() {
        let a = align(&seq("a"), &seq("a a"), &Weights::default());
        assert_eq!(
            a.steps,
            vec![
                AlignStep::Insertion { gap: 0, hyp_index: 0 },
                AlignStep::Correct { ref_index: 0, hyp_index: 1 },
            ]
        );
    }

    #[test]
    fn table_serialization() {
        let a = align(&seq("het is zondag"), &seq("h het zondag"), &Weights::default());
        let table = a.to_table();
        assert_eq!(table, "*\th\tI\nhet\thet\tC\nis\t*\tD\nzondag\tzondag\tC\n");
        let back = Alignment::from_table(&table, &Weights::default()).unwrap();
        assert_eq!(back, a);
        assert!(Alignment::from_table("a\tb\tC\n", &Weights::default()).is_err());
        assert!(Alignment::from_table("a\tb\n", &Weights::default()).is_err());
        assert!(matches!(
            parse_table_rows("a\ta\tX"),
            Err(Error::AlignmentTable { line: 1, .. })
        ));
    }

    #[test]
    fn weights_must_be_positive() {
        assert!(Weights::new(0, 3, 3).is_err());
        assert_eq!(Weights::new(4, 3, 3).unwrap(), Weights::default());
    }

    #[test]
    fn matching_examples() {
        let x = vec![Miscue::ins(1, seq("a")), Miscue::del(3, "b")];
        let c = match_miscues(&x, &x);
        assert_eq!(c.overall(), Counts { tp: 2, fp: 0, fn_: 0 });

        let c = match_miscues(&[Miscue::sub(3, "a", seq("b"))], &[Miscue::sub(4, "a", seq("b"))]);
        assert_eq!(c.overall(), Counts { tp: 0, fp: 1, fn_: 1 });

        let pred = [Miscue::ins(2, seq("x")), Miscue::del(5, "y")];
        let gold = [Miscue::ins(2, seq("z")), Miscue::sub(5, "y", seq("q"))];
        let c = match_miscues(&pred, &gold);
        assert_eq!(c.ins, Counts { tp: 1, fp: 0, fn_: 0 });
        assert_eq!(c.del, Counts { tp: 0, fp: 1, fn_: 0 });
        assert_eq!(c.sub, Counts { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(c.overall(), Counts { tp: 1, fp: 1, fn_: 1 });
    }

    #[test]
    fn tolerance_widens_position_match() {
        let pred = [Miscue::sub(3, "a", seq("b"))];
        let gold = [Miscue::sub(4, "a", seq("b"))];
        assert_eq!(match_miscues_with_tolerance(&pred, &gold, 1).sub.tp, 1);
    }

    #[test]
    fn split_by_reference_keeps_every_step() {
        let a = align(&seq("a b c d e"), &seq("x a b c y e z"), &Weights::default());
        let parts = a.split_by_reference(2);
        assert_eq!(parts.len(), 3);
        let refs: Vec<String> = parts.iter().flat_map(|p| p.reference.iter().cloned()).collect();
        let hyps: Vec<String> = parts.iter().flat_map(|p| p.hypothesis.iter().cloned()).collect();
        assert_eq!(refs, a.reference.tokens());
        assert_eq!(hyps, a.hypothesis.tokens());
        assert_eq!(parts[0].to_table(), "*\tx\tI\na\ta\tC\nb\tb\tC\n");
        assert_eq!(parts[2].to_table(), "e\te\tC\n*\tz\tI\n");
    }

    fn small_seq() -> impl Strategy<Value = TokenSeq> {
        proptest::collection::vec(prop_oneof!["a", "b", "c", "d"], 0..=8)
            .prop_map(TokenSeq::from_normalized)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn dp_matches_brute_force(r in small_seq(), h in small_seq(),
                                  sub in 1u32..6, ins in 1u32..6, del in 1u32..6) {
            let w = Weights { sub, ins, del };
            let a = align(&r, &h, &w);
            prop_assert_eq!(a.cost, brute_force_cost(&r, &h, &w));
            prop_assert_eq!(a.step_cost(&w), a.cost);
        }

        #[test]
        fn alignment_covers_each_index_once(r in small_seq(), h in small_seq()) {
            let a = align(&r, &h, &Weights::default());
            let refs: Vec<usize> = a.steps.iter().filter_map(AlignStep::ref_index).collect();
            let hyps: Vec<usize> = a.steps.iter().filter_map(AlignStep::hyp_index).collect();
            prop_assert_eq!(refs, (0..r.len()).collect::<Vec<_>>());
            prop_assert_eq!(hyps, (0..h.len()).collect::<Vec<_>>());
        }

        #[test]
        fn duality_swaps_insertions_and_deletions(r in small_seq(), h in small_seq(),
                                                  sub in 1u32..6, ins in 1u32..6, del in 1u32..6) {
            let forward = align(&r, &h, &Weights { sub, ins, del });
            let swapped = Weights { sub, ins: del, del: ins };
            let backward = align(&h, &r, &swapped);
            prop_assert_eq!(forward.cost, backward.cost);
            // The transpose of the forward alignment is optimal for the swapped
            // problem; counts only differ between equal-cost tie choices.
            let transposed: u64 = forward
                .steps
                .iter()
                .map(|s| match s.op() {
                    EditOp::Insertion => swapped.del as u64,
                    EditOp::Deletion => swapped.ins as u64,
                    op => swapped.cost_of(op),
                })
                .sum();
            prop_assert_eq!(transposed, backward.cost);
            let (f, b) = (forward.counts(), backward.counts());
            prop_assert_eq!(f.ins as i64 - f.del as i64, h.len() as i64 - r.len() as i64);
            prop_assert_eq!(b.ins as i64 - b.del as i64, r.len() as i64 - h.len() as i64);
        }

        #[test]
        fn wer_bounds(r in small_seq(), h in small_seq()) {
            prop_assume!(!r.is_empty());
            let (n, m) = (r.len() as f64, h.len() as f64);
            let w = align(&r, &h, &Weights::default()).wer().unwrap();
            prop_assert!(w >= 0.0);
            prop_assert!(w <= (n + m) / n + 1e-12);
            let unit = Weights { sub: 1, ins: 1, del: 1 };
            let w = align(&r, &h, &unit).wer().unwrap();
            prop_assert!(w <= 1f64.max(m / n) + 1e-12);
            prop_assert_eq!(align(&r, &r, &Weights::default()).wer().unwrap(), 0.0);
            prop_assert_eq!(align(&r, &TokenSeq::new(), &Weights::default()).wer().unwrap(), 1.0);
        }

        #[test]
        fn miscues_account_for_reference(r in small_seq(), h in small_seq()) {
            let a = align(&r, &h, &Weights::default());
            let miscues = extract_miscues(&a);
            let sub_del = miscues.iter().filter(|m| m.kind != MiscueKind::Ins).count();
            prop_assert_eq!(sub_del + a.counts().correct, r.len());
            prop_assert!(miscues.iter().all(|m| m.is_consistent(r.len())));
        }

        #[test]
        fn table_round_trips(r in small_seq(), h in small_seq()) {
            let a = align(&r, &h, &Weights::default());
            let back = Alignment::from_table(&a.to_table(), &Weights::default()).unwrap();
            prop_assert_eq!(back.to_table(), a.to_table());
            prop_assert_eq!(back, a);
        }

        #[test]
        fn matching_is_count_symmetric(r in small_seq(), h1 in small_seq(), h2 in small_seq()) {
            let p = extract_miscues(&align(&r, &h1, &Weights::default()));
            let g = extract_miscues(&align(&r, &h2, &Weights::default()));
            let pg = match_miscues(&p, &g).overall();
            let gp = match_miscues(&g, &p).overall();
            prop_assert_eq!(pg.fp, gp.fn_);
            prop_assert_eq!(pg.tp, gp.tp);
        }
    }
}
