//! Corpus-level WER and miscue detection metrics, and report tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::alignment::{align, match_miscues_with_tolerance, Alignment, Counts, KindCounts, Miscue, MiscueKind, Weights};
use crate::backends::Flag;
use crate::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::pipeline::RecordResult;
use crate::ratio::Rational;

/// Precision, recall and F1 for one count triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No predictions were made, so precision was set to 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
}

fn ratio(num: usize, den: usize) -> Option<Rational> {
    (den > 0).then(|| Rational::new(num as u64, den as u64).expect("nonzero denominator"))
}

impl Prf {
    pub fn precision_exact(c: Counts) -> Rational {
        ratio(c.tp, c.tp + c.fp).unwrap_or(Rational::ZERO)
    }

    pub fn recall_exact(c: Counts) -> Rational {
        ratio(c.tp, c.tp + c.fn_).unwrap_or(Rational::ZERO)
    }

    /// `2PR/(P+R)`, which for counts reduces to `2tp/(2tp+fp+fn)`.
    pub fn f1_exact(c: Counts) -> Rational {
        if c.tp == 0 {
            return Rational::ZERO;
        }
        ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_).unwrap_or(Rational::ZERO)
    }

    pub fn from_counts(c: Counts) -> Self {
        let p = Self::precision_exact(c).to_f64();
        let r = Self::recall_exact(c).to_f64();
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Prf {
            precision: p,
            recall: r,
            f1,
            precision_undefined: c.tp + c.fp == 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerKind {
    pub ins: Prf,
    pub sub: Prf,
    pub del: Prf,
}

impl PerKind {
    pub fn get(&self, kind: MiscueKind) -> Prf {
        match kind {
            MiscueKind::Ins => self.ins,
            MiscueKind::Sub => self.sub,
            MiscueKind::Del => self.del,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wer: Option<Rational>,
    pub per_kind: PerKind,
    pub overall: Prf,
    pub counts: KindCounts,
    pub n_records: usize,
    /// Words in the WER reference (gold transcripts); 0 without WER.
    pub n_ref_words: usize,
}

impl EvalReport {
    pub fn from_counts(counts: KindCounts, n_records: usize) -> Self {
        EvalReport {
            wer: None,
            per_kind: PerKind {
                ins: Prf::from_counts(counts.ins),
                sub: Prf::from_counts(counts.sub),
                del: Prf::from_counts(counts.del),
            },
            overall: Prf::from_counts(counts.overall()),
            counts,
            n_records,
            n_ref_words: 0,
        }
    }

    pub fn with_wer(mut self, totals: WerTotals) -> Result<Self> {
        self.wer = Some(totals.rate()?);
        self.n_ref_words = totals.ref_words;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WerTotals {
    pub errors: usize,
    pub ref_words: usize,
}

impl WerTotals {
    pub fn from_alignments<'a, I: IntoIterator<Item = &'a Alignment>>(alignments: I) -> Self {
        alignments.into_iter().fold(WerTotals::default(), |acc, a| WerTotals {
            errors: acc.errors + a.counts().errors(),
            ref_words: acc.ref_words + a.reference.len(),
        })
    }

    pub fn rate(&self) -> Result<Rational> {
        ratio(self.errors, self.ref_words).ok_or(Error::EmptyCorpus)
    }
}

/// Micro-averaged WER: all errors over all reference words.
pub fn aggregate_wer(alignments: &[Alignment]) -> Result<Rational> {
    WerTotals::from_alignments(alignments).rate()
}

pub fn score_corpus(predicted: &BTreeMap<String, Vec<Miscue>>, gold: &BTreeMap<String, Vec<Miscue>>) -> Result<EvalReport> {
    score_corpus_with_tolerance(predicted, gold, 0)
}

/// Matches each record's predictions against its gold miscues and sums the
/// counts. Both maps must cover the same ids.
pub fn score_corpus_with_tolerance(
    predicted: &BTreeMap<String, Vec<Miscue>>,
    gold: &BTreeMap<String, Vec<Miscue>>,
    tolerance: usize,
) -> Result<EvalReport> {
    let pred_ids: BTreeSet<&String> = predicted.keys().collect();
    let gold_ids: BTreeSet<&String> = gold.keys().collect();
    if pred_ids != gold_ids {
        return Err(Error::KeyMismatch {
            missing: gold_ids.difference(&pred_ids).map(|s| s.to_string()).collect(),
            unexpected: pred_ids.difference(&gold_ids).map(|s| s.to_string()).collect(),
        });
    }
    let mut counts = KindCounts::default();
    for (id, gold_miscues) in gold {
        counts.add(&match_miscues_with_tolerance(&predicted[id], gold_miscues, tolerance));
    }
    Ok(EvalReport::from_counts(counts, gold.len()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    pub include_excluded: bool,
    pub tolerance: usize,
}

/// Scores a results file against a corpus. Gold comes from records with
/// gold miscues; failed records count as predicting nothing. WER is added
/// when every scored record has a gold transcript.
pub fn score_results(
    results: &[RecordResult],
    corpus: &[CorpusRecord],
    options: ScoreOptions,
    weights: &Weights,
) -> Result<EvalReport> {
    let records: BTreeMap<&str, &CorpusRecord> = corpus
        .iter()
        .filter(|r| options.include_excluded || !r.excluded)
        .map(|r| (r.id.as_str(), r))
        .collect();
    let mut gold = BTreeMap::new();
    for record in records.values() {
        if let Some(miscues) = &record.gold_miscues {
            gold.insert(record.id.clone(), miscues.clone());
        }
    }
    let predicted: BTreeMap<String, Vec<Miscue>> = results
        .iter()
        .filter(|r| options.include_excluded || !r.flags.contains(&Flag::Excluded))
        .map(|r| (r.id.clone(), r.miscues.clone()))
        .collect();
    let report = score_corpus_with_tolerance(&predicted, &gold, options.tolerance)?;

    let by_id: BTreeMap<&str, &RecordResult> = results.iter().map(|r| (r.id.as_str(), r)).collect();
    let transcripts: Option<Vec<Alignment>> = gold
        .keys()
        .map(|id| {
            let gold_transcript = records[id.as_str()].gold_transcript.as_ref()?;
            Some(align(gold_transcript, &by_id[id.as_str()].hypothesis_tokens(), weights))
        })
        .collect();
    match transcripts {
        Some(alignments) if !alignments.is_empty() => report.with_wer(WerTotals::from_alignments(&alignments)),
        _ => Ok(report),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

const METRIC_COLUMNS: [&str; 6] = ["All P", "All R", "All F1", "Ins F1", "Sub F1", "Del F1"];
const CSV_COLUMNS: [&str; 8] = [
    "system",
    "all_precision",
    "all_recall",
    "all_f1",
    "ins_f1",
    "sub_f1",
    "del_f1",
    "wer_percent",
];

/// The formatted numbers of one report row, in column order.
fn metric_cells(report: &EvalReport) -> [String; 6] {
    let c = report.counts;
    let overall = c.overall();
    [
        Prf::precision_exact(overall).to_fixed(2),
        Prf::recall_exact(overall).to_fixed(2),
        Prf::f1_exact(overall).to_fixed(2),
        Prf::f1_exact(c.ins).to_fixed(2),
        Prf::f1_exact(c.sub).to_fixed(2),
        Prf::f1_exact(c.del).to_fixed(2),
    ]
}

/// WER as a percentage with one decimal.
pub fn wer_percent(wer: Rational) -> String {
    let tenths = wer.mul_round(1000);
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// Renders a detection table (overall P/R/F1, then F1 per kind) and a WER
/// column or table.
pub fn render_report(reports: &[(String, EvalReport)], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str(&format!("| System | {} |\n", METRIC_COLUMNS.join(" | ")));
            out.push_str(&format!("|---|{}\n", "---:|".repeat(METRIC_COLUMNS.len())));
            for (name, report) in reports {
                out.push_str(&format!("| {} | {} |\n", name, metric_cells(report).join(" | ")));
            }
            out.push_str("\n| System | WER (%) |\n|---|---:|\n");
            for (name, report) in reports {
                let wer = report.wer.map(wer_percent).unwrap_or_else(|| "-".into());
                out.push_str(&format!("| {name} | {wer} |\n"));
            }
            out
        }
        ReportFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record(CSV_COLUMNS).expect("in-memory write");
            for (name, report) in reports {
                let mut row = vec![name.clone()];
                row.extend(metric_cells(report));
                row.push(report.wer.map(wer_percent).unwrap_or_default());
                writer.write_record(&row).expect("in-memory write");
            }
            String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::Miscue;
    use crate::textnorm::TokenSeq;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_normalized(s.split_whitespace())
    }

    fn counts(tp: usize, fp: usize, fn_: usize) -> Counts {
        Counts { tp, fp, fn_ }
    }

    #[test]
    fn micro_average_wer() {
        let ten = seq("a b c d e f g h i j");
        let one = align(&ten, &seq("a b c d e f g h i x"), &Weights::default());
        let three = align(&ten, &seq("a b c d e f g x y z"), &Weights::default());
        assert_eq!(aggregate_wer(&[one.clone(), three]).unwrap(), Rational::new(1, 5).unwrap());
        assert_eq!(aggregate_wer(&[one]).unwrap(), Rational::new(1, 10).unwrap());
        assert!(matches!(aggregate_wer(&[]), Err(Error::EmptyCorpus)));
        let identity = align(&ten, &ten, &Weights::default());
        assert_eq!(aggregate_wer(&[identity]).unwrap(), Rational::ZERO);
    }

    #[test]
    fn metric_definitions() {
        let p = Prf::from_counts(counts(3, 1, 2));
        assert_eq!(p.precision, 0.75);
        assert_eq!(p.recall, 0.6);
        assert!((p.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
        assert_eq!(Prf::f1_exact(counts(3, 1, 2)), Rational::new(2, 3).unwrap());
        let none = Prf::from_counts(counts(0, 0, 4));
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        assert!(none.precision_undefined);
    }

    #[test]
    fn identical_and_empty_predictions() {
        let gold: BTreeMap<String, Vec<Miscue>> = [
            ("r1".to_string(), vec![Miscue::ins(0, seq("h")), Miscue::del(2, "zondag")]),
            ("r2".to_string(), vec![Miscue::sub(1, "is", seq("it"))]),
        ]
        .into();
        let report = score_corpus(&gold, &gold).unwrap();
        for kind in [MiscueKind::Ins, MiscueKind::Sub, MiscueKind::Del] {
            assert_eq!(report.per_kind.get(kind).f1, 1.0);
        }
        assert_eq!((report.overall.precision, report.overall.recall), (1.0, 1.0));

        let empty: BTreeMap<String, Vec<Miscue>> = gold.keys().map(|k| (k.clone(), vec![])).collect();
        let report = score_corpus(&empty, &gold).unwrap();
        assert_eq!((report.overall.precision, report.overall.recall, report.overall.f1), (0.0, 0.0, 0.0));
        assert!(report.overall.precision_undefined);
        assert_eq!(report.counts.overall().fn_, 3);
    }

    #[test]
    fn key_mismatch_lists_ids() {
        let gold: BTreeMap<String, Vec<Miscue>> = [("a".to_string(), vec![]), ("b".to_string(), vec![])].into();
        let pred: BTreeMap<String, Vec<Miscue>> = [("a".to_string(), vec![]), ("c".to_string(), vec![])].into();
        match score_corpus(&pred, &gold) {
            Err(Error::KeyMismatch { missing, unexpected }) => {
                assert_eq!(missing, vec!["b"]);
                assert_eq!(unexpected, vec!["c"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn sample_report() -> EvalReport {
        let c = KindCounts {
            ins: counts(5, 2, 3),
            sub: counts(4, 4, 4),
            del: counts(2, 0, 1),
        };
        EvalReport::from_counts(c, 10)
            .with_wer(WerTotals { errors: 51, ref_words: 1000 })
            .unwrap()
    }

    #[test]
    fn markdown_and_csv_agree() {
        let reports = vec![("baseline".to_string(), sample_report())];
        let md = render_report(&reports, ReportFormat::Markdown);
        let csv = render_report(&reports, ReportFormat::Csv);
        assert!(md.starts_with("| System | All P | All R | All F1 | Ins F1 | Sub F1 | Del F1 |"));
        assert!(md.contains("| baseline | 0.65 | 0.58 | 0.61 | 0.67 | 0.50 | 0.80 |"));
        assert!(md.contains("| baseline | 5.1 |"));
        assert_eq!(csv.lines().nth(1).unwrap(), "baseline,0.65,0.58,0.61,0.67,0.50,0.80,5.1");
    }

    #[test]
    fn csv_quotes_names() {
        let reports = vec![("a, b".to_string(), EvalReport::from_counts(KindCounts::default(), 0))];
        let csv = render_report(&reports, ReportFormat::Csv);
        assert_eq!(csv.lines().nth(1).unwrap(), "\"a, b\",0.00,0.00,0.00,0.00,0.00,0.00,");
    }
}
