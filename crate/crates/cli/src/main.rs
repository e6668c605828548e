use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use readmiscue::alignment::{align, extract_miscues, Miscue};
use readmiscue::analysis::{deletion_ranking, frequency_table, parse_lexicon, render_analysis};
use readmiscue::backends::http::{HttpAsr, HttpChat, RetryPolicy};
use readmiscue::backends::{AsrBackend, ChatBackend, FixtureRecorder, Recording, Replay};
use readmiscue::corpus::load_corpus;
use readmiscue::llm::LlmMode;
use readmiscue::mistakes::{build_prompt, PromptSource, PromptSpec};
use readmiscue::pipeline::{read_results, BackendKind, Pipeline, PipelineKind, RunConfig, DEFAULT_IRRELEVANT_TEXT};
use readmiscue::ratio::Rational;
use readmiscue::scoring::{render_report, score_results, ReportFormat, ScoreOptions};
use readmiscue::synth::{generate, SynthOptions};
use readmiscue::textnorm::Normalizer;

#[derive(Parser)]
#[command(name = "readmiscue", version)]
#[command(about = "Detect reading mistakes with prompted ASR and LLM refinement, and score the results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a mistake-laden recognizer prompt
    GenPrompt(GenPromptArgs),
    /// Align a hypothesis to a reference and list the miscues
    Align(AlignArgs),
    /// Run the prompted-recognizer pipeline over a corpus
    RunWhisper(RunArgs),
    /// Run the prompted-recognizer pipeline followed by LLM refinement
    RunLlm(RunArgs),
    /// Score result files against a gold corpus
    Score(ScoreArgs),
    /// Categorize frequent substitutions and rank deletions
    Analyze(AnalyzeArgs),
    /// Write a synthetic corpus with replay fixtures
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Read,
    Irrelevant,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Replay,
    Live,
}

#[derive(Clone, Copy, ValueEnum)]
enum LlmModeArg {
    Hypothesis,
    Alignment,
}

#[derive(Args)]
struct GenPromptArgs {
    /// Read text
    #[arg(long, conflicts_with = "text_file")]
    text: Option<String>,
    /// File holding the read text
    #[arg(long)]
    text_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "irrelevant")]
    source: SourceArg,
    /// Mistakes per word, e.g. 0.1, 1 or 3
    #[arg(long, default_value = "3")]
    rate: Rational,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum prompt length in tokens
    #[arg(long, default_value_t = 224)]
    budget: usize,
    /// Irrelevant text file (defaults to the built-in text)
    #[arg(long)]
    irrelevant: Option<PathBuf>,
    /// Where to write the JSON metadata of the prompt
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long = "ref")]
    reference: String,
    #[arg(long)]
    hyp: String,
    /// Print miscues and counts as JSON instead of the table
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Results JSONL
    #[arg(long)]
    out: PathBuf,
    /// TOML run configuration; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// With the live backend, append every response to the fixture file
    #[arg(long)]
    record: bool,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    #[arg(long)]
    rate: Option<Rational>,
    /// Transcribe without a prompt (same as --rate 0)
    #[arg(long)]
    no_prompt: bool,
    #[arg(long)]
    halluc_upper: Option<Rational>,
    #[arg(long)]
    halluc_lower: Option<Rational>,
    #[arg(long, value_enum)]
    llm_mode: Option<LlmModeArg>,
    /// CTC transcripts as {"id","text"} JSONL
    #[arg(long)]
    ctc: Option<PathBuf>,
    /// Skip records already present in the results file
    #[arg(long)]
    resume: bool,
    /// Also transcribe records marked excluded
    #[arg(long)]
    transcribe_excluded: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// Results JSONL; repeat for several systems, optionally as NAME=PATH
    #[arg(long, required = true)]
    pred: Vec<String>,
    /// Corpus JSONL with gold annotations
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
    /// Score records marked excluded too
    #[arg(long)]
    include_excluded: bool,
    /// Accept predictions up to this many positions away from the gold miscue
    #[arg(long, default_value_t = 0)]
    tolerance: usize,
    /// Print the full reports as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    results: PathBuf,
    /// Realign hypotheses against these gold transcripts, so recognizer
    /// errors rather than reading mistakes are analyzed
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Entity names, one per line
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    min_count: usize,
    /// Number of deleted words to list
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    records: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Run configuration the fixtures are recorded for
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::GenPrompt(args) => gen_prompt(args),
        Command::Align(args) => align_cmd(args),
        Command::RunWhisper(args) => run(args, PipelineKind::PromptingWhisper),
        Command::RunLlm(args) => run(args, PipelineKind::PromptingLlm),
        Command::Score(args) => score(args),
        Command::Analyze(args) => analyze(args),
        Command::Synth(args) => synth(args),
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn gen_prompt(args: GenPromptArgs) -> Result<()> {
    let normalizer = Normalizer::default();
    let text = match (&args.text, &args.text_file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => read_file(p)?,
        (None, None) => bail!("give the read text with --text or --text-file"),
    };
    let irrelevant = match &args.irrelevant {
        Some(p) => read_file(p)?,
        None => DEFAULT_IRRELEVANT_TEXT.to_string(),
    };
    let spec = PromptSpec {
        source: match args.source {
            SourceArg::Read => PromptSource::ReadText,
            SourceArg::Irrelevant => PromptSource::IrrelevantText,
        },
        rate: args.rate,
        seed: args.seed,
        token_budget: args.budget,
    };
    let prompt = build_prompt(&spec, &normalizer.normalize(&text), &normalizer.normalize(&irrelevant))?;
    println!("{}", prompt.text);
    if let Some(path) = &args.sidecar {
        let json = serde_json::to_string_pretty(&prompt)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn align_cmd(args: AlignArgs) -> Result<()> {
    let normalizer = Normalizer::default();
    let reference = normalizer.normalize(&args.reference);
    let hyp = normalizer.normalize(&args.hyp);
    let alignment = align(&reference, &hyp, &Default::default());
    let miscues = extract_miscues(&alignment);
    if args.json {
        let counts = alignment.counts();
        let out = serde_json::json!({
            "cost": alignment.cost,
            "correct": counts.correct,
            "sub": counts.sub,
            "ins": counts.ins,
            "del": counts.del,
            "wer": alignment.wer().ok(),
            "miscues": miscues,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        print!("{}", alignment.to_table());
        if let Ok(wer) = alignment.wer() {
            println!("# WER {:.4}", wer);
        }
        for m in &miscues {
            println!("# {}", serde_json::to_string(m)?);
        }
    }
    Ok(())
}

/// Backends chosen for a run. Replay serves both roles from one file.
enum Backends {
    Replay(Replay),
    Live {
        asr: Box<dyn AsrBackend>,
        chat: Box<dyn ChatBackend>,
    },
}

impl Backends {
    fn open(config: &RunConfig) -> Result<Self> {
        let fixtures = config.backend.fixtures.as_deref();
        match config.backend.kind {
            BackendKind::Replay => {
                let path = fixtures.context("the replay backend needs --fixtures")?;
                let replay = Replay::from_path(path).with_context(|| format!("loading {}", path.display()))?;
                Ok(Backends::Replay(replay))
            }
            BackendKind::Live => {
                let retry = RetryPolicy::default();
                let asr = HttpAsr::from_env(retry)?;
                let chat = HttpChat::from_env(retry)?;
                if !config.backend.record {
                    return Ok(Backends::Live {
                        asr: Box::new(asr),
                        chat: Box::new(chat),
                    });
                }
                let path = fixtures.context("--record needs --fixtures")?;
                let recorder = Arc::new(FixtureRecorder::open(path)?);
                Ok(Backends::Live {
                    asr: Box::new(Recording::new(asr, recorder.clone())),
                    chat: Box::new(Recording::new(chat, recorder)),
                })
            }
        }
    }

    fn asr(&self) -> &dyn AsrBackend {
        match self {
            Backends::Replay(r) => r,
            Backends::Live { asr, .. } => asr.as_ref(),
        }
    }

    fn chat(&self) -> &dyn ChatBackend {
        match self {
            Backends::Replay(r) => r,
            Backends::Live { chat, .. } => chat.as_ref(),
        }
    }
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(b) = args.backend {
        config.backend.kind = match b {
            BackendArg::Replay => BackendKind::Replay,
            BackendArg::Live => BackendKind::Live,
        };
    }
    if let Some(f) = &args.fixtures {
        config.backend.fixtures = Some(f.clone());
    }
    config.backend.record |= args.record;
    if let Some(p) = args.parallelism {
        config.parallelism = p;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(source) = args.source {
        config.prompt.source = match source {
            SourceArg::Read => PromptSource::ReadText,
            SourceArg::Irrelevant => PromptSource::IrrelevantText,
        };
    }
    if let Some(rate) = args.rate {
        config.prompt.rate = rate;
    }
    if args.no_prompt {
        config.prompt.rate = Rational::ZERO;
    }
    if let Some(u) = args.halluc_upper {
        config.hallucination.upper_ratio = u;
    }
    if let Some(l) = args.halluc_lower {
        config.hallucination.lower_ratio = l;
    }
    if let Some(mode) = args.llm_mode {
        config.llm.mode = Some(match mode {
            LlmModeArg::Hypothesis => LlmMode::HypothesisMode,
            LlmModeArg::Alignment => LlmMode::AlignmentHypothesisMode,
        });
    }
    if let Some(ctc) = &args.ctc {
        config.ctc = Some(ctc.clone());
    }
    config.transcribe_excluded |= args.transcribe_excluded;
    if config.backend.record && config.backend.kind == BackendKind::Replay {
        bail!("--record only applies to the live backend");
    }
    config.validate()?;
    Ok(config)
}

fn run(args: RunArgs, kind: PipelineKind) -> Result<()> {
    let mut config = run_config(&args)?;
    if kind == PipelineKind::PromptingLlm && config.llm.mode.is_none() {
        config.llm.mode = Some(LlmMode::AlignmentHypothesisMode);
    }
    let normalizer = Normalizer::default();
    let corpus = load_corpus(&args.corpus, &normalizer, &config.weights)?;
    let backends = Backends::open(&config)?;
    let pipeline = Pipeline::with_normalizer(config, backends.asr(), normalizer)?.with_chat(backends.chat());
    let summary = pipeline.run_to_file(&corpus, kind, &args.out, args.resume)?;
    eprintln!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let config = RunConfig::default();
    let corpus = load_corpus(&args.gold, &Normalizer::default(), &config.weights)?;
    let options = ScoreOptions {
        include_excluded: args.include_excluded,
        tolerance: args.tolerance,
    };
    let mut reports = Vec::new();
    for spec in &args.pred {
        let (name, path) = match spec.split_once('=') {
            Some((name, path)) => (name.to_string(), PathBuf::from(path)),
            None => {
                let path = PathBuf::from(spec);
                let name = path.file_stem().map_or_else(|| spec.clone(), |s| s.to_string_lossy().into_owned());
                (name, path)
            }
        };
        let results = read_results(&path)?;
        let report = score_results(&results, &corpus, options, &config.weights)
            .with_context(|| format!("scoring {}", path.display()))?;
        reports.push((name, report));
    }
    if args.json {
        let out: Vec<_> = reports
            .iter()
            .map(|(name, r)| serde_json::json!({"system": name, "report": r}))
            .collect();
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        print!("{}", render_report(&reports, args.format.into()));
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let normalizer = Normalizer::default();
    let results = read_results(&args.results)?;
    let lexicon = match &args.lexicon {
        Some(p) => parse_lexicon(&read_file(p)?, &normalizer),
        None => BTreeSet::new(),
    };
    let miscues: Vec<Miscue> = match &args.gold {
        None => results.iter().flat_map(|r| r.miscues.clone()).collect(),
        Some(path) => {
            let weights = RunConfig::default().weights;
            let corpus = load_corpus(path, &normalizer, &weights)?;
            let mut out = Vec::new();
            for result in results.iter().filter(|r| !r.failed()) {
                let Some(gold) = corpus
                    .iter()
                    .find(|c| c.id == result.id)
                    .and_then(|c| c.gold_transcript.as_ref())
                else {
                    continue;
                };
                out.extend(extract_miscues(&align(gold, &result.hypothesis_tokens(), &weights)));
            }
            out
        }
    };
    let table = frequency_table(&miscues, &lexicon, args.min_count);
    let deletions = deletion_ranking(&miscues, args.top);
    print!("{}", render_analysis(&table, &deletions, args.format.into()));
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let config = match &args.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    let out = generate(
        &SynthOptions {
            records: args.records,
            seed: args.seed,
        },
        &config,
    )?;
    out.write_dir(&args.out)?;
    eprintln!(
        "wrote {} records, {} fixtures, {} identity fixtures to {}",
        out.corpus.len(),
        out.fixtures.len(),
        out.identity_fixtures.len(),
        args.out.display()
    );
    Ok(())
}
