use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_readmiscue"))
}

fn synth(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/synth").join(file)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn run_whisper(out: &Path, extra: &[&str]) {
    run(bin()
        .args(["run-whisper", "--corpus"])
        .arg(synth("corpus.jsonl"))
        .arg("--fixtures")
        .arg(synth("fixtures.jsonl"))
        .arg("--out")
        .arg(out)
        .args(extra));
}

#[test]
fn align_prints_gap_indexed_insertions() {
    let out = run(bin().args(["align", "--ref", "Het is zondag.", "--hyp", "h het it is zon zondag", "--json"]));
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let positions: Vec<u64> = value["miscues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["position"].as_u64().unwrap())
        .collect();
    assert_eq!(positions, [0, 1, 2]);
}

#[test]
fn gen_prompt_is_reproducible() {
    let args = ["gen-prompt", "--text", "de kat zit op de mat", "--source", "read", "--rate", "1", "--seed", "7"];
    let a = run(bin().args(args));
    let b = run(bin().args(args));
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn zero_rate_equals_no_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("rate0.jsonl");
    let b = dir.path().join("noprompt.jsonl");
    run_whisper(&a, &["--rate", "0"]);
    run_whisper(&b, &["--no-prompt"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn full_flow_scores_and_analyzes() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("plain.jsonl");
    let prompted = dir.path().join("prompted.jsonl");
    let llm = dir.path().join("llm.jsonl");
    run_whisper(&plain, &["--no-prompt"]);
    run_whisper(&prompted, &["--parallelism", "3"]);
    run(bin()
        .args(["run-llm", "--corpus"])
        .arg(synth("corpus.jsonl"))
        .arg("--fixtures")
        .arg(synth("fixtures.jsonl"))
        .arg("--out")
        .arg(&llm));

    let mut score = bin();
    score.args(["score", "--gold"]).arg(synth("corpus.jsonl"));
    for (name, path) in [("plain", &plain), ("prompted", &prompted), ("llm", &llm)] {
        score.arg("--pred").arg(format!("{name}={}", path.display()));
    }
    let report = stdout(&run(&mut score));
    assert!(report.starts_with("| System | All P | All R | All F1 | Ins F1 | Sub F1 | Del F1 |"));
    assert!(report.contains("| llm |"));
    assert!(report.contains("| System | WER (%) |"));

    let analysis = stdout(&run(bin()
        .args(["analyze", "--min-count", "1", "--results"])
        .arg(&llm)
        .arg("--gold")
        .arg(synth("corpus.jsonl"))));
    assert!(!analysis.trim().is_empty());
}

#[test]
fn score_rejects_mismatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.jsonl");
    run_whisper(&results, &["--no-prompt"]);
    let text = std::fs::read_to_string(&results).unwrap();
    let partial: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    std::fs::write(&results, partial).unwrap();
    let out = bin()
        .args(["score", "--pred"])
        .arg(&results)
        .arg("--gold")
        .arg(synth("corpus.jsonl"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("syn001"));
}

#[test]
fn replay_miss_without_fixtures_fails() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = bin()
        .args(["run-whisper", "--corpus"])
        .arg(synth("corpus.jsonl"))
        .arg("--fixtures")
        .arg(&empty)
        .arg("--out")
        .arg(dir.path().join("out.jsonl"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn synth_writes_the_three_files() {
    let dir = tempfile::tempdir().unwrap();
    run(bin().args(["synth", "--records", "5", "--out"]).arg(dir.path()));
    for file in ["corpus.jsonl", "fixtures.jsonl", "identity_fixtures.jsonl"] {
        assert!(dir.path().join(file).metadata().unwrap().len() > 0, "{file}");
    }
}
