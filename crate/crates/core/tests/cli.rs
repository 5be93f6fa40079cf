use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_indefinite"))
        .args(args)
        .env_remove("INDEF_SCORER_ENDPOINT")
        .env_remove("INDEF_SCORER_TIMEOUT_MS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn classify_usage_examples_to_stdout() {
    let out = ok(&["classify", "--in", p(&fixture("usage_examples.jsonl")), "--out", "-"]);
    let lines: Vec<Value> = String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 8);
    for l in &lines {
        assert_eq!(l["class"], l["gold_class"], "{}", l["text"]);
    }
}

#[test]
fn classify_preserves_order_across_chunks() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let labeled = dir.path().join("l.jsonl");
    ok(&["synth", "--seed", "3", "--size", "9000", "--gold", p(&dir.path().join("g.jsonl")), "--corpus", p(&corpus)]);
    ok(&["classify", "--in", p(&corpus), "--out", p(&labeled), "--config", p(&fixture("rules.toml"))]);
    let ids: Vec<String> = json_lines(&labeled).iter().map(|v| v["id"].as_str().unwrap().to_string()).collect();
    let expected: Vec<String> = (0..9000).map(|i| format!("synth-{i:05}")).collect();
    assert_eq!(ids, expected);
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = TempDir::new().unwrap();
    let run = |seed: &str, tag: &str| {
        let gold = dir.path().join(format!("gold-{tag}.jsonl"));
        let train = dir.path().join(format!("train-{tag}.txt"));
        ok(&["synth", "--seed", seed, "--gold", p(&gold), "--train-out", p(&train), "--train-size", "300"]);
        (std::fs::read(gold).unwrap(), std::fs::read(train).unwrap())
    };
    let a = run("9", "a");
    assert_eq!(a, run("9", "b"));
    assert_ne!(a, run("10", "c"));
    let gold = String::from_utf8(a.0).unwrap();
    assert_eq!(gold.lines().count(), 200);
    assert_eq!(gold.matches("\"INFELICITOUS\"").count(), 40);
}

#[test]
fn synth_train_detect_pipeline() {
    let dir = TempDir::new().unwrap();
    let gold = dir.path().join("gold.jsonl");
    let train = dir.path().join("train.txt");
    let model = dir.path().join("model.lm");
    ok(&["synth", "--seed", "42", "--size", "200", "--rate", "0.2", "--gold", p(&gold), "--train-out", p(&train)]);
    ok(&["train-lm", "--in", p(&train), "--out", p(&model)]);
    let scorer = format!("ngram:{}", p(&model));
    let mut reports = Vec::new();
    for name in ["r1.json", "r2.json"] {
        let report = dir.path().join(name);
        ok(&["detect", "--in", p(&gold), "--scorer", &scorer, "--confidence", "0.8", "--report", p(&report)]);
        reports.push(std::fs::read(&report).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let r: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(r["n"], 200);
    assert_eq!(r["excluded"], 0);
    assert_eq!(r["baseline_accuracy"], 0.8);
    assert!(r["infelicitous"]["f1"].as_f64().unwrap() >= 0.9);
}

#[test]
fn detect_with_unreachable_remote_exits_2() {
    let dir = TempDir::new().unwrap();
    let gold = dir.path().join("gold.jsonl");
    ok(&["synth", "--seed", "1", "--size", "5", "--gold", p(&gold)]);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let scorer = format!("remote:http://127.0.0.1:{port}");
    let out = bin(&[
        "detect", "--in", p(&gold), "--scorer", &scorer, "--retries", "0", "--report", p(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("transport"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn validation_failures_exit_1() {
    let out = bin(&["classify", "--in", "/nonexistent/corpus.jsonl", "--out", "-"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/corpus.jsonl"));

    assert_eq!(bin(&["classify", "--bogus"]).status.code(), Some(1));
    assert_eq!(bin(&["aggregate", "--in", p(&fixture("usage_examples_annotations.csv")), "--threshold", "0.4", "--out", "-"]).status.code(), Some(1));
    assert_eq!(bin(&["mds", "--matrix", p(&fixture("usage_examples.jsonl")), "--out", "-"]).status.code(), Some(1));
    assert_eq!(bin(&["detect", "--in", p(&fixture("usage_examples.jsonl")), "--report", "-"]).status.code(), Some(1));

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": \"x\", \"text\": \"hello there\", \"ip_index\": 0, \"original\": \"someone\", \"population\": \"native\"}\n").unwrap();
    let out = bin(&["classify", "--in", p(&bad), "--out", "-"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn help_documents_flags() {
    let out = bin(&["detect", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let help = String::from_utf8(out.stdout).unwrap();
    for flag in ["--in", "--scorer", "--confidence", "--report", "--timeout-ms", "--retries"] {
        assert!(help.contains(flag), "{flag}");
    }
}

#[test]
fn refuses_to_overwrite_its_input() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    std::fs::copy(fixture("usage_examples.jsonl"), &corpus).unwrap();
    let before = std::fs::read(&corpus).unwrap();
    let out = bin(&["classify", "--in", p(&corpus), "--out", p(&corpus)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read(&corpus).unwrap(), before);
}

#[test]
fn ingest_flags_idioms_and_splits_pronouns() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw.txt");
    std::fs::write(&raw, "I want pizza or something.\nNo pronoun here.\n\nSomeone asked if anything was wrong.\n").unwrap();
    let corpus = dir.path().join("c.jsonl");
    ok(&["ingest", "--in", p(&raw), "--out", p(&corpus), "--population", "advanced_l2"]);
    let recs = json_lines(&corpus);
    let ids: Vec<&str> = recs.iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["s000001", "s000004-0", "s000004-1"]);
    assert_eq!(recs[0]["idiom"], true);
    assert!(recs[1].get("idiom").is_none());
    assert_eq!(recs[2]["original"], "anything");
    assert_eq!(recs[1]["population"], "advanced_l2");
}

#[test]
fn aggregate_joins_the_corpus() {
    let dir = TempDir::new().unwrap();
    let gold = dir.path().join("gold.jsonl");
    ok(&[
        "aggregate", "--in", p(&fixture("usage_examples_annotations.csv")), "--threshold", "0.8", "--out", p(&gold),
        "--corpus", p(&fixture("usage_examples.jsonl")),
    ]);
    let g = json_lines(&gold);
    let labels: Vec<&str> = g.iter().map(|v| v["gold"].as_str().unwrap()).collect();
    assert_eq!(
        labels,
        ["FELICITOUS", "FELICITOUS", "LOW_CONFIDENCE", "FELICITOUS", "FELICITOUS", "FELICITOUS", "INFELICITOUS", "OTHER_MAJORITY"]
    );
    assert_eq!(g[6]["text"], "If you work harder you deserve to earn more than someone who doesn't do so.");

    // annotations without their sentences cannot be detected
    let bare = dir.path().join("bare.jsonl");
    ok(&["aggregate", "--in", p(&fixture("usage_examples_annotations.csv")), "--out", p(&bare)]);
    let out = bin(&["detect", "--in", p(&bare), "--scorer", "ngram:/nonexistent", "--report", "-"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stats_by_class() {
    let dir = TempDir::new().unwrap();
    let labeled = dir.path().join("l.jsonl");
    let dist = dir.path().join("dist.csv");
    let gold = dir.path().join("gold.jsonl");
    let inf = dir.path().join("inf.csv");
    ok(&["classify", "--in", p(&fixture("classifier_regression.jsonl")), "--out", p(&labeled)]);
    ok(&["aggregate", "--in", p(&fixture("usage_examples_annotations.csv")), "--out", p(&gold)]);
    ok(&["stats", "--in", p(&labeled), "--by-class", "--out", p(&dist)]);
    let csv = std::fs::read_to_string(&dist).unwrap();
    assert!(csv.starts_with("group,population,some,any"));
    assert!(csv.lines().any(|l| l.starts_with("total,native,")));
    assert!(csv.lines().any(|l| l.starts_with("DN,native,")));

    ok(&[
        "stats", "--in", p(&fixture("usage_examples.jsonl")), "--out", "-", "--gold", p(&gold), "--infelicity-out", p(&inf),
    ]);
    let inf = std::fs::read_to_string(&inf).unwrap();
    assert!(inf.contains("CP,1,1,100.0"), "{inf}");
}

#[test]
fn mds_from_records_and_matrix() {
    let dir = TempDir::new().unwrap();
    let coords = dir.path().join("coords.csv");
    ok(&["mds", "--records", p(&fixture("colex_synthetic.csv")), "--out", p(&coords)]);
    let text = std::fs::read_to_string(&coords).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 9);
    assert!(text.lines().any(|l| l.starts_with("#eigenvalues,")));

    let matrix = dir.path().join("m.csv");
    std::fs::write(&matrix, "SP,NS,DN\n4,3,0\n3,4,1\n0,1,4\n").unwrap();
    let out = ok(&["mds", "--matrix", p(&matrix), "--languages", "4", "--out", "-"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("DN,"));
    assert_eq!(bin(&["mds", "--matrix", p(&matrix), "--out", "-"]).status.code(), Some(1));
}

#[test]
fn config_file_supplies_flags() {
    let dir = TempDir::new().unwrap();
    let gold = dir.path().join("gold.jsonl");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("seed = 5\n\n[synth]\nsize = 12\ngold = {:?}\n", p(&gold))).unwrap();
    ok(&["--config", p(&cfg), "synth"]);
    assert_eq!(json_lines(&gold).len(), 12);
    ok(&["--config", p(&cfg), "synth", "--size", "7"]);
    assert_eq!(json_lines(&gold).len(), 7);

    std::fs::write(&cfg, "[synth]\nnot_a_flag = 1\n").unwrap();
    assert_eq!(bin(&["--config", p(&cfg), "synth", "--seed", "1", "--gold", "-"]).status.code(), Some(1));
}

#[test]
fn in_process_run_reports_exit_codes() {
    assert_eq!(indefinite::cli::run(["indefinite", "--version"]), 0);
    assert_eq!(indefinite::cli::run(["indefinite", "synth", "--seed", "1", "--size", "0", "--gold", "-"]), 1);
}
