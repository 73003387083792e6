mod common;

use std::fs;
use std::path::Path;

use newsgate::container::load_model;
use newsgate::corpus::{load_corpus, save_corpus, CorpusFormat, DocumentSet, NewsDocument};
use newsgate::eval::EvalReport;
use newsgate::synthetic::{self, SyntheticConfig};

use common::*;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_jsonl(path: &Path, lines: &[&str]) {
    let mut text = lines.join("\n");
    if !lines.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

#[test]
fn annotate_six_doc_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = newsgate(&["ingest", "--input", s(&fixture("six_docs.jsonl")), "--output_dir", s(out)], None);
    assert!(o.status.success());
    assert_eq!(text(&o.stdout), "documents=6\n");
    let o = newsgate(&["annotate", "--lexicon", s(&fixture("lexicon.txt")), "--output_dir", s(out)], None);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout), "positive=2 negative=2 neutral=2\n");

    let docs = load_corpus(&out.join("annotated.jsonl"), CorpusFormat::Jsonl).unwrap();
    let labels: Vec<i8> = docs.iter().map(|d| d.weak_label.unwrap().value()).collect();
    assert_eq!(labels, [1, 1, -1, -1, 0, 0]);
}

#[test]
fn annotate_empty_corpus_and_lexicon_problems() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = newsgate(
        &["annotate", "--lexicon", s(&fixture("lexicon.txt")), "--annotate.input", s(&empty), "--output_dir", s(dir.path())],
        None,
    );
    assert!(o.status.success());
    assert_eq!(text(&o.stdout), "positive=0 negative=0 neutral=0\n");

    let missing = dir.path().join("no-such-lexicon.txt");
    let o = newsgate(&["annotate", "--lexicon", s(&missing), "--annotate.input", s(&empty)], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("no-such-lexicon.txt"));

    let blank = dir.path().join("blank.txt");
    fs::write(&blank, "# nothing here\n").unwrap();
    let o = newsgate(
        &["annotate", "--lexicon", s(&blank), "--annotate.input", s(&fixture("six_docs.jsonl")), "--output_dir", s(dir.path())],
        None,
    );
    assert!(o.status.success());
    assert!(text(&o.stderr).contains("warning"));
    assert_eq!(text(&o.stdout), "positive=0 negative=0 neutral=6\n");
}

#[test]
fn usage_errors_exit_two() {
    let o = newsgate(&["train", "--no.such.key", "1"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = newsgate(&["train", "--cnn.epochs"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = newsgate(&["frobnicate"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = newsgate(&["ingest"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ingest_tsv_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("in.tsv");
    fs::write(&tsv, "id\ttitle\tbody\tlabel\na\tT\tgood day\t1\nb\t\tbad day\t-1\n").unwrap();
    let out = dir.path().join("out");
    let o = newsgate(&["ingest", "--input", s(&tsv), "--format", "tsv", "--output_dir", s(&out)], None);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let docs = load_corpus(&out.join("corpus.jsonl"), CorpusFormat::Jsonl).unwrap();
    assert_eq!(docs.len(), 2);

    let dup = dir.path().join("dup.jsonl");
    write_jsonl(&dup, &[r#"{"id":"a","body":"x"}"#, r#"{"id":"a","body":"y"}"#]);
    let o = newsgate(&["ingest", "--input", s(&dup), "--output_dir", s(&out)], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("duplicate"));
}

/// Neutral documents drawn from a small word pool, a weakly positive copy of
/// one of them and one clearly different positive document.
fn filtration_fixture(dir: &Path) -> std::path::PathBuf {
    let pool = ["council", "budget", "meeting", "report", "tuesday", "office", "staff", "plan"];
    let mut lines = Vec::new();
    for i in 0..40 {
        let words: Vec<&str> = (0..5).map(|k| pool[(i + k * 3) % pool.len()]).collect();
        lines.push(format!(r#"{{"id":"z{i}","body":"{}","weak_label":0}}"#, words.join(" ")));
    }
    let dup: Vec<&str> = (0..5).map(|k| pool[(k * 3) % pool.len()]).collect();
    lines.push(format!(r#"{{"id":"dup","body":"{}","weak_label":1}}"#, dup.join(" ")));
    lines.push(r#"{"id":"far","body":"happy winners celebrate a great festival","weak_label":1}"#.to_string());
    let path = dir.join("annotated.jsonl");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn filtrate_quarantines_near_duplicate() {
    let dir = tempfile::tempdir().unwrap();
    let input = filtration_fixture(dir.path());
    let out = dir.path().join("out");
    let args = [
        "filtrate",
        "--filtration.input",
        s(&input),
        "--output_dir",
        s(&out),
        "--vocab.min_count",
        "1",
        "--filtration.nu_grid",
        "0.1,0.2",
        "--filtration.gamma_grid",
        "0.5,1",
        "--filtration.folds",
        "5",
        "--filtration.repeats",
        "2",
    ];
    let o = newsgate(&args, None);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let ids = |name: &str| -> Vec<String> {
        load_corpus(&out.join(name), CorpusFormat::Jsonl)
            .unwrap()
            .iter()
            .map(|d| d.id.clone())
            .collect()
    };
    assert_eq!(ids("quarantine.jsonl"), ["dup"]);
    assert_eq!(ids("kept.jsonl"), ["far"]);
    let training = ids("training.jsonl");
    assert_eq!(training.len(), 41);
    assert!(!training.contains(&"dup".to_string()));

    // The saved model agrees: the duplicate sits inside the learned support.
    let model = match load_model(&out.join("one_class.ngate"), None).unwrap() {
        newsgate::container::SavedModel::OneClass(m) => m,
        other => panic!("unexpected {}", other.kind()),
    };
    let docs = load_corpus(&input, CorpusFormat::Jsonl).unwrap();
    let dup = docs.iter().find(|d| d.id == "dup").unwrap();
    let v = model.features.vector(&dup.text());
    let oracle: f64 = model
        .model
        .support_vectors
        .iter()
        .zip(&model.model.coefficients)
        .map(|(x, a)| {
            let d2: f64 = x.to_dense().iter().zip(v.to_dense()).map(|(p, q)| (p - q) * (p - q)).sum();
            a * (-model.model.gamma * d2).exp()
        })
        .sum::<f64>()
        - model.model.rho;
    assert!(oracle >= 0.0, "{oracle}");

    let report = fs::read_to_string(out.join("filtration_report.txt")).unwrap();
    assert!(report.contains("fits=40\n"), "{report}");

    // Same inputs, same bytes.
    let first = dir_snapshot(&out);
    let o = newsgate(&args, None);
    assert!(o.status.success());
    assert_eq!(first, dir_snapshot(&out));
}

#[test]
fn filtrate_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let only_neutral = dir.path().join("neutral.jsonl");
    let lines: Vec<String> = (0..12)
        .map(|i| format!(r#"{{"id":"z{i}","body":"council meeting {i}","weak_label":0}}"#))
        .collect();
    fs::write(&only_neutral, lines.join("\n") + "\n").unwrap();
    let out = dir.path().join("out");
    let o = newsgate(
        &[
            "filtrate", "--filtration.input", s(&only_neutral), "--output_dir", s(&out),
            "--vocab.min_count", "1", "--filtration.folds", "3", "--filtration.repeats", "1",
            "--filtration.nu_grid", "0.5", "--filtration.gamma_grid", "1",
        ],
        None,
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(line_count(&out.join("kept.jsonl")), 0);
    assert_eq!(line_count(&out.join("quarantine.jsonl")), 0);
    assert_eq!(line_count(&out.join("training.jsonl")), 12);

    let only_positive = dir.path().join("pos.jsonl");
    write_jsonl(&only_positive, &[r#"{"id":"p","body":"good","weak_label":1}"#]);
    let o = newsgate(&["filtrate", "--filtration.input", s(&only_positive), "--output_dir", s(&out)], None);
    assert_eq!(o.status.code(), Some(1));

    let o = newsgate(
        &["filtrate", "--filtration.input", s(&only_neutral), "--output_dir", s(&out), "--filtration.folds", "20"],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("fewer than 20 folds"));
}

fn synthetic_training(dir: &Path, n: usize) -> std::path::PathBuf {
    let docs = synthetic::generate(&SyntheticConfig {
        n_docs: n,
        ..SyntheticConfig::default()
    });
    let p = dir.join("training.jsonl");
    save_corpus(&p, &docs, CorpusFormat::Jsonl).unwrap();
    p
}

#[test]
fn train_reports_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic_training(dir.path(), 200);
    let conf = dir.path().join("run.conf");
    fs::write(&conf, QUICK_CONFIG).unwrap();
    let mut snapshots = Vec::new();
    for (run, classifier) in [("a", "cnn"), ("b", "cnn"), ("svm", "dtm-svm")] {
        let out = dir.path().join(run);
        let o = newsgate(
            &["train", "--config", s(&conf), "--train.input", s(&input), "--output_dir", s(&out), "--classifier", classifier],
            None,
        );
        assert!(o.status.success(), "{}", text(&o.stderr));
        snapshots.push(dir_snapshot(&out));
    }
    assert_eq!(snapshots[0], snapshots[1]);
    let names: Vec<&str> = snapshots[0].iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["history.txt", "model.ngate", "test_report.txt", "train_report.txt"]);

    let keys = |out: &str| -> Vec<String> {
        let t = fs::read_to_string(dir.path().join(out).join("test_report.txt")).unwrap();
        EvalReport::parse_values(&t)
            .into_keys()
            .filter(|k| !k.ends_with("_undefined"))
            .collect()
    };
    assert_eq!(keys("a"), keys("svm"));
    let test = EvalReport::parse_values(&fs::read_to_string(dir.path().join("a/test_report.txt")).unwrap());
    assert_eq!(test["n"], "40");

    // evaluate reproduces the test report numbers on the same documents.
    let o = newsgate(
        &["evaluate", "--model", s(&dir.path().join("svm/model.ngate")), "--evaluate.input", s(&input), "--output_dir", s(&dir.path().join("svm"))],
        None,
    );
    assert!(o.status.success());
    assert!(text(&o.stdout).starts_with("n=200\n"));
}

#[test]
fn train_rejects_single_class_and_foreign_warm_start() {
    let dir = tempfile::tempdir().unwrap();
    let single = dir.path().join("single.jsonl");
    let lines: Vec<String> = (0..10).map(|i| format!(r#"{{"id":"{i}","body":"good {i}","label":1}}"#)).collect();
    fs::write(&single, lines.join("\n") + "\n").unwrap();
    let o = newsgate(&["train", "--train.input", s(&single), "--output_dir", s(dir.path())], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("single class"));

    let conf = dir.path().join("run.conf");
    fs::write(&conf, QUICK_CONFIG).unwrap();
    let a = synthetic_training(&dir.path().join("."), 120);
    let out_a = dir.path().join("a");
    let o = newsgate(&["train", "--config", s(&conf), "--train.input", s(&a), "--output_dir", s(&out_a)], None);
    assert!(o.status.success(), "{}", text(&o.stderr));

    // Same data: warm start is accepted.
    let out_b = dir.path().join("b");
    let o = newsgate(
        &["train", "--config", s(&conf), "--train.input", s(&a), "--output_dir", s(&out_b), "--train.init_model", s(&out_a.join("model.ngate"))],
        None,
    );
    assert!(o.status.success(), "{}", text(&o.stderr));

    // Different corpus, different vocabulary: rejected.
    let other = dir.path().join("other.jsonl");
    save_corpus(
        &other,
        &synthetic::generate(&SyntheticConfig {
            n_docs: 120,
            seed: 99,
            ..SyntheticConfig::default()
        }),
        CorpusFormat::Jsonl,
    )
    .unwrap();
    let o = newsgate(
        &["train", "--config", s(&conf), "--train.input", s(&other), "--output_dir", s(&out_b), "--train.init_model", s(&out_a.join("model.ngate"))],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("vocabulary hash mismatch"), "{}", text(&o.stderr));
}

fn trained_model(dir: &Path, classifier: &str) -> std::path::PathBuf {
    const POS: [&str; 4] = ["good", "great", "happy", "win"];
    const NEG: [&str; 4] = ["bad", "sad", "terrible", "loss"];
    const FILL: [&str; 9] = ["the", "and", "for", "a", "city", "day", "news", "people", "school"];
    let mut docs = Vec::new();
    for i in 0..80 {
        let (words, label) = if i % 2 == 0 { (POS, 1) } else { (NEG, -1) };
        let mut body: Vec<String> = (0..6).map(|k| FILL[(i * 7 + k * 4) % FILL.len()].to_string()).collect();
        body[i % 6] = words[(i / 2) % 4].to_string();
        body[(i * 5 + 3) % 6] = words[(i / 8 + 1) % 4].to_string();
        // Singletons fall below min_count, so the unknown token sees training too.
        body.insert((i * 3) % 7, format!("rare{i}"));
        body.insert((i * 5) % 8, format!("odd{i}"));
        let mut d = NewsDocument::new(format!("t{i}"), "", body.join(" "));
        d.gold_label = Some(newsgate::corpus::PolarityLabel::from_value(label).unwrap());
        docs.push(d);
    }
    let lex_docs = DocumentSet::new(docs).unwrap();
    let input = dir.join("train.jsonl");
    save_corpus(&input, &lex_docs, CorpusFormat::Jsonl).unwrap();
    let conf = dir.join("run.conf");
    fs::write(&conf, QUICK_CONFIG).unwrap();
    let out = dir.join(classifier);
    let o = newsgate(
        &["train", "--config", s(&conf), "--train.input", s(&input), "--output_dir", s(&out), "--classifier", classifier, "--cnn.epochs", "100"],
        None,
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    out.join("model.ngate")
}

#[test]
fn gate_fixture_stream() {
    let dir = tempfile::tempdir().unwrap();
    for classifier in ["dtm-svm", "cnn"] {
        let model = trained_model(dir.path(), classifier);
        let q = dir.path().join(format!("{classifier}-q.jsonl"));
        let r = dir.path().join(format!("{classifier}-r.jsonl"));
        let stream = fs::read(fixture("gate_stream.jsonl")).unwrap();
        let o = newsgate(
            &["gate", "--model", s(&model), "--gate.quarantine", s(&q), "--gate.rejects", s(&r)],
            Some(&stream),
        );
        assert!(o.status.success(), "{}", text(&o.stderr));
        let emitted: Vec<serde_json::Value> = text(&o.stdout)
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let quarantined: Vec<serde_json::Value> = fs::read_to_string(&q)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let rejected: Vec<serde_json::Value> = fs::read_to_string(&r)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(emitted.len() + quarantined.len() + rejected.len(), 10);
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0]["line"], 3);
        assert!(rejected[0]["raw"].as_str().unwrap().contains("g3"));

        let ids = |v: &[serde_json::Value]| -> Vec<String> { v.iter().map(|x| x["id"].as_str().unwrap().to_string()).collect() };
        // g8 carries no lexicon words, either side is fine.
        let mut emitted_ids = ids(&emitted);
        let mut quarantined_ids = ids(&quarantined);
        emitted_ids.retain(|id| id != "g8");
        quarantined_ids.retain(|id| id != "g8");
        assert_eq!(emitted_ids, ["g1", "g4", "g6", "g9"], "{classifier}");
        assert_eq!(quarantined_ids, ["g2", "g5", "g7", "g10"], "{classifier}");
        // Original fields first and untouched, confidence appended.
        let keys: Vec<&String> = emitted[0].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["id", "title", "body", "extra", "confidence"]);
        assert!(quarantined.iter().all(|v| v["gate_label"] == "non_positive"));
        assert!(emitted
            .iter()
            .chain(&quarantined)
            .all(|v| (0.5..=1.0).contains(&v["confidence"].as_f64().unwrap())));
        let summary = format!("input=10 emitted={} quarantined={} rejected=1", emitted.len(), quarantined.len());
        assert!(text(&o.stderr).contains(&summary), "{}", text(&o.stderr));

        let o = newsgate(&["gate", "--model", s(&model), "--gate.quarantine", s(&q), "--gate.rejects", s(&r)], Some(b""));
        assert!(o.status.success());
        assert!(o.stdout.is_empty());
        assert_eq!(line_count(&q) + line_count(&r), 0);
    }
}

#[test]
fn gate_rejects_mismatched_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained_model(dir.path(), "dtm-svm");
    let o = newsgate(&["gate", "--model", s(&model), "--vocab_hash", "0123"], Some(b"{}\n"));
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());

    let bumped = dir.path().join("v2.ngate");
    let t = fs::read_to_string(&model).unwrap().replacen("NGATE 1", "NGATE 2", 1);
    fs::write(&bumped, t).unwrap();
    let o = newsgate(&["gate", "--model", s(&bumped)], Some(b"{}\n"));
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("version"));

    let o = newsgate(&["gate", "--model", s(&dir.path().join("missing.ngate"))], Some(b""));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_command() {
    let o = newsgate(&["gradcheck"], None);
    assert!(o.status.success(), "{}", text(&o.stdout));
    let out = text(&o.stdout);
    assert_eq!(out.lines().count(), 5 * 4 + 1);
    assert!(out.ends_with("PASS\n"));

    let o = newsgate(&["gradcheck", "--gradcheck.trainable_embeddings", "true", "--gradcheck.seeds", "7"], None);
    assert!(o.status.success());
    assert!(text(&o.stdout).contains("group=embeddings"));

    let o = newsgate(&["gradcheck", "--gradcheck.epsilon", "0.5"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stdout).ends_with("FAIL\n"));
}
