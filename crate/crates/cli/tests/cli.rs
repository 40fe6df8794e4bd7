use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use seqseg_cli::{pipeline_smoke, run};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqseg"))
        .args(args)
        .env_remove("SEQSEG_CONFIG")
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Synthesizes a corpus and vocabulary and trains a tiny model in `dir`.
fn tiny_model(dir: &Path) -> (String, String, String) {
    let (corpus, vocab, model) = (
        path(dir, "c.jsonl"),
        path(dir, "v.txt"),
        path(dir, "m.json"),
    );
    ok(&[
        "synth",
        "--out",
        &corpus,
        "--docs",
        "6",
        "--sentences",
        "8-12",
        "--seed",
        "3",
    ]);
    ok(&[
        "vocab", "--corpus", &corpus, "--size", "150", "--out", &vocab,
    ]);
    ok(&[
        "train",
        "--corpus",
        &corpus,
        "--vocab",
        &vocab,
        "--out",
        &model,
        "--d-model",
        "8",
        "--layers",
        "1",
        "--heads",
        "1",
        "--d-ff",
        "16",
        "--max-seq-len",
        "48",
        "--epochs",
        "1",
        "--batch-size",
        "4",
    ]);
    (corpus, vocab, model)
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    let out = bin(&["segment", "--vocab", "v", "--corpus", "c", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
    assert_eq!(
        bin(&["synth", "--out", "x", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(["seqseg", "vocab"]), 1);
}

#[test]
fn segment_writes_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, vocab, model) = tiny_model(dir.path());
    let pred = path(dir.path(), "p.jsonl");
    let out = ok(&[
        "segment",
        "--model",
        &model,
        "--vocab",
        &vocab,
        "--corpus",
        &corpus,
        "--out",
        &pred,
        "--strategy",
        "adaptive",
        "--step",
        "10",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("config fingerprint segment sha256:"));
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&pred)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 6);
    for l in &lines {
        assert_eq!(
            l["probs"].as_array().unwrap().len(),
            l["decisions"].as_array().unwrap().len()
        );
        assert!(l["n_encoder_calls"].as_u64().unwrap() >= 1);
    }
    let report = ok(&["eval", "--pred", &pred, "--corpus", &corpus]);
    let v: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert!(v["f1"].as_f64().unwrap() >= 0.0);

    let err = bin(&[
        "segment",
        "--model",
        &model,
        "--vocab",
        &vocab,
        "--corpus",
        &corpus,
        "--out",
        &pred,
        "--strategy",
        "nope",
    ]);
    assert_eq!(err.status.code(), Some(1));
    let err = bin(&[
        "segment",
        "--model",
        &model,
        "--vocab",
        &vocab,
        "--corpus",
        &corpus,
        "--out",
        &pred,
        "--strategy",
        "cross-segment",
    ]);
    assert_eq!(
        err.status.code(),
        Some(1),
        "a sentence-head model cannot score breaks"
    );
}

#[test]
fn eval_length_mismatch_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = path(dir.path(), "c.jsonl");
    std::fs::write(
        &corpus,
        r#"{"id":"doc-a","sentences":[["x"],["y"],["z"]],"labels":[false,true,true],"source":"written"}"#,
    )
    .unwrap();
    let pred = path(dir.path(), "p.jsonl");
    std::fs::write(
        &pred,
        r#"{"id":"doc-a","probs":[0.9,0.9],"decisions":[true,true],"n_windows":1,"n_encoder_calls":1}"#,
    )
    .unwrap();
    let out = bin(&["eval", "--pred", &pred, "--corpus", &corpus]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("doc-a"));
    std::fs::write(&pred, "not json\n").unwrap();
    assert_eq!(
        bin(&["eval", "--pred", &pred, "--corpus", &corpus])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        bin(&["eval", "--pred", "/nonexistent/p", "--corpus", &corpus])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn gradcheck_passes_and_fails_by_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let report = path(dir.path(), "g.json");
    let out = ok(&["gradcheck", "--out", &report]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(
        bin(&["gradcheck", "--tolerance", "0"]).status.code(),
        Some(3)
    );
    ok(&["gradcheck", "--use-phone", "--coords", "5"]);
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = path(dir.path(), "s.conf");
    std::fs::write(&conf, "# tiny\nd_model = 8\nn_layers = 1\nn_heads = 1\n").unwrap();
    let fp = |extra: &[&str]| -> String {
        let mut args = vec!["gradcheck", "--coords", "2", "--config", &conf];
        args.extend(extra);
        let out = ok(&args);
        String::from_utf8_lossy(&out.stderr)
            .lines()
            .find(|l| l.starts_with("config fingerprint"))
            .unwrap()
            .to_string()
    };
    assert_eq!(fp(&[]), fp(&[]));
    assert_ne!(fp(&[]), fp(&["--seed", "5"]));
    assert_eq!(
        fp(&[]),
        fp(&["--d-model", "8"]),
        "a flag equal to the file value changes nothing"
    );

    std::fs::write(&conf, "epochs = 1\nwidth = 3\n").unwrap();
    let out = bin(&["gradcheck", "--config", &conf]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = Command::new(env!("CARGO_BIN_EXE_seqseg"))
        .args(["gradcheck"])
        .env("SEQSEG_CONFIG", &conf)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(1),
        "the environment supplies the default path"
    );
}

#[test]
fn convert_splits_and_noises_without_touching_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (all, lex) = (path(dir.path(), "all.jsonl"), path(dir.path(), "lex.txt"));
    ok(&[
        "synth",
        "--out",
        &all,
        "--docs",
        "10",
        "--lexicon-out",
        &lex,
        "--seed",
        "2",
    ]);
    let before = std::fs::read(&all).unwrap();
    let (train, test) = (
        path(dir.path(), "train.jsonl"),
        path(dir.path(), "test.jsonl"),
    );
    ok(&[
        "convert",
        "--input",
        &all,
        "--format",
        "records",
        "--out",
        &train,
        "--test-docs",
        "3",
        "--test-out",
        &test,
        "--lexicon",
        &lex,
        "--noise",
        "0.5",
    ]);
    assert_eq!(std::fs::read(&all).unwrap(), before);
    let lines = |p: &str| {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let (orig, tr, te) = (lines(&all), lines(&train), lines(&test));
    assert_eq!((tr.len(), te.len()), (7, 3));
    assert_ne!(tr[..], orig[..7], "noise reached the train split");
    assert_ne!(te[..], orig[7..], "noise reached the test split");
    let id = |l: &str| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].clone();
    assert_eq!(
        te.iter().map(|l| id(l)).collect::<Vec<_>>(),
        orig[7..].iter().map(|l| id(l)).collect::<Vec<_>>()
    );
    let out = bin(&[
        "convert", "--input", &all, "--format", "records", "--out", &all,
    ]);
    assert_eq!(out.status.code(), Some(1), "refuses to overwrite its input");
    assert_eq!(std::fs::read(&all).unwrap(), before);
}

#[test]
fn convert_wiki_directory() {
    let dir = tempfile::tempdir().unwrap();
    let wiki = dir.path().join("wiki");
    std::fs::create_dir(&wiki).unwrap();
    std::fs::write(
        wiki.join("b.txt"),
        "== A ==\nOne two. Three!\n== B ==\nFour five.\n",
    )
    .unwrap();
    std::fs::write(wiki.join("a.txt"), "== A ==\nAlpha. Beta.\n").unwrap();
    std::fs::write(wiki.join("skip.md"), "ignored").unwrap();
    let out = path(dir.path(), "w.jsonl");
    ok(&[
        "convert",
        "--input",
        &wiki.to_string_lossy(),
        "--out",
        &out,
        "--source",
        "spoken",
    ]);
    let recs: Vec<serde_json::Value> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0]["id"], "a");
    assert_eq!(recs[1]["labels"], serde_json::json!([false, true, true]));
    assert_eq!(recs[1]["source"], "spoken");
}

#[test]
fn aggregate_with_screening() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = path(dir.path(), "c.jsonl");
    std::fs::write(
        &corpus,
        r#"{"id":"d","sentences":[["a"],["b"],["c"],["d"]],"labels":[false,false,false,true],"source":"spoken"}"#,
    )
    .unwrap();
    let ann = path(dir.path(), "ann.jsonl");
    let rows = [
        ("w1", "[true,false,false,true]"),
        ("w2", "[true,false,false,true]"),
        ("w3", "[true,false,true,true]"),
        ("w4", "[true,false,false,true]"),
        ("bad", "[false,true,true,true]"),
    ];
    let text: String = rows
        .iter()
        .map(|(a, v)| format!("{{\"doc_id\":\"d\",\"annotator_id\":\"{a}\",\"votes\":{v}}}\n"))
        .collect();
    std::fs::write(&ann, text).unwrap();
    let out = path(dir.path(), "agg.jsonl");
    ok(&[
        "aggregate",
        "--annotations",
        &ann,
        "--corpus",
        &corpus,
        "--out",
        &out,
    ]);
    let v: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(v["labels"], serde_json::json!([true, false, false, true]));

    let screen_ref = path(dir.path(), "ref.jsonl");
    std::fs::write(
        &screen_ref,
        r#"{"id":"s","sentences":[["a"],["b"],["c"]],"labels":[true,false,true],"source":"spoken"}"#,
    )
    .unwrap();
    let screen = path(dir.path(), "screen.jsonl");
    let text: String = ["w1", "w2", "w3", "w4"]
        .iter()
        .map(|a| {
            format!("{{\"doc_id\":\"s\",\"annotator_id\":\"{a}\",\"votes\":[true,false,true]}}\n")
        })
        .chain(std::iter::once(
            "{\"doc_id\":\"s\",\"annotator_id\":\"bad\",\"votes\":[false,true,true]}\n".to_string(),
        ))
        .collect();
    std::fs::write(&screen, text).unwrap();
    let run_out = ok(&[
        "aggregate",
        "--annotations",
        &ann,
        "--corpus",
        &corpus,
        "--out",
        &out,
        "--screen",
        &screen,
        "--screen-ref",
        &screen_ref,
        "--positive-votes",
        "4",
    ]);
    assert!(String::from_utf8_lossy(&run_out.stderr).contains("screening bad: F1 0.0000 failed"));
    let v: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(v["labels"], serde_json::json!([true, false, false, true]));
    assert_eq!(
        bin(&[
            "aggregate",
            "--annotations",
            &ann,
            "--corpus",
            &corpus,
            "--out",
            &out,
            "--top-k",
            "9"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn bench_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, vocab, model) = tiny_model(dir.path());
    let out = path(dir.path(), "bench.json");
    let series: PathBuf = dir.path().join("series");
    let res = ok(&[
        "bench",
        "--model",
        &model,
        "--vocab",
        &vocab,
        "--corpus",
        &corpus,
        "--steps",
        "2,4",
        "--out",
        &out,
        "--series-dir",
        &series.to_string_lossy(),
        "--workers",
        "2",
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert!(String::from_utf8_lossy(&res.stdout).lines().count() >= 5);
    let f1 = std::fs::read_to_string(series.join("adaptive_f1.tsv")).unwrap();
    assert_eq!(f1.lines().count(), 2);
    assert_eq!(
        bin(&[
            "bench", "--model", &model, "--vocab", &vocab, "--corpus", &corpus, "--steps", "2,2",
            "--out", &out
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn smoke_pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline_smoke(a.path()).unwrap();
    let second = pipeline_smoke(b.path()).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.bench_rows, 2 * first.steps.len() + 1);
    assert_eq!(first.eval_reports.len(), 2);
}
