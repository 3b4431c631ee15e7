use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use ctrlsum::corpus::{read_corpus, write_corpus, ArticleRecord, ControlSpec, LengthBinning};
use ctrlsum_cli::commands::*;
use ctrlsum_cli::config::RunConfig;

fn sents(text: &[&str]) -> Vec<Vec<String>> {
    text.iter()
        .map(|s| s.split_whitespace().map(String::from).collect())
        .collect()
}

fn record(id: &str, article: &[&str], summary: &[&str]) -> ArticleRecord {
    ArticleRecord {
        id: id.into(),
        source_label: 0,
        article_sentences: sents(article),
        summary_sentences: sents(summary),
        entity_mentions: BTreeMap::new(),
    }
}

fn config(pairs: &[(&str, &str)]) -> RunConfig {
    let mut c = RunConfig::default();
    for (k, v) in pairs {
        c.set(k, v).unwrap();
    }
    c
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn preprocessing_is_byte_identical_for_equal_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.jsonl");
    cmd_synth(&config(&[
        ("task", "entity_facts"),
        ("size", "60"),
        ("seed", "4"),
        ("out", s(&corpus)),
    ]))
    .unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        cmd_preprocess(&config(&[
            ("corpus", s(&corpus)),
            ("dev_corpus", s(&corpus)),
            ("out", s(&out)),
            ("entity_policy", "lead3_random"),
            ("bpe_merges", "40"),
            ("seed", "9"),
        ]))
        .unwrap();
        let mut files = dir_bytes(&out);
        // the rendered config names the output directory itself
        files.remove(CONFIG_FILE);
        files
    };
    let a = run("a");
    assert!(a.contains_key(TRAIN_FILE) && a.contains_key(MERGES_FILE) && a.contains_key(BINS_FILE));
    assert_eq!(a, run("b"));
}

#[test]
fn ten_bins_balanced_on_distinct_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    let records: Vec<ArticleRecord> = (1..=137)
        .map(|n| {
            let summary = vec!["x"; n].join(" ");
            record(&format!("r{n}"), &["a b c ."], &[summary.as_str()])
        })
        .collect();
    let corpus = tmp.path().join("c.jsonl");
    write_corpus(&corpus, &records).unwrap();
    let out = tmp.path().join("prep");
    cmd_preprocess(&config(&[
        ("corpus", s(&corpus)),
        ("out", s(&out)),
        ("use_bpe", "false"),
    ]))
    .unwrap();
    let bins = LengthBinning::read(&out.join(BINS_FILE)).unwrap();
    assert_eq!(bins.num_bins(), 10);
    let mut pop = [0usize; 10];
    for n in 1..=137 {
        pop[bins.assign(n)] += 1;
    }
    let (lo, hi) = (137 / 10 - 1, 137usize.div_ceil(10) + 1);
    assert!(pop.iter().all(|&p| (lo..=hi).contains(&p)), "{pop:?}");
}

#[test]
fn remainder_preprocessing_uses_alignment_boundaries() {
    let tmp = tempfile::tempdir().unwrap();
    let article: Vec<String> = (0..22).map(|i| format!("s{i} content{i} .")).collect();
    let article: Vec<&str> = article.iter().map(String::as_str).collect();
    let rec = record(
        "doc",
        &article,
        &["s0 content0 .", "s10 content10 .", "s20 content20 ."],
    );
    let corpus = tmp.path().join("c.jsonl");
    write_corpus(&corpus, &[rec]).unwrap();
    let out = tmp.path().join("prep");
    cmd_preprocess(&config(&[
        ("corpus", s(&corpus)),
        ("out", s(&out)),
        ("layout", "remainder_only"),
        ("use_bpe", "false"),
    ]))
    .unwrap();
    let controls = fs::read_to_string(out.join("train.controls.jsonl")).unwrap();
    let ids: Vec<String> = controls
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(ids, ["doc#5", "doc#15"]);
    let aligned = cmd_align(&config(&[
        ("corpus", s(&corpus)),
        ("out", s(&tmp.path().join("a.jsonl"))),
    ]))
    .unwrap();
    assert_eq!(aligned[0].alignment, [0, 10, 20]);
    assert_eq!(aligned[0].boundaries, [5, 15]);
}

#[test]
fn align_reproduces_lcs_indices() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.jsonl");
    write_corpus(
        &corpus,
        &[
            record("one", &["a b c", "d e f", "g h"], &["d e"]),
            record("two", &["a b c", "d e f", "g h"], &["x y", "g h", "a b c"]),
        ],
    )
    .unwrap();
    let out = tmp.path().join("a.jsonl");
    let aligned = cmd_align(&config(&[("corpus", s(&corpus)), ("out", s(&out))])).unwrap();
    assert_eq!(aligned[0].alignment, [1]);
    assert_eq!(aligned[1].alignment, [0, 2, 0]);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 2);
}

fn decode(id: &str, text: &str) -> DecodeRecord {
    DecodeRecord {
        id: id.into(),
        control: ControlSpec::default(),
        ids: Vec::new(),
        text: text.into(),
        surface: text.into(),
        score: 0.0,
        fallback: false,
        empty_remainder: false,
    }
}

#[test]
fn evaluate_reproduces_hand_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.jsonl");
    write_corpus(
        &corpus,
        &[
            record("p", &["x ."], &["the cat sat"]),
            record("q", &["x ."], &["a b c d e"]),
            record("r", &["x ."], &["a a"]),
        ],
    )
    .unwrap();
    let decodes = tmp.path().join("d.jsonl");
    write_decodes(
        &decodes,
        &[decode("p", "the cat"), decode("q", "a c e"), decode("r", "a a a")],
    )
    .unwrap();
    let out = tmp.path().join("report.tsv");
    let rep = cmd_evaluate(&config(&[
        ("corpus", s(&corpus)),
        ("decodes", s(&decodes)),
        ("out", s(&out)),
    ]))
    .unwrap();
    let close = |m: &str, v: f64| assert!((rep.get(m).unwrap() - v).abs() < 1e-12, "{m}");
    close("rouge1_f1", (0.8 + 0.75 + 0.8) / 3.0);
    close("rouge2_f1", (2.0 / 3.0 + 0.0 + 2.0 / 3.0) / 3.0);
    close("rougeL_f1", (0.8 + 0.75 + 0.8) / 3.0);
    close("rouge1_p", (1.0 + 1.0 + 2.0 / 3.0) / 3.0);
    let tsv = fs::read_to_string(&out).unwrap();
    assert!(tsv.starts_with("metric\tvalue\tcount\n"));
    assert!(tsv.contains("rouge1_f1\t0.783333\t3\n"));

    write_decodes(&decodes, &[decode("missing", "a")]).unwrap();
    assert!(cmd_evaluate(&config(&[("corpus", s(&corpus)), ("decodes", s(&decodes))])).is_err());
}

#[test]
fn entity_rate_and_curve_from_decodes() {
    let mut d = vec![decode("p", "@entity1 x"), decode("p", "y"), decode("p", "@entity1")];
    for (i, x) in d.iter_mut().enumerate() {
        x.control.entities = vec!["@entity1".into()];
        x.control.length_bin = Some(i % 2);
    }
    let recs = vec![record("p", &["@entity1 x ."], &["@entity1 x ."])];
    let rep = evaluate_decodes(&RunConfig::default(), &d, &recs).unwrap();
    assert!((rep.get("entity_rate").unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let curve = length_curve(&d, 3);
    assert_eq!(curve[..2], [1.5, 1.0]);
    assert!(curve[2].is_nan());
}

#[test]
fn end_to_end_on_a_tiny_task() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n);
    for (name, seed) in [("train.jsonl", "1"), ("dev.jsonl", "2")] {
        cmd_synth(&config(&[
            ("task", "style_pair"),
            ("size", "40"),
            ("seed", seed),
            ("out", s(&p(name))),
        ]))
        .unwrap();
    }
    cmd_preprocess(&config(&[
        ("corpus", s(&p("train.jsonl"))),
        ("dev_corpus", s(&p("dev.jsonl"))),
        ("out", s(&p("data"))),
        ("source_control", "true"),
    ]))
    .unwrap();
    let (data, model) = (p("data"), p("model"));
    let train_cfg = [
        ("data_dir", s(&data)),
        ("out", s(&model)),
        ("hidden_size", "16"),
        ("embed_size", "16"),
        ("max_epochs", "2"),
        ("batch_tokens", "200"),
        ("save_every_epoch", "true"),
    ];
    let report = cmd_train(&config(&train_cfg)).unwrap();
    assert!(!report.epochs.is_empty());
    let log = fs::read_to_string(p("model").join(TRAIN_LOG_FILE)).unwrap();
    assert!(log.starts_with("epoch\ttrain_nll\tval_ppl\tlr\n"));
    let epoch1 = fs::read(p("model").join(epoch_checkpoint(1))).unwrap();

    let mut again = train_cfg.to_vec();
    let other = p("model2");
    again[1] = ("out", s(&other));
    cmd_train(&config(&again)).unwrap();
    assert_eq!(epoch1, fs::read(other.join(epoch_checkpoint(1))).unwrap());

    let summarize = |extra: &[(&str, &str)]| {
        let mut c = config(&[
            ("data_dir", s(&p("data"))),
            ("checkpoint", s(&p("model").join(BEST_CHECKPOINT))),
            ("corpus", s(&p("dev.jsonl"))),
            ("out", s(&p("decodes.jsonl"))),
            ("max_len", "12"),
        ]);
        for (k, v) in extra {
            c.set(k, v).unwrap();
        }
        cmd_summarize(&c).unwrap()
    };
    let flagged = summarize(&[("style", "1")]);
    assert_eq!(flagged.len(), 40);
    assert!(flagged
        .iter()
        .all(|d| d.control.source_style == Some(1) && d.ids.len() <= 12));
    let reference = summarize(&[("control", "reference")]);
    let dev = read_corpus(&p("dev.jsonl")).unwrap();
    assert!(reference
        .iter()
        .zip(&dev)
        .all(|(d, r)| d.control.source_style == Some(r.source_label)));
    assert_eq!(reference, summarize(&[("control", "reference")]));
    let rep = cmd_evaluate(&config(&[
        ("corpus", s(&p("dev.jsonl"))),
        ("decodes", s(&p("decodes.jsonl"))),
        ("byte_limits", "75"),
    ]))
    .unwrap();
    assert!(rep.get("rouge1_f1").unwrap() >= 0.0);
    assert!(rep.get("rouge1_recall@75b").is_some());

    let missing = config(&[
        ("data_dir", s(&p("data"))),
        ("checkpoint", s(&p("nope.ckpt"))),
        ("corpus", s(&p("dev.jsonl"))),
        ("out", s(&p("x.jsonl"))),
    ]);
    assert!(cmd_summarize(&missing).is_err());
}

#[test]
fn binary_runs_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c.jsonl");
    let bin = env!("CARGO_BIN_EXE_ctrlsum");
    let ok = Command::new(bin)
        .args([
            "synth",
            "--task",
            "length_copy",
            "--size",
            "5",
            "--seed",
            "3",
            "--out",
            s(&out),
        ])
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(read_corpus(&out).unwrap().len(), 5);
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "task = length_copy\nwidth = 3\n").unwrap();
    let bad = Command::new(bin)
        .args(["synth", "--config", s(&cfg), "--out", s(&out)])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown config key"));
    let missing = Command::new(bin).args(["train"]).output().unwrap();
    assert!(!missing.status.success());
}
