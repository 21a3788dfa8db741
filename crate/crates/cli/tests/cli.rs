use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use veritas_cli::commands::{self, Subset};
use veritas_cli::RunConfig;
use veritas_core::ingest::{split, write_csv, Dataset, Record, SplitSpec};
use veritas_core::synthetic::{generate, SyntheticSpec};

fn veritas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veritas"))
        .args(args)
        .env_remove("VERITAS_LOG")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn corpus() -> Dataset {
    generate(&SyntheticSpec {
        n_docs: 60,
        doc_len: 10,
        class_pool: 8,
        noise_pool: 8,
        ..SyntheticSpec::default()
    })
}

fn write_dataset(dir: &Path, d: &Dataset) -> PathBuf {
    let path = dir.join("news.csv");
    write_csv(std::fs::File::create(&path).unwrap(), d, "text", "type").unwrap();
    path
}

/// Writes a small-model config pointing at `data`.
fn write_config(dir: &Path, data: &Path) -> PathBuf {
    let path = dir.join("run.conf");
    let text = format!(
        "# tiny run\n\
         data.path = {}\n\
         model.seq_len = 12\n\
         model.d_model = 8\n\
         model.gru_hidden = 4\n\
         model.n_heads = 2\n\
         model.d_ff = 16\n\
         model.n_blocks = 1\n\
         train.max_epochs = 3\n\
         train.batch_size = 16\n\
         train.lr0 = 0.01\n\
         train.lr_milestones = 2\n\
         bayes.mc_samples = 3\n",
        data.display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

struct Setup {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    config: PathBuf,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = write_dataset(&root, &corpus());
    let config = write_config(&root, &data);
    Setup {
        _dir: dir,
        root,
        data,
        config,
    }
}

fn train(s: &Setup, out: &str, extra: &[&str]) -> (PathBuf, Output) {
    let out_dir = s.root.join(out);
    let mut args = vec![
        "train",
        "--config",
        s.config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = veritas(&args);
    (out_dir, o)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

#[test]
fn train_writes_every_artifact() {
    let s = setup();
    let (out, o) = train(&s, "a", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "curves.csv",
        "confusion_train.csv",
        "confusion_test.csv",
        "model.bft",
        "model_best.bft",
        "run.json",
        "vocab.tsv",
        "split.tsv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let lines: Vec<&str> = curves.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_acc,test_acc,lr");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].ends_with(",0.001000"), "{}", lines[3]);
    let m = manifest(&out);
    assert_eq!(m["metrics"]["epochs_run"], 3);
    assert_eq!(m["metrics"]["n_train"], 42);
    assert_eq!(m["config"]["model.d_model"], "8");
    assert_eq!(m["config"]["bayes.kl_weight"], "1");
}

#[test]
fn manifest_lists_every_key_and_reruns_bit_exactly() {
    let s = setup();
    let (a, o) = train(&s, "a", &["--seed", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&a);
    let keys: Vec<&str> = RunConfig::default().entries().iter().map(|(k, _)| *k).collect();
    let recorded = m["config"].as_object().unwrap();
    assert_eq!(recorded.len(), keys.len());
    assert!(keys.iter().all(|k| recorded.contains_key(*k)));
    assert_eq!(recorded["train.seed"], "11");

    let b = s.root.join("b");
    let o = veritas(&[
        "train",
        "--config",
        a.join("run.json").to_str().unwrap(),
        "--out-dir",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "curves.csv",
        "model.bft",
        "model_best.bft",
        "confusion_test.csv",
        "vocab.tsv",
        "split.tsv",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(m["metrics"], manifest(&b)["metrics"]);
}

#[test]
fn bayes_override_is_recorded() {
    let s = setup();
    let (det, _) = train(&s, "det", &[]);
    let (bay, o) = train(&s, "bay", &["--set", "bayes.enabled=true"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (md, mb) = (manifest(&det), manifest(&bay));
    assert_eq!(md["config"]["bayes.enabled"], "false");
    assert_eq!(mb["config"]["bayes.enabled"], "true");
    let differing: Vec<&String> = md["config"]
        .as_object()
        .unwrap()
        .iter()
        .filter(|(k, v)| mb["config"][k.as_str()] != **v)
        .map(|(k, _)| k)
        .collect();
    assert_eq!(differing, ["bayes.enabled", "output.dir"]);
    // Same split and vocabulary; only the head parameterization differs.
    for f in ["split.tsv", "vocab.tsv"] {
        assert_eq!(std::fs::read(det.join(f)).unwrap(), std::fs::read(bay.join(f)).unwrap());
    }
}

#[test]
fn missing_dataset_exits_2_naming_the_path() {
    let s = setup();
    let o = veritas(&[
        "train",
        "--config",
        s.config.to_str().unwrap(),
        "--set",
        "data.path=/nonexistent/news.csv",
        "--out-dir",
        s.root.join("x").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/news.csv"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let s = setup();
    for bad in ["model.depth=3", "model.d_model=7", "train.lr_milestones=5"] {
        let (_, o) = train(&s, "x", &["--set", bad]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
        assert!(stderr(&o).starts_with("error: "), "{bad}: {}", stderr(&o));
    }
    let o = veritas(&["train", "--out-dir", s.root.join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("data.path"));
}

#[test]
fn diverging_run_exits_3() {
    let s = setup();
    let (_, o) = train(
        &s,
        "x",
        &[
            "--set",
            "train.lr0=1e300",
            "--set",
            "train.max_epochs=10",
            "--set",
            "train.lr_milestones=",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite loss"));
}

#[test]
fn evaluate_on_the_test_split_matches_the_run() {
    let s = setup();
    for extra in [&[][..], &["--set", "bayes.enabled=true"][..]] {
        let (out, o) = train(&s, "a", extra);
        assert!(o.status.success(), "{}", stderr(&o));
        let m = manifest(&out);
        let mut cfg = RunConfig::load(&s.config).unwrap();
        cfg.out_dir = out.clone();
        let report = commands::evaluate(&cfg, &out.join("model.bft"), Subset::Test).unwrap();
        assert_eq!(report.accuracy, m["metrics"]["final_test_accuracy"].as_f64().unwrap());
        assert_eq!(
            std::fs::read(out.join("confusion_eval.csv")).unwrap(),
            std::fs::read(out.join("confusion_test.csv")).unwrap()
        );

        let o = veritas(&[
            "evaluate",
            "--config",
            s.config.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--subset",
            "test",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let printed = stdout(&o);
        assert!(
            printed.contains(&format!("accuracy\t{}\n", report.accuracy)),
            "{printed}"
        );
        assert!(printed.contains("records\t18\n"));
    }
}

#[test]
fn corrupted_checkpoint_exits_2() {
    let s = setup();
    let (out, _) = train(&s, "a", &[]);
    let ck = out.join("model.bft");
    let mut bytes = std::fs::read(&ck).unwrap();
    let n = bytes.len();
    bytes[n - 20] ^= 0x40;
    std::fs::write(&ck, bytes).unwrap();
    let o = veritas(&[
        "evaluate",
        "--config",
        s.config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn unmapped_label_exits_2_naming_the_row() {
    let s = setup();
    let (out, _) = train(&s, "a", &[]);
    let bad = s.root.join("bad.csv");
    std::fs::write(&bad, "text,type\nsome words here,real\nother words,satire\n").unwrap();
    let o = veritas(&[
        "evaluate",
        "--config",
        s.config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--dataset",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("row 2") && err.contains("satire"), "{err}");
}

#[test]
fn mismatched_vocabulary_is_rejected() {
    let s = setup();
    let (out, _) = train(&s, "a", &[]);
    let vocab = out.join("vocab.tsv");
    let text = std::fs::read_to_string(&vocab).unwrap();
    std::fs::write(&vocab, text.replacen("n_docs=42", "n_docs=43", 1)).unwrap();
    let ck = out.join("model.bft");
    let o = veritas(&["predict", "--checkpoint", ck.to_str().unwrap(), "--text", "ver01"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
}

#[test]
fn predict_agrees_with_training_time_predictions() {
    let s = setup();
    let (out, o) = train(&s, "a", &["--set", "train.max_epochs=6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = out.join("model.bft");
    let d = corpus();
    let texts: Vec<String> = d.records.iter().take(8).map(|r| r.text.clone()).collect();
    let preds = commands::predict(&ck, &texts).unwrap();
    // Confusion matrix from the training run counts these predictions too;
    // here check each one against a fresh single-text call.
    for (t, p) in texts.iter().zip(&preds) {
        assert!((0.5..=1.0).contains(&p.probability));
        let single = commands::predict(&ck, std::slice::from_ref(t)).unwrap()[0];
        assert_eq!(single.label, p.label);
    }
    let correct = d
        .records
        .iter()
        .take(8)
        .zip(&preds)
        .filter(|(r, p)| r.label == p.label)
        .count();
    assert!(correct >= 7, "{correct}/8");

    let o = veritas(&[
        "predict",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--text",
        &texts[0],
        "--text",
        &texts[1],
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    let (label, prob) = lines[0].split_once('\t').unwrap();
    assert_eq!(label, preds[0].label.to_string());
    assert_eq!(prob, format!("{:.6}", preds[0].probability));

    let file = s.root.join("inputs.txt");
    std::fs::write(&file, format!("{}\n\n{}\n", texts[0], texts[1])).unwrap();
    let f = veritas(&[
        "predict",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--file",
        file.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&f), stdout(&o));
}

#[test]
fn predict_rejects_empty_text() {
    let s = setup();
    let (out, _) = train(&s, "a", &[]);
    let ck = out.join("model.bft");
    for text in ["", "the and of", "unseen words only"] {
        let o = veritas(&["predict", "--checkpoint", ck.to_str().unwrap(), "--text", text]);
        assert_eq!(o.status.code(), Some(2), "{text:?}");
        assert!(stdout(&o).is_empty());
    }
}

#[test]
fn vocabulary_never_sees_test_only_tokens() {
    let mut d = corpus();
    let spec = SplitSpec::default();
    let s = split(&d, &spec).unwrap();
    for &i in &s.test_indices[..3] {
        let r = &d.records[i];
        d.records[i] = Record::new(format!("{} leakmarker", r.text), r.label).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), &d);
    let config = write_config(dir.path(), &data);
    let out = dir.path().join("out");
    let o = veritas(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let vocab = std::fs::read_to_string(out.join("vocab.tsv")).unwrap();
    assert!(!vocab.contains("leakmarker"));

    // The same token planted in train records is kept.
    let mut d2 = corpus();
    for &i in &s.train_indices[..3] {
        let r = &d2.records[i];
        d2.records[i] = Record::new(format!("{} leakmarker", r.text), r.label).unwrap();
    }
    write_dataset(dir.path(), &d2);
    let o = veritas(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(out.join("vocab.tsv"))
        .unwrap()
        .contains("leakmarker\t"));
}

#[test]
fn vectorize_dumps_one_row_per_record() {
    let s = setup();
    let out = s.root.join("vec");
    let o = veritas(&[
        "vectorize",
        "--config",
        s.config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(out.join("vectors.tsv")).unwrap();
    let rows: Vec<&str> = rows.lines().collect();
    assert_eq!(rows.len(), 60);
    assert_eq!(
        rows.iter().filter(|r| r.split('\t').nth(1) == Some("train")).count(),
        42
    );
    for r in &rows {
        let fields: Vec<&str> = r.split('\t').collect();
        assert_eq!(fields.len(), 4);
        let norm: f64 = fields[3]
            .split(' ')
            .map(|e| e.split_once(':').unwrap().1.parse::<f64>().unwrap().powi(2))
            .sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    let again = s.root.join("vec2");
    let o = veritas(&[
        "vectorize",
        "--config",
        s.config.to_str().unwrap(),
        "--out-dir",
        again.to_str().unwrap(),
        "--dataset",
        s.data.to_str().unwrap(),
        "--vocab",
        out.join("vocab.tsv").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(out.join("vectors.tsv")).unwrap(),
        std::fs::read(again.join("vectors.tsv")).unwrap()
    );
}
