use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde_json::json;
use veritas_core::ingest::{load_csv, split, write_split_manifest, Dataset, Label, Split};
use veritas_core::model::Model;
use veritas_core::textpipe::{tfidf_vector, Vocabulary};
use veritas_core::train::{
    argmax, encode_text, eval_seed, evaluate as evaluate_model, fit_vocabulary, fit_with, load_checkpoint,
    predict_proba, save_checkpoint, vectorize as vectorize_split, Checkpoint, ConfusionMatrix, History,
};

use crate::{CliError, RunConfig};

pub const CURVES_FILE: &str = "curves.csv";
pub const CONFUSION_TRAIN_FILE: &str = "confusion_train.csv";
pub const CONFUSION_TEST_FILE: &str = "confusion_test.csv";
pub const CONFUSION_EVAL_FILE: &str = "confusion_eval.csv";
pub const CHECKPOINT_FILE: &str = "model.bft";
pub const BEST_CHECKPOINT_FILE: &str = "model_best.bft";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const SPLIT_FILE: &str = "split.tsv";
pub const MANIFEST_FILE: &str = "run.json";
pub const VECTORS_FILE: &str = "vectors.tsv";

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn load_split(cfg: &RunConfig) -> Result<(Dataset, Split), CliError> {
    let data = load_csv(cfg.dataset_path()?, &cfg.data.schema())?;
    let s = split(&data, &cfg.train.split)?;
    Ok((data, s))
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: History,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub confusion_train: ConfusionMatrix,
    pub confusion_test: ConfusionMatrix,
    pub best_epoch: Option<usize>,
    pub out_dir: PathBuf,
}

/// Split, fit the vocabulary on the train side only, train, and write every
/// run artifact into `cfg.out_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    let pipeline = cfg.pipeline()?;
    let (_, s) = load_split(cfg)?;
    let out = &cfg.out_dir;
    create_out_dir(out)?;
    write_file(&out.join(SPLIT_FILE), |w| write_split_manifest(w, &s, &cfg.train.split))?;

    let vocab = fit_vocabulary(&s.train, &pipeline)?;
    write_file(&out.join(VOCAB_FILE), |w| vocab.export(w))?;
    let seq_len = cfg.model.seq_len;
    let train_set = vectorize_split(&s.train, &pipeline, &vocab, seq_len);
    let test_set = vectorize_split(&s.test, &pipeline, &vocab, seq_len);
    info!(
        "{} train / {} test records, vocabulary of {}",
        train_set.len(),
        test_set.len(),
        vocab.len()
    );

    let model = Model::<f64>::new(cfg.model.clone(), vocab.len(), &cfg.bayes, cfg.train.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let outcome = fit_with(model, &train_set, &test_set, &cfg.train, &cfg.bayes, |r| {
        info!(
            "epoch {:>3}  loss {:.6}  train {:.4}  test {:.4}  lr {}",
            r.epoch, r.train_loss, r.train_accuracy, r.test_accuracy, r.lr
        );
    })?;

    let seed = cfg.train.seed;
    let (train_accuracy, confusion_train) = evaluate_model(&outcome.model, &train_set, &cfg.bayes, seed)?;
    let (test_accuracy, confusion_test) = evaluate_model(&outcome.model, &test_set, &cfg.bayes, seed)?;

    write_file(&out.join(CURVES_FILE), |w| outcome.history.write_curves(w))?;
    write_file(&out.join(CONFUSION_TRAIN_FILE), |w| confusion_train.write_csv(w))?;
    write_file(&out.join(CONFUSION_TEST_FILE), |w| confusion_test.write_csv(w))?;
    let save = |path: PathBuf, model: &Model<f64>| {
        save_checkpoint(&path, model, &vocab, &pipeline, &cfg.train, &cfg.bayes, VOCAB_FILE)
    };
    save(out.join(CHECKPOINT_FILE), &outcome.model)?;
    if let Some((_, best)) = &outcome.best {
        save(out.join(BEST_CHECKPOINT_FILE), best)?;
    }

    let best_epoch = outcome.best.as_ref().map(|(e, _)| *e);
    let config: serde_json::Map<String, serde_json::Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.into()))
        .collect();
    let last = outcome.history.last();
    let manifest = json!({
        "config": config,
        "metrics": {
            "epochs_run": outcome.history.len(),
            "final_train_loss": last.map(|r| r.train_loss),
            "final_train_accuracy": train_accuracy,
            "final_test_accuracy": test_accuracy,
            "best_epoch": best_epoch,
            "best_test_accuracy": best_epoch.map(|e| outcome.history.records[e - 1].test_accuracy),
            "n_train": train_set.len(),
            "n_test": test_set.len(),
            "vocab_size": vocab.len(),
        },
        "vocab_hash": vocab.content_hash(),
        "files": {
            "curves": CURVES_FILE,
            "confusion_train": CONFUSION_TRAIN_FILE,
            "confusion_test": CONFUSION_TEST_FILE,
            "checkpoint": CHECKPOINT_FILE,
            "best_checkpoint": best_epoch.map(|_| BEST_CHECKPOINT_FILE),
            "vocabulary": VOCAB_FILE,
            "split": SPLIT_FILE,
        },
    });
    write_file(&out.join(MANIFEST_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)
    })?;

    Ok(TrainReport {
        history: outcome.history,
        train_accuracy,
        test_accuracy,
        confusion_train,
        confusion_test,
        best_epoch,
        out_dir: out.clone(),
    })
}

/// Loads a checkpoint and the vocabulary file it names, checking that the
/// vocabulary is the one it was trained with.
pub fn load_run(checkpoint: &Path) -> Result<(Checkpoint<f64>, Vocabulary), CliError> {
    let ck = load_checkpoint::<f64>(checkpoint)?;
    let vocab_path = checkpoint
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&ck.meta.vocab_file);
    let text = std::fs::read_to_string(&vocab_path).map_err(|e| CliError::io(&vocab_path, e))?;
    let vocab = Vocabulary::parse(&text)?;
    if vocab.content_hash() != ck.meta.vocab_hash {
        return Err(CliError::Input(format!(
            "{} does not match the vocabulary recorded in {}",
            vocab_path.display(),
            checkpoint.display()
        )));
    }
    Ok((ck, vocab))
}

/// Which records of the dataset to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub records: usize,
}

/// Scores `cfg.data.path` with a checkpoint and writes `confusion_eval.csv`
/// to `cfg.out_dir`. Train/test subsets are re-derived from the split
/// settings stored in the checkpoint.
pub fn evaluate(cfg: &RunConfig, checkpoint: &Path, subset: Subset) -> Result<EvalReport, CliError> {
    let (ck, vocab) = load_run(checkpoint)?;
    let data = load_csv(cfg.dataset_path()?, &cfg.data.schema())?;
    let data = match subset {
        Subset::All => data,
        Subset::Train => split(&data, &ck.meta.train.split)?.train,
        Subset::Test => split(&data, &ck.meta.train.split)?.test,
    };
    let examples = vectorize_split(&data, &ck.meta.pipeline, &vocab, ck.meta.model.seq_len);
    let (accuracy, confusion) = evaluate_model(&ck.model, &examples, &ck.meta.bayes, ck.meta.train.seed)?;
    create_out_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join(CONFUSION_EVAL_FILE), |w| confusion.write_csv(w))?;
    Ok(EvalReport {
        accuracy,
        confusion,
        records: examples.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Probability of `label`.
    pub probability: f64,
}

/// Classifies each text. Fails before scoring anything if some text has no
/// in-vocabulary token left after preprocessing.
pub fn predict(checkpoint: &Path, texts: &[String]) -> Result<Vec<Prediction>, CliError> {
    if texts.is_empty() {
        return Err(CliError::Input("nothing to predict".into()));
    }
    let (ck, vocab) = load_run(checkpoint)?;
    let meta = &ck.meta;
    let docs: Vec<_> = texts
        .iter()
        .map(|t| encode_text(t, &meta.pipeline, &vocab, meta.model.seq_len))
        .collect();
    if let Some(i) = docs.iter().position(|d| d.slots.iter().all(Option::is_none)) {
        return Err(CliError::Input(format!(
            "input {} has no in-vocabulary tokens after preprocessing",
            i + 1
        )));
    }
    docs.iter()
        .enumerate()
        .map(|(i, doc)| {
            let p = predict_proba(&ck.model, doc, &meta.bayes, eval_seed(meta.train.seed, i))?;
            let k = argmax(p.data());
            Ok(Prediction {
                label: Label::from_index(k).expect("two classes"),
                probability: p.data()[k],
            })
        })
        .collect()
}

/// Writes `vectors.tsv` (`record<TAB>split<TAB>label<TAB>index:weight ...`)
/// for every record of the dataset. Without `vocab_path` the vocabulary is
/// fitted on the train split and written next to it.
pub fn vectorize(cfg: &RunConfig, vocab_path: Option<&Path>) -> Result<PathBuf, CliError> {
    let pipeline = cfg.pipeline()?;
    let (data, s) = load_split(cfg)?;
    create_out_dir(&cfg.out_dir)?;
    let vocab = match vocab_path {
        Some(p) => Vocabulary::parse(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
        None => {
            let v = fit_vocabulary(&s.train, &pipeline)?;
            write_file(&cfg.out_dir.join(VOCAB_FILE), |w| v.export(w))?;
            v
        }
    };
    let mut side = vec!["test"; data.len()];
    for &i in &s.train_indices {
        side[i] = "train";
    }
    let path = cfg.out_dir.join(VECTORS_FILE);
    write_file(&path, |w| {
        for (i, record) in data.iter().enumerate() {
            let v = tfidf_vector(&pipeline.preprocess(&record.text), &vocab);
            let entries: Vec<String> = v.entries.iter().map(|(k, x)| format!("{k}:{x}")).collect();
            writeln!(w, "{i}\t{}\t{}\t{}", side[i], record.label, entries.join(" "))?;
        }
        Ok(())
    })?;
    Ok(path)
}
