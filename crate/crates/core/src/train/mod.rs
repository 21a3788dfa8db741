//! Minibatch training with Adam, step learning-rate decay and global-norm
//! clipping; per-epoch evaluation, curve and confusion-matrix export, and
//! checkpoints.

mod checkpoint;
mod optim;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::{model_kl, predictive_mean, BayesConfig};
use crate::ingest::{Dataset, Label, SplitSpec};
use crate::model::{encode_document, EncodedDoc, Model, ModelError, Noise};
use crate::numcore::{softmax_rows, NumError, Tape, Tensor2D};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::textpipe::{tfidf_vector, PipelineConfig, Vocabulary};

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC,
    FORMAT_VERSION,
};
pub use optim::{adam_step, clip_gradients, global_grad_norm, AdamHyper};

pub const SHUFFLE_STREAM: u64 = 2;
pub const NOISE_STREAM: u64 = 3;
pub const EVAL_STREAM: u64 = 4;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("cannot evaluate an empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint file not found: {0}")]
    MissingFile(String),
    #[error("checkpoint checksum mismatch (file truncated or corrupted)")]
    CorruptChecksum,
    #[error("checkpoint does not match: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("malformed checkpoint metadata: {0}")]
    Metadata(String),
}

impl From<NumError> for TrainError {
    fn from(e: NumError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Epochs without improvement of the mean train loss before stopping.
    pub patience: usize,
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay_factor: f64,
    /// Zero-based epoch indices at which the rate is multiplied by the factor.
    pub lr_milestones: Vec<usize>,
    pub clip_threshold: f64,
    pub seed: u64,
    pub split: SplitSpec,
    pub adam: AdamHyper,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch_size: 256,
            lr0: 0.001,
            lr_decay_factor: 0.1,
            lr_milestones: vec![150],
            clip_threshold: 10.0,
            seed: 0,
            split: SplitSpec::default(),
            adam: AdamHyper::default(),
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.lr0.is_nan() || self.lr0 < 0.0 || self.lr_decay_factor.is_nan() || self.lr_decay_factor <= 0.0 {
            return bad(format!(
                "lr0 {} / decay factor {} out of range",
                self.lr0, self.lr_decay_factor
            ));
        }
        if self.clip_threshold.is_nan() || self.clip_threshold <= 0.0 {
            return bad(format!("clip_threshold must be positive, got {}", self.clip_threshold));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lr_milestones must be strictly increasing".into());
        }
        if self.max_epochs > 0 && self.lr_milestones.last().is_some_and(|&m| m >= self.max_epochs) {
            return bad(format!("lr_milestones must be below max_epochs ({})", self.max_epochs));
        }
        if let Some(es) = self.early_stop {
            if es.patience == 0 || es.min_delta.is_nan() || es.min_delta < 0.0 {
                return bad("early_stop needs patience >= 1 and min_delta >= 0".into());
            }
        }
        self.adam.validate().map_err(TrainError::InvalidConfig)
    }
}

/// `lr0 · factor^k` where `k` counts milestones `<= epoch` (zero-based).
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let k = cfg.lr_milestones.iter().filter(|&&m| m <= epoch).count();
    cfg.lr0 * cfg.lr_decay_factor.powi(k as i32)
}

/// A vectorized, labeled document.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub doc: EncodedDoc,
    pub label: Label,
}

/// Preprocess, weight and encode every record with an already fitted
/// vocabulary.
pub fn vectorize(dataset: &Dataset, pipeline: &PipelineConfig, vocab: &Vocabulary, seq_len: usize) -> Vec<Example> {
    dataset
        .iter()
        .map(|r| Example {
            doc: encode_text(&r.text, pipeline, vocab, seq_len),
            label: r.label,
        })
        .collect()
}

pub fn encode_text(text: &str, pipeline: &PipelineConfig, vocab: &Vocabulary, seq_len: usize) -> EncodedDoc {
    let tokens = pipeline.preprocess(text);
    let tfidf = tfidf_vector(&tokens, vocab);
    encode_document(&tokens, vocab, &tfidf, seq_len)
}

/// Fits the vocabulary on `train` only.
pub fn fit_vocabulary(train: &Dataset, pipeline: &PipelineConfig) -> Result<Vocabulary, crate::textpipe::TextError> {
    let corpus: Vec<Vec<String>> = train.iter().map(|r| pipeline.preprocess(&r.text)).collect();
    Vocabulary::fit(&corpus, pipeline)
}

/// Index of the larger probability; ties go to the lower class.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`.
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// `true,predicted,count` with one row per cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "true,predicted,count")?;
        for t in Label::ALL {
            for p in Label::ALL {
                writeln!(w, "{t},{p},{}", self.counts[t.index()][p.index()])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// `epoch,train_loss,train_acc,test_acc,lr` with six decimals.
    pub fn write_curves<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,train_acc,test_acc,lr")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_loss, r.train_accuracy, r.test_accuracy, r.lr
            )?;
        }
        Ok(())
    }
}

/// Generators for batch order and posterior noise.
#[derive(Debug, Clone)]
pub struct TrainRngs {
    pub shuffle: SplitMix64,
    pub noise: SplitMix64,
}

impl TrainRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            shuffle: SplitMix64::derive(seed, SHUFFLE_STREAM),
            noise: SplitMix64::derive(seed, NOISE_STREAM),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Mean cross-entropy plus the scaled KL term.
    pub loss: f64,
    pub kl: f64,
    pub correct: usize,
}

/// Forward and backward for one batch, adding gradients of
/// `mean(ce) + κ·KL/M` into the model parameters. Gradients are not reset.
pub fn accumulate_batch<T: Scalar>(
    model: &mut Model<T>,
    batch: &[&Example],
    noise: Option<&Noise<T>>,
    bayes: &BayesConfig,
    batches_per_epoch: usize,
) -> Result<BatchStats, TrainError> {
    let inv_b = T::one() / T::of(batch.len() as f64);
    let mut ce_sum = 0.0;
    let mut correct = 0;
    for ex in batch {
        let tape = Tape::with_checks(false);
        let logits = model.forward(&tape, &ex.doc, noise)?;
        let ce = tape.cross_entropy(logits, ex.label.index())?;
        ce_sum += tape.value(ce).item().as_f64();
        if argmax(tape.value(logits).data()) == ex.label.index() {
            correct += 1;
        }
        let scaled = tape.scale(ce, inv_b);
        tape.backward(scaled, &mut model.params)?;
    }
    let mut kl = 0.0;
    if model.is_bayesian() {
        let tape = Tape::with_checks(false);
        if let Some(total) = model_kl(&tape, model, &bayes.prior)? {
            let weighted = tape.scale(total, T::of(bayes.kl_weight / batches_per_epoch as f64));
            kl = tape.value(weighted).item().as_f64();
            tape.backward(weighted, &mut model.params)?;
        }
    }
    Ok(BatchStats {
        loss: ce_sum / batch.len() as f64 + kl,
        kl,
        correct,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Batch losses averaged with batch-size weights.
    pub mean_loss: f64,
    /// Accuracy of the training-time forward passes.
    pub accuracy: f64,
    pub batches: usize,
}

pub fn batch_sizes(n: usize, batch_size: usize) -> Vec<usize> {
    (0..n.div_ceil(batch_size))
        .map(|b| batch_size.min(n - b * batch_size))
        .collect()
}

/// One pass over `data` in a freshly shuffled order. A Bayesian model gets
/// one posterior draw per batch.
pub fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    data: &[Example],
    cfg: &TrainConfig,
    bayes: &BayesConfig,
    lr: f64,
    epoch: usize,
    rngs: &mut TrainRngs,
) -> Result<EpochStats, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    rngs.shuffle.shuffle(&mut order);
    let sizes = batch_sizes(data.len(), cfg.batch_size);
    let m = sizes.len();
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
        let noise = model.is_bayesian().then(|| model.sample_noise(&mut rngs.noise));
        model.params.zero_grads();
        let stats = accumulate_batch(model, &batch, noise.as_ref(), bayes, m)?;
        if !stats.loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: b });
        }
        loss_sum += stats.loss * batch.len() as f64;
        correct += stats.correct;
        clip_gradients(&mut model.params, cfg.clip_threshold);
        for p in model.params.iter_mut() {
            adam_step(p, lr, &cfg.adam);
        }
    }
    Ok(EpochStats {
        mean_loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
        batches: m,
    })
}

/// Seed of the posterior draws used to score record `index`.
pub fn eval_seed(seed: u64, index: usize) -> u64 {
    SplitMix64::derive(seed ^ EVAL_STREAM, index as u64).next()
}

/// Class probabilities: the Monte-Carlo predictive mean for a Bayesian
/// model, otherwise the softmax of the deterministic logits.
pub fn predict_proba<T: Scalar>(
    model: &Model<T>,
    doc: &EncodedDoc,
    bayes: &BayesConfig,
    seed: u64,
) -> Result<Tensor2D<T>, TrainError> {
    if model.is_bayesian() {
        Ok(predictive_mean(model, doc, bayes.mc_samples, seed)?)
    } else {
        let tape = Tape::with_checks(false);
        let logits = model.forward(&tape, doc, None)?;
        Ok(softmax_rows(&tape.value(logits)))
    }
}

/// Accuracy and confusion matrix; record `i` is scored with
/// [`eval_seed`]`(seed, i)`.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    data: &[Example],
    bayes: &BayesConfig,
    seed: u64,
) -> Result<(f64, ConfusionMatrix), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut cm = ConfusionMatrix::default();
    for (i, ex) in data.iter().enumerate() {
        let p = predict_proba(model, &ex.doc, bayes, eval_seed(seed, i))?;
        let predicted = Label::from_index(argmax(p.data())).expect("two classes");
        cm.record(ex.label, predicted);
    }
    Ok((cm.accuracy(), cm))
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    pub history: History,
    pub model: Model<T>,
    /// Epoch (one-based) and snapshot with the highest test accuracy; the
    /// earliest wins ties.
    pub best: Option<(usize, Model<T>)>,
}

/// Runs up to `max_epochs`, evaluating both splits after each epoch.
pub fn fit<T: Scalar>(
    model: Model<T>,
    train: &[Example],
    test: &[Example],
    cfg: &TrainConfig,
    bayes: &BayesConfig,
) -> Result<FitOutcome<T>, TrainError> {
    fit_with(model, train, test, cfg, bayes, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with<T: Scalar>(
    mut model: Model<T>,
    train: &[Example],
    test: &[Example],
    cfg: &TrainConfig,
    bayes: &BayesConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome<T>, TrainError> {
    cfg.validate()?;
    bayes.validate().map_err(TrainError::InvalidConfig)?;
    let mut rngs = TrainRngs::new(cfg.seed);
    let mut history = History::default();
    let mut best: Option<(usize, f64, Model<T>)> = None;
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        let lr = lr_at(epoch, cfg);
        let stats = train_epoch(&mut model, train, cfg, bayes, lr, epoch + 1, &mut rngs)?;
        let (train_acc, _) = evaluate(&model, train, bayes, cfg.seed)?;
        let (test_acc, _) = evaluate(&model, test, bayes, cfg.seed)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: stats.mean_loss,
            train_accuracy: train_acc,
            test_accuracy: test_acc,
            lr,
        };
        history.records.push(record);
        on_epoch(&record);
        if best.as_ref().is_none_or(|b| test_acc > b.1) {
            best = Some((epoch + 1, test_acc, model.clone()));
        }
        if let Some(es) = cfg.early_stop {
            if stats.mean_loss < best_loss - es.min_delta {
                best_loss = stats.mean_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= es.patience {
                    break;
                }
            }
        }
    }
    Ok(FitOutcome {
        history,
        model,
        best: best.map(|(e, _, m)| (e, m)),
    })
}
