//! Flat `section.key = value` run configuration.
//!
//! Every key except `data.path` has a default. Unknown keys are rejected.
//! [`RunConfig::entries`] lists every resolved key, which is what the run
//! manifest records; feeding those entries back through [`RunConfig::set`]
//! rebuilds an identical config.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use veritas_core::bayes::BayesConfig;
use veritas_core::ingest::{CsvSchema, Label, LabelMap};
use veritas_core::model::ModelConfig;
use veritas_core::textpipe::{PipelineConfig, Stoplist};
use veritas_core::train::{EarlyStop, TrainConfig};

use crate::CliError;

/// Where the stoplist comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoplistSource {
    English,
    None,
    File(PathBuf),
}

impl StoplistSource {
    fn parse(s: &str) -> Self {
        match s {
            "english" => Self::English,
            "none" => Self::None,
            path => Self::File(PathBuf::from(path)),
        }
    }

    fn as_config(&self) -> String {
        match self {
            Self::English => "english".into(),
            Self::None => "none".into(),
            Self::File(p) => p.display().to_string(),
        }
    }

    pub fn load(&self) -> Result<Stoplist, CliError> {
        match self {
            Self::English => Ok(Stoplist::english()),
            Self::None => Ok(Stoplist::empty()),
            Self::File(p) => Stoplist::load(p).map_err(|e| CliError::Config(format!("stoplist {}: {e}", p.display()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub text_column: String,
    pub label_column: String,
    pub real_labels: Vec<String>,
    pub fake_labels: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            text_column: "text".into(),
            label_column: "type".into(),
            real_labels: vec!["real".into()],
            fake_labels: vec!["fake".into()],
        }
    }
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        let pairs = self
            .real_labels
            .iter()
            .map(|s| (s.as_str(), Label::Real))
            .chain(self.fake_labels.iter().map(|s| (s.as_str(), Label::Fake)));
        CsvSchema {
            text_column: self.text_column.clone(),
            label_column: self.label_column.clone(),
            label_map: LabelMap::new(pairs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub stoplist: StoplistSource,
    /// Pipeline settings other than the stoplist, which is resolved from
    /// `stoplist` by [`RunConfig::pipeline`].
    pub max_vocab: usize,
    pub min_df: usize,
    pub stemming: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub bayes: BayesConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            data: DataConfig::default(),
            stoplist: StoplistSource::English,
            max_vocab: p.max_vocab,
            min_df: p.min_df,
            stemming: p.stemming_enabled,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            bayes: BayesConfig::default(),
            out_dir: PathBuf::from("run"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "data.path" => self.data.path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.text_column" => self.data.text_column = v.into(),
            "data.label_column" => self.data.label_column = v.into(),
            "data.real_labels" => self.data.real_labels = parse_list(key, v)?,
            "data.fake_labels" => self.data.fake_labels = parse_list(key, v)?,

            "split.train_fraction" => self.train.split.train_fraction = parse(key, v)?,
            "split.seed" => self.train.split.seed = parse(key, v)?,
            "split.stratified" => self.train.split.stratified = parse_bool(key, v)?,

            "pipeline.stoplist" => self.stoplist = StoplistSource::parse(v),
            "pipeline.max_vocab" => self.max_vocab = parse(key, v)?,
            "pipeline.min_df" => self.min_df = parse(key, v)?,
            "pipeline.stemming" => self.stemming = parse_bool(key, v)?,

            "model.seq_len" => self.model.seq_len = parse(key, v)?,
            "model.d_model" => self.model.d_model = parse(key, v)?,
            "model.gru_hidden" => self.model.gru_hidden = parse(key, v)?,
            "model.n_heads" => self.model.n_heads = parse(key, v)?,
            "model.d_ff" => self.model.d_ff = parse(key, v)?,
            "model.n_blocks" => self.model.n_blocks = parse(key, v)?,
            "model.n_classes" => self.model.n_classes = parse(key, v)?,
            "model.positional_encoding" => self.model.positional_encoding = parse_bool(key, v)?,
            "model.bigru" => self.model.bigru = parse_bool(key, v)?,

            "train.max_epochs" => self.train.max_epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.lr0" => self.train.lr0 = parse(key, v)?,
            "train.lr_decay_factor" => self.train.lr_decay_factor = parse(key, v)?,
            "train.lr_milestones" => self.train.lr_milestones = parse_list(key, v)?,
            "train.clip_threshold" => self.train.clip_threshold = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.adam_beta1" => self.train.adam.beta1 = parse(key, v)?,
            "train.adam_beta2" => self.train.adam.beta2 = parse(key, v)?,
            "train.adam_eps" => self.train.adam.eps = parse(key, v)?,
            "train.early_stop_patience" => {
                if v == "none" || v == "0" {
                    self.train.early_stop = None;
                } else {
                    let patience = parse(key, v)?;
                    let min_delta = self.train.early_stop.map_or(0.0, |e| e.min_delta);
                    self.train.early_stop = Some(EarlyStop { patience, min_delta });
                }
            }
            "train.early_stop_min_delta" => {
                let min_delta = parse(key, v)?;
                match &mut self.train.early_stop {
                    Some(es) => es.min_delta = min_delta,
                    None if min_delta == 0.0 => {}
                    None => {
                        return Err(CliError::Config(
                            "train.early_stop_min_delta needs train.early_stop_patience set first".into(),
                        ))
                    }
                }
            }

            "bayes.enabled" => self.bayes.enabled = parse_bool(key, v)?,
            "bayes.kl_weight" => self.bayes.kl_weight = parse(key, v)?,
            "bayes.mc_samples" => self.bayes.mc_samples = parse(key, v)?,
            "bayes.prior_mean" => self.bayes.prior.mean = parse(key, v)?,
            "bayes.prior_sigma" => self.bayes.prior.sigma = parse(key, v)?,
            "bayes.projection" => self.bayes.projection = parse_bool(key, v)?,
            "bayes.rho_init" => self.bayes.rho_init = parse(key, v)?,

            "output.dir" => self.out_dir = PathBuf::from(v),
            other => return Err(CliError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got {pair:?}")))?;
        self.set(k, v)
    }

    /// Every key with its resolved value, in a fixed order. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let m = &self.model;
        let b = &self.bayes;
        let es = t.early_stop;
        vec![
            (
                "data.path",
                self.data
                    .path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("data.text_column", self.data.text_column.clone()),
            ("data.label_column", self.data.label_column.clone()),
            ("data.real_labels", join(&self.data.real_labels)),
            ("data.fake_labels", join(&self.data.fake_labels)),
            ("split.train_fraction", t.split.train_fraction.to_string()),
            ("split.seed", t.split.seed.to_string()),
            ("split.stratified", t.split.stratified.to_string()),
            ("pipeline.stoplist", self.stoplist.as_config()),
            ("pipeline.max_vocab", self.max_vocab.to_string()),
            ("pipeline.min_df", self.min_df.to_string()),
            ("pipeline.stemming", self.stemming.to_string()),
            ("model.seq_len", m.seq_len.to_string()),
            ("model.d_model", m.d_model.to_string()),
            ("model.gru_hidden", m.gru_hidden.to_string()),
            ("model.n_heads", m.n_heads.to_string()),
            ("model.d_ff", m.d_ff.to_string()),
            ("model.n_blocks", m.n_blocks.to_string()),
            ("model.n_classes", m.n_classes.to_string()),
            ("model.positional_encoding", m.positional_encoding.to_string()),
            ("model.bigru", m.bigru.to_string()),
            ("train.max_epochs", t.max_epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.lr0", t.lr0.to_string()),
            ("train.lr_decay_factor", t.lr_decay_factor.to_string()),
            ("train.lr_milestones", join(&t.lr_milestones)),
            ("train.clip_threshold", t.clip_threshold.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.adam_beta1", t.adam.beta1.to_string()),
            ("train.adam_beta2", t.adam.beta2.to_string()),
            ("train.adam_eps", t.adam.eps.to_string()),
            (
                "train.early_stop_patience",
                es.map_or("none".into(), |e| e.patience.to_string()),
            ),
            (
                "train.early_stop_min_delta",
                es.map_or(0.0, |e| e.min_delta).to_string(),
            ),
            ("bayes.enabled", b.enabled.to_string()),
            ("bayes.kl_weight", b.kl_weight.to_string()),
            ("bayes.mc_samples", b.mc_samples.to_string()),
            ("bayes.prior_mean", b.prior.mean.to_string()),
            ("bayes.prior_sigma", b.prior.sigma.to_string()),
            ("bayes.projection", b.projection.to_string()),
            ("bayes.rho_init", b.rho_init.to_string()),
            ("output.dir", self.out_dir.display().to_string()),
        ]
    }

    /// Parses the flat text format: one `key = value` per line, `#` starts
    /// a comment line, blank lines are skipped.
    pub fn parse_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Reads either the flat text format or a `run.json` manifest, whose
    /// `config` object holds the same keys.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        if !text.trim_start().starts_with('{') {
            return Self::parse_text(&text);
        }
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let entries = json
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| CliError::Config(format!("{}: no \"config\" object", path.display())))?;
        let mut cfg = Self::default();
        // Early-stop delta depends on patience being set first.
        let mut pairs: Vec<(&String, &serde_json::Value)> = entries.iter().collect();
        pairs.sort_by_key(|(k, _)| k.as_str() == "train.early_stop_min_delta");
        for (k, v) in pairs {
            let v = v
                .as_str()
                .ok_or_else(|| CliError::Config(format!("{k}: manifest values must be strings")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let p = PipelineConfig {
            stoplist: self.stoplist.load()?,
            max_vocab: self.max_vocab,
            min_df: self.min_df,
            stemming_enabled: self.stemming,
        };
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        self.data
            .path
            .as_deref()
            .ok_or_else(|| CliError::Config("data.path is required".into()))
    }

    /// Checks the model, train and bayes sections.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.bayes.validate().map_err(CliError::Config)?;
        if self.data.real_labels.is_empty() || self.data.fake_labels.is_empty() {
            return Err(CliError::Config(
                "data.real_labels and data.fake_labels must be non-empty".into(),
            ));
        }
        Ok(())
    }
}
