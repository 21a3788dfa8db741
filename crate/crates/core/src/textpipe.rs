//! Text preprocessing and TF-IDF features: tokenization, stop-word removal,
//! suffix stemming, vocabulary fitting and sparse L2-normalized vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// The shipped English stoplist.
pub const DEFAULT_STOPLIST: &str = include_str!("../data/stoplist_en_v1.txt");

#[derive(Debug, Error)]
pub enum TextError {
    #[error("no token survives vocabulary filtering")]
    EmptyVocabulary,
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("malformed vocabulary file: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Stoplist(BTreeSet<String>);

impl Stoplist {
    /// One token per line; `#` starts a comment; tokens are lowercased.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPLIST)
    }

    pub fn empty() -> Self {
        Self(BTreeSet::new())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for Stoplist {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stoplist: Stoplist,
    pub max_vocab: usize,
    pub min_df: usize,
    pub stemming_enabled: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stoplist: Stoplist::english(),
            max_vocab: 20_000,
            min_df: 2,
            stemming_enabled: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), TextError> {
        if self.max_vocab < 2 {
            return Err(TextError::InvalidConfig(format!(
                "max_vocab must be >= 2, got {}",
                self.max_vocab
            )));
        }
        if self.min_df < 1 {
            return Err(TextError::InvalidConfig("min_df must be >= 1".into()));
        }
        Ok(())
    }

    /// tokenize, drop stop words, then stem (when enabled).
    pub fn preprocess(&self, text: &str) -> Vec<String> {
        let tokens = remove_stopwords(tokenize(text), &self.stoplist);
        if self.stemming_enabled {
            tokens.iter().map(|t| stem(t)).collect()
        } else {
            tokens
        }
    }
}

/// Lowercased maximal runs of Unicode letters and digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn remove_stopwords(tokens: Vec<String>, stoplist: &Stoplist) -> Vec<String> {
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

/// Three-rule plural stripper, first match wins:
/// `-ies` → `-y` when longer than 4 chars; `-ss` stays; a final `-s` is
/// dropped when longer than 3 chars.
pub fn stem(token: &str) -> String {
    let len = token.chars().count();
    if len > 4 {
        if let Some(base) = token.strip_suffix("ies") {
            return format!("{base}y");
        }
    }
    if token.ends_with("ss") {
        return token.to_string();
    }
    if len > 3 {
        if let Some(base) = token.strip_suffix('s') {
            return base.to_string();
        }
    }
    token.to_string()
}

/// Token ↔ index map with document frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    /// Keeps tokens with `df >= min_df`; above `max_vocab` survivors keeps the
    /// highest-df ones (ties broken lexicographically). Indices follow
    /// lexicographic token order.
    pub fn fit<S: AsRef<str>>(corpus: &[Vec<S>], config: &PipelineConfig) -> Result<Self, TextError> {
        config.validate()?;
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in corpus {
            let unique: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, d)| d >= config.min_df).collect();
        if kept.len() > config.max_vocab {
            kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            kept.truncate(config.max_vocab);
            kept.sort_by(|a, b| a.0.cmp(b.0));
        }
        if kept.is_empty() {
            return Err(TextError::EmptyVocabulary);
        }
        Ok(Self::from_parts(
            kept.iter().map(|(t, _)| t.to_string()).collect(),
            kept.iter().map(|&(_, d)| d).collect(),
            corpus.len(),
        ))
    }

    fn from_parts(tokens: Vec<String>, df: Vec<usize>, n_docs: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            index,
            df,
            n_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }

    /// Smoothed inverse document frequency `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        ((1 + self.n_docs) as f64 / (1 + self.df[index]) as f64).ln() + 1.0
    }

    /// `#vocab v1 n_docs=N`, then `token<TAB>index<TAB>df` per token.
    pub fn export<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#vocab v1 n_docs={}", self.n_docs)?;
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{t}\t{i}\t{}", self.df[i])?;
        }
        Ok(())
    }

    pub fn export_string(&self) -> String {
        let mut buf = Vec::new();
        self.export(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("tokens are UTF-8")
    }

    pub fn parse(text: &str) -> Result<Self, TextError> {
        let bad = |m: String| TextError::Parse(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let n_docs = header
            .strip_prefix("#vocab v1 n_docs=")
            .ok_or_else(|| bad(format!("unexpected header {header:?}")))?
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad n_docs in {header:?}")))?;
        let mut tokens = Vec::new();
        let mut df = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            let [tok, idx, d] = fields[..] else {
                return Err(bad(format!("expected 3 fields in {line:?}")));
            };
            let idx: usize = idx.parse().map_err(|_| bad(format!("bad index in {line:?}")))?;
            if idx != tokens.len() {
                return Err(bad(format!("index {idx} out of order")));
            }
            let d: usize = d.parse().map_err(|_| bad(format!("bad df in {line:?}")))?;
            if d == 0 || d > n_docs {
                return Err(bad(format!("df {d} outside 1..={n_docs}")));
            }
            tokens.push(tok.to_string());
            df.push(d);
        }
        if tokens.is_empty() {
            return Err(TextError::EmptyVocabulary);
        }
        Ok(Self::from_parts(tokens, df, n_docs))
    }

    /// SHA-256 of the export text, hex encoded.
    pub fn content_hash(&self) -> String {
        Sha256::digest(self.export_string().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Sparse TF-IDF row: strictly increasing indices, L2-normalized weights
/// (empty when every token is out of vocabulary).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TfIdfVector {
    pub entries: Vec<(usize, f64)>,
    /// Euclidean norm of the raw weights before normalization.
    pub norm: f64,
}

impl TfIdfVector {
    pub fn weight(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Raw weight `count × idf`, then division by the raw L2 norm. Arithmetic
/// order: squares summed in ascending index order.
pub fn tfidf_vector<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> TfIdfVector {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.get(t.as_ref()) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let raw: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c as f64 * vocab.idf(i))).collect();
    let norm = raw.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
    if raw.is_empty() {
        return TfIdfVector::default();
    }
    TfIdfVector {
        entries: raw.into_iter().map(|(i, w)| (i, w / norm)).collect(),
        norm,
    }
}

pub fn transform_corpus<S: AsRef<str>>(corpus: &[Vec<S>], vocab: &Vocabulary) -> Vec<TfIdfVector> {
    corpus.iter().map(|doc| tfidf_vector(doc, vocab)).collect()
}
