use crate::numcore::{NumError, Tape, Tensor2D, Var};
use crate::scalar::Scalar;
use crate::textpipe::{TfIdfVector, Vocabulary};

use super::ModelError;

/// A document prepared for the network: one slot per position up to the
/// padded length, holding the vocabulary index (if any) and its TF-IDF weight.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDoc {
    pub slots: Vec<Option<usize>>,
    pub weights: Vec<f64>,
}

impl EncodedDoc {
    /// `true` for in-vocabulary tokens; pads and OOV tokens are masked out.
    pub fn mask(&self) -> Vec<bool> {
        self.slots.iter().map(Option::is_some).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn valid_positions(&self) -> Vec<usize> {
        (0..self.slots.len()).filter(|&i| self.slots[i].is_some()).collect()
    }
}

/// Truncates to `seq_len` tokens or pads with empty slots. Out-of-vocabulary
/// tokens keep their position but carry no index.
pub fn encode_document<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    tfidf: &TfIdfVector,
    seq_len: usize,
) -> EncodedDoc {
    let mut slots = vec![None; seq_len];
    let mut weights = vec![0.0; seq_len];
    for (pos, tok) in tokens.iter().take(seq_len).enumerate() {
        if let Some(i) = vocab.get(tok.as_ref()) {
            slots[pos] = Some(i);
            weights[pos] = tfidf.weight(i);
        }
    }
    EncodedDoc { slots, weights }
}

/// Row `i` is the embedding of slot `i` scaled by its TF-IDF weight; empty
/// slots are zero rows.
pub fn embed_sequence<T: Scalar>(tape: &Tape<T>, table: Var, doc: &EncodedDoc) -> Result<Var, NumError> {
    let scales: Vec<T> = doc.weights.iter().map(|&w| T::of(w)).collect();
    tape.gather_rows(table, &doc.slots, &scales)
}

/// Sinusoidal table: `PE(p, 2i) = sin(p / 10000^(2i/d))`,
/// `PE(p, 2i+1) = cos(p / 10000^(2i/d))`.
pub fn positional_encoding<T: Scalar>(seq_len: usize, d_model: usize) -> Result<Tensor2D<T>, ModelError> {
    if !d_model.is_multiple_of(2) {
        return Err(ModelError::OddDimension(d_model));
    }
    Ok(Tensor2D::from_fn(seq_len, d_model, |pos, j| {
        let pair = (j / 2 * 2) as f64;
        let angle = pos as f64 / 10000f64.powf(pair / d_model as f64);
        T::of(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    }))
}

/// Positional table with rows zeroed where `mask` is false.
pub fn masked_positions<T: Scalar>(pe: &Tensor2D<T>, mask: &[bool]) -> Tensor2D<T> {
    let mut out = pe.clone();
    for (r, &keep) in mask.iter().enumerate() {
        if !keep {
            out.row_mut(r).fill(T::zero());
        }
    }
    out
}
