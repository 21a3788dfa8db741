//! The hybrid classifier: TF-IDF-weighted token embeddings plus sinusoidal
//! positions feed a bidirectional GRU, a linear projection back to model
//! width, a stack of post-norm transformer encoder blocks and a mean-pooled
//! two-class readout.
//!
//! Positions that are padding or out of vocabulary are masked: the GRU
//! carries its state across them, and they are dropped before the encoder
//! blocks, which is equivalent to excluding them as attention keys and from
//! pooling.

mod attention;
mod config;
mod embed;
mod gru;
mod head;

use thiserror::Error;

use crate::bayes::{standard_normal, BayesConfig, VariationalParam};
use crate::numcore::{NumError, ParamId, ParamSet, Tape, Tensor2D, Var};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

pub use attention::{
    encoder_block, feed_forward, layer_norm, multi_head_attention, Attention, AttnParams, EncoderBlockParams,
    LAYER_NORM_EPS, MASK_PENALTY,
};
pub use config::ModelConfig;
pub use embed::{embed_sequence, encode_document, masked_positions, positional_encoding, EncodedDoc};
pub use gru::{bigru, gru_cell, GruParams};
pub use head::{classify, cross_entropy, mean_pool, ClassifierHead, Linear, Weight};

/// RNG stream used for weight initialization.
pub const INIT_STREAM: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("positional encoding needs an even d_model, got {0}")]
    OddDimension(usize),
    #[error("d_model {d_model} is not divisible by {heads} heads")]
    HeadDivisibility { d_model: usize, heads: usize },
    #[error("every position is masked")]
    AllMasked,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

/// One posterior draw for each variational weight of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise<T> {
    pub projection: Option<Tensor2D<T>>,
    pub head: Option<Tensor2D<T>>,
}

impl<T> Noise<T> {
    pub fn none() -> Self {
        Self {
            projection: None,
            head: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    vocab_size: usize,
    pub params: ParamSet<T>,
    pub embedding: ParamId,
    pub gru: Option<(GruParams, GruParams)>,
    pub projection: Option<Linear>,
    pub blocks: Vec<EncoderBlockParams>,
    pub head: ClassifierHead,
    pe: Option<Tensor2D<T>>,
}

struct Init<'a, T> {
    params: &'a mut ParamSet<T>,
    rng: SplitMix64,
}

impl<T: Scalar> Init<'_, T> {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    fn glorot(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let value = self.glorot_value(rows, cols);
        self.params.add(name, value)
    }

    fn glorot_value(&mut self, rows: usize, cols: usize) -> Tensor2D<T> {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let rng = &mut self.rng;
        Tensor2D::from_fn(rows, cols, |_, _| T::of((2.0 * rng.next_f64() - 1.0) * a))
    }

    /// Uniform in `±sqrt(3·d)`: entries of variance `d`, the scale a
    /// unit-variance table has after the usual `sqrt(d)` embedding factor.
    fn embedding(&mut self, rows: usize, d: usize) -> ParamId {
        let a = (3.0 * d as f64).sqrt();
        let rng = &mut self.rng;
        let value = Tensor2D::from_fn(rows, d, |_, _| T::of((2.0 * rng.next_f64() - 1.0) * a));
        self.params.add("embedding", value)
    }

    fn zeros(&mut self, name: String, cols: usize) -> ParamId {
        self.params.add(name, Tensor2D::zeros(1, cols))
    }

    fn ones(&mut self, name: String, cols: usize) -> ParamId {
        self.params.add(name, Tensor2D::full(1, cols, T::one()))
    }

    /// Point weight, or a variational pair whose mean takes the same draw.
    fn weight(&mut self, name: &str, rows: usize, cols: usize, rho_init: Option<f64>) -> Weight {
        let value = self.glorot_value(rows, cols);
        match rho_init {
            None => Weight::Point(self.params.add(name, value)),
            Some(rho) => Weight::Variational(VariationalParam {
                mu: self.params.add(format!("{name}.mu"), value),
                rho: self
                    .params
                    .add(format!("{name}.rho"), Tensor2D::full(rows, cols, T::of(rho))),
            }),
        }
    }

    fn gru(&mut self, prefix: &str, d_in: usize, hidden: usize) -> GruParams {
        let mut w = |g: &str| self.glorot(format!("{prefix}.w_{g}"), d_in, hidden);
        let (w_z, w_r, w_h) = (w("z"), w("r"), w("h"));
        let mut u = |g: &str| self.glorot(format!("{prefix}.u_{g}"), hidden, hidden);
        let (u_z, u_r, u_h) = (u("z"), u("r"), u("h"));
        GruParams {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z: self.zeros(format!("{prefix}.b_z"), hidden),
            b_r: self.zeros(format!("{prefix}.b_r"), hidden),
            b_h: self.zeros(format!("{prefix}.b_h"), hidden),
        }
    }

    fn block(&mut self, i: usize, d: usize, d_ff: usize) -> EncoderBlockParams {
        let p = format!("block{i}");
        let attn = AttnParams {
            w_q: self.glorot(format!("{p}.w_q"), d, d),
            w_k: self.glorot(format!("{p}.w_k"), d, d),
            w_v: self.glorot(format!("{p}.w_v"), d, d),
            w_o: self.glorot(format!("{p}.w_o"), d, d),
        };
        EncoderBlockParams {
            attn,
            ffn_w1: self.glorot(format!("{p}.ffn_w1"), d, d_ff),
            ffn_b1: self.zeros(format!("{p}.ffn_b1"), d_ff),
            ffn_w2: self.glorot(format!("{p}.ffn_w2"), d_ff, d),
            ffn_b2: self.zeros(format!("{p}.ffn_b2"), d),
            norm1_gain: self.ones(format!("{p}.norm1_gain"), d),
            norm1_bias: self.zeros(format!("{p}.norm1_bias"), d),
            norm2_gain: self.ones(format!("{p}.norm2_gain"), d),
            norm2_bias: self.zeros(format!("{p}.norm2_bias"), d),
        }
    }
}

impl<T: Scalar> Model<T> {
    /// Seeded initialization: Glorot-uniform weights, zero biases, unit
    /// norm gains, and an embedding table with entry variance `d_model`. Variational means reuse the point-weight draw, so the
    /// same seed gives the same means with the Bayesian head on or off.
    pub fn new(config: ModelConfig, vocab_size: usize, bayes: &BayesConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(ModelError::InvalidConfig("vocabulary is empty".into()));
        }
        let d = config.d_model;
        let mut params = ParamSet::new();
        let mut init = Init {
            params: &mut params,
            rng: SplitMix64::derive(seed, INIT_STREAM),
        };
        let embedding = init.embedding(vocab_size, d);
        let (gru, projection) = if config.bigru {
            let h = config.gru_hidden;
            let fwd = init.gru("gru_fwd", d, h);
            let bwd = init.gru("gru_bwd", d, h);
            let var = (bayes.enabled && bayes.projection).then_some(bayes.rho_init);
            let w = init.weight("projection.w", 2 * h, d, var);
            let b = init.zeros("projection.b".into(), d);
            (Some((fwd, bwd)), Some(Linear { w, b }))
        } else {
            (None, None)
        };
        let blocks = (0..config.n_blocks).map(|i| init.block(i, d, config.d_ff)).collect();
        let var = bayes.enabled.then_some(bayes.rho_init);
        let w = init.weight("head.w", d, config.n_classes, var);
        let b = init.zeros("head.b".into(), config.n_classes);
        let pe = if config.positional_encoding {
            Some(positional_encoding(config.seq_len, d)?)
        } else {
            None
        };
        Ok(Self {
            config,
            vocab_size,
            params,
            embedding,
            gru,
            projection,
            blocks,
            head: Linear { w, b },
            pe,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn has_variational_projection(&self) -> bool {
        self.projection.is_some_and(|p| p.w.variational().is_some())
    }

    pub fn has_variational_head(&self) -> bool {
        self.head.w.variational().is_some()
    }

    pub fn is_bayesian(&self) -> bool {
        self.has_variational_head() || self.has_variational_projection()
    }

    /// Variational weights in declaration order.
    pub fn variational_params(&self) -> Vec<VariationalParam> {
        self.projection
            .iter()
            .filter_map(|p| p.w.variational())
            .chain(self.head.w.variational())
            .collect()
    }

    /// One standard-normal draw per variational weight.
    pub fn sample_noise(&self, rng: &mut SplitMix64) -> Noise<T> {
        let draw = |w: Weight, rng: &mut SplitMix64| {
            w.variational().map(|vp| {
                let (r, c) = self.params.value(vp.mu).shape();
                standard_normal(rng, r, c)
            })
        };
        Noise {
            projection: self.projection.and_then(|p| draw(p.w, rng)),
            head: draw(self.head.w, rng),
        }
    }

    /// Draw with every entry zero, which evaluates the posterior means.
    pub fn zero_noise(&self) -> Noise<T> {
        let zeros = |w: Weight| {
            w.variational().map(|vp| {
                let (r, c) = self.params.value(vp.mu).shape();
                Tensor2D::zeros(r, c)
            })
        };
        Noise {
            projection: self.projection.and_then(|p| zeros(p.w)),
            head: zeros(self.head.w),
        }
    }

    fn positions(&self, len: usize) -> Result<Option<Tensor2D<T>>, ModelError> {
        match &self.pe {
            None => Ok(None),
            Some(pe) if pe.rows() == len => Ok(Some(pe.clone())),
            Some(_) => positional_encoding(len, self.config.d_model).map(Some),
        }
    }

    /// Rows of the unmasked positions after the encoder blocks.
    pub fn encode(&self, tape: &Tape<T>, doc: &EncodedDoc, noise: Option<&Noise<T>>) -> Result<Var, ModelError> {
        let mask = doc.mask();
        let valid = doc.valid_positions();
        if valid.is_empty() {
            return Err(ModelError::AllMasked);
        }
        let table = tape.param(&self.params, self.embedding);
        let mut x = embed_sequence(tape, table, doc)?;
        if let Some(pe) = self.positions(doc.len())? {
            x = tape.add(x, tape.constant(masked_positions(&pe, &mask)))?;
        }
        let keep: Vec<Option<usize>> = valid.iter().map(|&i| Some(i)).collect();
        let ones = vec![T::one(); keep.len()];
        if let (Some((fwd, bwd)), Some(proj)) = (&self.gru, &self.projection) {
            let states = bigru(tape, &self.params, x, &mask, fwd, bwd)?;
            let states = tape.gather_rows(states, &keep, &ones)?;
            x = proj.apply(tape, &self.params, states, noise.and_then(|n| n.projection.as_ref()))?;
        } else {
            x = tape.gather_rows(x, &keep, &ones)?;
        }
        let all = vec![true; keep.len()];
        for block in &self.blocks {
            x = encoder_block(tape, &self.params, x, &all, block, self.config.n_heads)?;
        }
        Ok(x)
    }

    /// Mean of the encoded rows, `1 × d_model`. A document with no
    /// in-vocabulary token pools to the zero row, leaving only the head bias.
    pub fn pooled(&self, tape: &Tape<T>, doc: &EncodedDoc, noise: Option<&Noise<T>>) -> Result<Var, ModelError> {
        if doc.valid_positions().is_empty() {
            return Ok(tape.constant(Tensor2D::zeros(1, self.config.d_model)));
        }
        let seq = self.encode(tape, doc, noise)?;
        mean_pool(tape, seq, &vec![true; tape.shape(seq).0])
    }

    /// Head logits for a pooled `1 × d_model` row.
    pub fn head_logits(&self, tape: &Tape<T>, pooled: Var, noise: Option<&Noise<T>>) -> Result<Var, ModelError> {
        Ok(self
            .head
            .apply(tape, &self.params, pooled, noise.and_then(|n| n.head.as_ref()))?)
    }

    /// `1 × 2` logits. Variational weights use `noise`, or their means when
    /// it is `None`.
    pub fn forward(&self, tape: &Tape<T>, doc: &EncodedDoc, noise: Option<&Noise<T>>) -> Result<Var, ModelError> {
        let pooled = self.pooled(tape, doc, noise)?;
        self.head_logits(tape, pooled, noise)
    }

    /// Softmax of the deterministic (posterior-mean) logits.
    pub fn probabilities(&self, doc: &EncodedDoc) -> Result<Tensor2D<T>, ModelError> {
        let tape = Tape::with_checks(false);
        let logits = self.forward(&tape, doc, None)?;
        Ok(crate::numcore::softmax_rows(&tape.value(logits)))
    }

    /// Parameter shapes in declaration order.
    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        self.params.iter().map(|(n, p)| (n.to_string(), p.shape())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            seq_len: 4,
            d_model: 8,
            gru_hidden: 4,
            n_heads: 2,
            d_ff: 16,
            n_blocks: 1,
            ..ModelConfig::default()
        }
    }

    fn doc(slots: &[Option<usize>]) -> EncodedDoc {
        EncodedDoc {
            slots: slots.to_vec(),
            weights: slots.iter().map(|s| if s.is_some() { 0.5 } else { 0.0 }).collect(),
        }
    }

    #[test]
    fn logits_shape() {
        let m = Model::<f64>::new(tiny(), 5, &BayesConfig::default(), 3).unwrap();
        let tape = Tape::new();
        let out = m.forward(&tape, &doc(&[Some(1), None, Some(4), None]), None).unwrap();
        assert_eq!(tape.shape(out), (1, 2));
    }

    #[test]
    fn empty_document_reads_the_head_bias() {
        let mut m = Model::<f64>::new(tiny(), 5, &BayesConfig::default(), 3).unwrap();
        let empty = doc(&[None; 4]);
        assert_eq!(m.encode(&Tape::new(), &empty, None).unwrap_err(), ModelError::AllMasked);
        m.params
            .get_mut(m.head.b)
            .value
            .data_mut()
            .copy_from_slice(&[0.3, -0.3]);
        let tape = Tape::new();
        let out = m.forward(&tape, &empty, None).unwrap();
        assert_eq!(tape.value(out).data(), &[0.3, -0.3]);
    }

    #[test]
    fn bayes_layout_and_shared_means() {
        let bayes = BayesConfig {
            enabled: true,
            projection: true,
            ..BayesConfig::default()
        };
        let det = Model::<f64>::new(tiny(), 5, &BayesConfig::default(), 9).unwrap();
        let var = Model::<f64>::new(tiny(), 5, &bayes, 9).unwrap();
        assert!(var.has_variational_head() && var.has_variational_projection());
        assert_eq!(var.params.len(), det.params.len() + 2);
        let Weight::Point(w) = det.head.w else { panic!() };
        let vp = var.head.w.variational().unwrap();
        assert_eq!(det.params.value(w), var.params.value(vp.mu));
        assert_eq!(var.variational_params().len(), 2);
        let noise = var.sample_noise(&mut SplitMix64::new(1));
        assert_eq!(noise.head.unwrap().shape(), (8, 2));
        assert_eq!(noise.projection.unwrap().shape(), (8, 8));
        assert_eq!(det.sample_noise(&mut SplitMix64::new(1)), Noise::none());
    }

    #[test]
    fn invalid_configs() {
        let b = BayesConfig::default();
        let odd = ModelConfig {
            d_model: 7,
            n_heads: 7,
            ..tiny()
        };
        assert_eq!(
            Model::<f64>::new(odd, 5, &b, 0).unwrap_err(),
            ModelError::OddDimension(7)
        );
        let heads = ModelConfig { n_heads: 3, ..tiny() };
        assert!(matches!(
            Model::<f64>::new(heads, 5, &b, 0),
            Err(ModelError::HeadDivisibility { d_model: 8, heads: 3 })
        ));
        assert!(Model::<f64>::new(tiny(), 0, &b, 0).is_err());
    }

    #[test]
    fn f32_model_runs() {
        let m = Model::<f32>::new(tiny(), 5, &BayesConfig::default(), 3).unwrap();
        let p = m.probabilities(&doc(&[Some(0), Some(2), None, None])).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-6);
    }
}
