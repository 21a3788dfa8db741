use crate::numcore::{NumError, ParamId, ParamSet, Tape, Tensor2D, Var};
use crate::scalar::Scalar;

use super::ModelError;

/// Additive logit penalty on masked key columns.
pub const MASK_PENALTY: f64 = -1e9;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Full-width projections; head `k` uses columns `k·d_k..(k+1)·d_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderBlockParams {
    pub attn: AttnParams,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub norm1_gain: ParamId,
    pub norm1_bias: ParamId,
    pub norm2_gain: ParamId,
    pub norm2_bias: ParamId,
}

/// Output of [`multi_head_attention`] with the per-head intermediates
/// (scaled logits before masking, and attention weights).
#[derive(Debug, Clone)]
pub struct Attention {
    pub output: Var,
    pub logits: Vec<Var>,
    pub weights: Vec<Var>,
}

pub fn multi_head_attention<T: Scalar>(
    tape: &Tape<T>,
    params: &ParamSet<T>,
    seq: Var,
    mask: &[bool],
    p: &AttnParams,
    heads: usize,
) -> Result<Attention, ModelError> {
    let (len, d_model) = tape.shape(seq);
    if heads == 0 || d_model % heads != 0 {
        return Err(ModelError::HeadDivisibility { d_model, heads });
    }
    if mask.len() != len {
        return Err(NumError::ShapeMismatch {
            op: "attention mask",
            left: (len, d_model),
            right: (mask.len(), 1),
        }
        .into());
    }
    let d_k = d_model / heads;
    let q = tape.matmul(seq, tape.param(params, p.w_q))?;
    let k = tape.matmul(seq, tape.param(params, p.w_k))?;
    let v = tape.matmul(seq, tape.param(params, p.w_v))?;
    let penalty = mask
        .iter()
        .any(|m| !m)
        .then(|| {
            let row = mask
                .iter()
                .map(|&m| if m { T::zero() } else { T::of(MASK_PENALTY) })
                .collect();
            Tensor2D::from_vec(1, len, row).map(|t| tape.constant(t))
        })
        .transpose()?;
    let inv_sqrt = T::one() / T::of(d_k as f64).sqrt();

    let mut outs = Vec::with_capacity(heads);
    let mut logits = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * d_k, (h + 1) * d_k);
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let scores = tape.scale(tape.matmul(qh, tape.transpose(kh))?, inv_sqrt);
        let masked = match penalty {
            Some(pen) => tape.add_row(scores, pen)?,
            None => scores,
        };
        let a = tape.softmax_rows(masked);
        outs.push(tape.matmul(a, vh)?);
        logits.push(scores);
        weights.push(a);
    }
    let joined = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    let output = tape.matmul(joined, tape.param(params, p.w_o))?;
    Ok(Attention {
        output,
        logits,
        weights,
    })
}

/// Row-wise normalization followed by the learned gain and bias.
pub fn layer_norm<T: Scalar>(
    tape: &Tape<T>,
    params: &ParamSet<T>,
    x: Var,
    gain: ParamId,
    bias: ParamId,
) -> Result<Var, NumError> {
    let normed = tape.layer_norm_rows(x, T::of(LAYER_NORM_EPS));
    let scaled = tape.mul_row(normed, tape.param(params, gain))?;
    tape.add_row(scaled, tape.param(params, bias))
}

/// `relu(x·w1 + b1)·w2 + b2`.
pub fn feed_forward<T: Scalar>(
    tape: &Tape<T>,
    params: &ParamSet<T>,
    x: Var,
    p: &EncoderBlockParams,
) -> Result<Var, NumError> {
    let hidden = tape.add_row(
        tape.matmul(x, tape.param(params, p.ffn_w1))?,
        tape.param(params, p.ffn_b1),
    )?;
    let act = tape.relu(hidden);
    tape.add_row(
        tape.matmul(act, tape.param(params, p.ffn_w2))?,
        tape.param(params, p.ffn_b2),
    )
}

/// Post-norm residual block: `u = LN(x + MHA(x))`, `out = LN(u + FFN(u))`.
pub fn encoder_block<T: Scalar>(
    tape: &Tape<T>,
    params: &ParamSet<T>,
    seq: Var,
    mask: &[bool],
    p: &EncoderBlockParams,
    heads: usize,
) -> Result<Var, ModelError> {
    let attn = multi_head_attention(tape, params, seq, mask, &p.attn, heads)?;
    let u = layer_norm(tape, params, tape.add(seq, attn.output)?, p.norm1_gain, p.norm1_bias)?;
    let ff = feed_forward(tape, params, u, p)?;
    Ok(layer_norm(tape, params, tape.add(u, ff)?, p.norm2_gain, p.norm2_bias)?)
}
