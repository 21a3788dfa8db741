use crate::bayes::{sample_weights, VariationalParam};
use crate::numcore::{NumError, ParamId, ParamSet, Tape, Tensor2D, Var};
use crate::scalar::Scalar;

use super::ModelError;

/// A weight matrix that is either a point estimate or a Gaussian posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Point(ParamId),
    Variational(VariationalParam),
}

impl Weight {
    /// Records the weight on the tape; variational weights use `noise`
    /// (the posterior mean when `None`).
    pub fn bind<T: Scalar>(
        &self,
        tape: &Tape<T>,
        params: &ParamSet<T>,
        noise: Option<&Tensor2D<T>>,
    ) -> Result<Var, NumError> {
        match *self {
            Weight::Point(id) => Ok(tape.param(params, id)),
            Weight::Variational(vp) => match noise {
                Some(n) => sample_weights(tape, params, vp, n),
                None => Ok(tape.param(params, vp.mu)),
            },
        }
    }

    pub fn shape<T: Scalar>(&self, params: &ParamSet<T>) -> (usize, usize) {
        match *self {
            Weight::Point(id) => params.value(id).shape(),
            Weight::Variational(vp) => params.value(vp.mu).shape(),
        }
    }

    pub fn variational(&self) -> Option<VariationalParam> {
        match *self {
            Weight::Variational(vp) => Some(vp),
            Weight::Point(_) => None,
        }
    }
}

/// Affine map `x·w + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: Weight,
    pub b: ParamId,
}

impl Linear {
    pub fn apply<T: Scalar>(
        &self,
        tape: &Tape<T>,
        params: &ParamSet<T>,
        x: Var,
        noise: Option<&Tensor2D<T>>,
    ) -> Result<Var, NumError> {
        let w = self.w.bind(tape, params, noise)?;
        tape.add_row(tape.matmul(x, w)?, tape.param(params, self.b))
    }
}

/// `d_model × 2` readout over the mean-pooled sequence.
pub type ClassifierHead = Linear;

/// Mean of the unmasked rows.
pub fn mean_pool<T: Scalar>(tape: &Tape<T>, seq: Var, mask: &[bool]) -> Result<Var, ModelError> {
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(ModelError::AllMasked);
    }
    Ok(tape.mean_rows(seq, &rows)?)
}

/// Pooled logits `mean(unmasked rows)·w + b` given already-bound weights.
pub fn classify<T: Scalar>(tape: &Tape<T>, seq: Var, mask: &[bool], w: Var, b: Var) -> Result<Var, ModelError> {
    let pooled = mean_pool(tape, seq, mask)?;
    Ok(tape.add_row(tape.matmul(pooled, w)?, b)?)
}

/// `-ln softmax(logits)[label]`.
pub fn cross_entropy<T: Scalar>(tape: &Tape<T>, logits: Var, label: usize) -> Result<Var, NumError> {
    tape.cross_entropy(logits, label)
}
