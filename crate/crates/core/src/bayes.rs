//! Mean-field Gaussian posteriors over selected weights, trained by the
//! reparameterization trick with a closed-form KL penalty toward a Gaussian
//! prior, and Monte-Carlo predictive averaging at inference.
//!
//! A variational weight is a pair `(mu, rho)` with `σ = softplus(rho)`; a
//! draw is `w = mu + σ ⊙ ε`, `ε ~ N(0, 1)`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{EncodedDoc, Model, ModelError};
use crate::numcore::{softmax_rows, NumError, ParamId, ParamSet, Tape, Tensor2D, Var};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariationalParam {
    pub mu: ParamId,
    pub rho: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: f64,
    pub sigma: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { mean: 0.0, sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    pub enabled: bool,
    /// κ, the KL weight.
    pub kl_weight: f64,
    /// Draws averaged by [`predictive_mean`] at evaluation time.
    pub mc_samples: usize,
    pub prior: PriorSpec,
    /// Also make the BiGRU → model-width projection variational.
    pub projection: bool,
    /// Initial `rho` for every variational weight.
    pub rho_init: f64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            kl_weight: 1.0,
            mc_samples: 10,
            prior: PriorSpec::default(),
            projection: false,
            rho_init: -3.0,
        }
    }
}

impl BayesConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.mc_samples == 0 {
            return Err("bayes.mc_samples must be >= 1".into());
        }
        if self.prior.sigma.is_nan() || self.prior.sigma <= 0.0 {
            return Err(format!("bayes.prior_sigma must be > 0, got {}", self.prior.sigma));
        }
        if self.kl_weight.is_nan() || self.kl_weight < 0.0 {
            return Err(format!("bayes.kl_weight must be >= 0, got {}", self.kl_weight));
        }
        Ok(())
    }
}

/// Standard-normal tensor of the given shape.
pub fn standard_normal<T: Scalar>(rng: &mut SplitMix64, rows: usize, cols: usize) -> Tensor2D<T> {
    Tensor2D::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        T::of(z)
    })
}

/// `mu + softplus(rho) ⊙ noise`, recorded on the tape.
pub fn sample_weights<T: Scalar>(
    tape: &Tape<T>,
    params: &ParamSet<T>,
    vp: VariationalParam,
    noise: &Tensor2D<T>,
) -> Result<Var, NumError> {
    let mu = tape.param(params, vp.mu);
    let sigma = tape.softplus(tape.param(params, vp.rho));
    let eps = tape.constant(noise.clone());
    let spread = tape.mul(sigma, eps)?;
    tape.add(mu, spread)
}

/// Closed-form `KL(N(mu, σ²) ‖ N(m, σp²))` summed over entries:
/// `ln(σp/σ) + (σ² + (mu − m)²) / (2σp²) − 1/2`.
pub fn kl_to_prior<T: Scalar>(
    tape: &Tape<T>,
    params: &ParamSet<T>,
    vp: VariationalParam,
    prior: &PriorSpec,
) -> Result<Var, NumError> {
    let sigma_p = T::of(prior.sigma);
    let mu = tape.param(params, vp.mu);
    let sigma = tape.softplus(tape.param(params, vp.rho));
    let log_ratio = tape.add_scalar(tape.scale(tape.ln(sigma), -T::one()), sigma_p.ln());
    let var_q = tape.mul(sigma, sigma)?;
    let centered = tape.add_scalar(mu, -T::of(prior.mean));
    let sq = tape.mul(centered, centered)?;
    let spread = tape.scale(tape.add(var_q, sq)?, T::one() / (T::of(2.0) * sigma_p * sigma_p));
    let per_entry = tape.add_scalar(tape.add(log_ratio, spread)?, -T::of(0.5));
    Ok(tape.sum(per_entry))
}

/// Minibatch ELBO: `ce + κ · kl_total / M`.
pub fn elbo_loss<T: Scalar>(
    tape: &Tape<T>,
    ce: Var,
    kl_total: Var,
    batches_per_epoch: usize,
    kl_weight: f64,
) -> Result<Var, NumError> {
    assert!(batches_per_epoch >= 1, "batches_per_epoch must be positive");
    let scaled = tape.scale(kl_total, T::of(kl_weight / batches_per_epoch as f64));
    tape.add(ce, scaled)
}

/// Sum of KL terms over every variational weight of the model.
pub fn model_kl<T: Scalar>(tape: &Tape<T>, model: &Model<T>, prior: &PriorSpec) -> Result<Option<Var>, NumError> {
    let mut total: Option<Var> = None;
    for vp in model.variational_params() {
        let kl = kl_to_prior(tape, &model.params, vp, prior)?;
        total = Some(match total {
            Some(t) => tape.add(t, kl)?,
            None => kl,
        });
    }
    Ok(total)
}

/// Class probabilities averaged over `samples` posterior draws seeded by
/// `seed`. For a model without variational weights every draw is the same
/// deterministic pass.
pub fn predictive_mean<T: Scalar>(
    model: &Model<T>,
    doc: &EncodedDoc,
    samples: usize,
    seed: u64,
) -> Result<Tensor2D<T>, ModelError> {
    assert!(samples >= 1, "predictive_mean needs at least one sample");
    let mut rng = SplitMix64::new(seed);
    let mut total = Tensor2D::<T>::zeros(1, model.config().n_classes);

    if model.has_variational_projection() {
        for _ in 0..samples {
            let noise = model.sample_noise(&mut rng);
            let tape = Tape::with_checks(false);
            let logits = model.forward(&tape, doc, Some(&noise))?;
            total.add_assign(&softmax_rows(&tape.value(logits)));
        }
    } else {
        let tape = Tape::with_checks(false);
        let pooled = model.pooled(&tape, doc, None)?;
        let pooled = tape.value(pooled);
        for _ in 0..samples {
            let noise = model.sample_noise(&mut rng);
            let tape = Tape::with_checks(false);
            let x = tape.constant(pooled.clone());
            let logits = model.head_logits(&tape, x, Some(&noise))?;
            total.add_assign(&softmax_rows(&tape.value(logits)));
        }
    }
    total.scale_in_place(T::one() / T::of(samples as f64));
    Ok(total)
}
