use serde::{Deserialize, Serialize};

use crate::numcore::{ParamSet, Parameter};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(format!(
                "adam betas must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(format!("adam eps must be positive, got {}", self.eps));
        }
        Ok(())
    }
}

/// Global L2 norm over every gradient entry.
pub fn global_grad_norm<T: Scalar>(params: &ParamSet<T>) -> f64 {
    params
        .iter()
        .map(|(_, p)| p.grad.sum_of_squares().as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients by `threshold / norm` when the global norm exceeds
/// `threshold`; returns the factor applied (1 when untouched).
pub fn clip_gradients<T: Scalar>(params: &mut ParamSet<T>, threshold: f64) -> f64 {
    let norm = global_grad_norm(params);
    if norm <= threshold || norm == 0.0 {
        return 1.0;
    }
    let factor = threshold / norm;
    for p in params.iter_mut() {
        p.grad.scale_in_place(T::of(factor));
    }
    factor
}

/// One bias-corrected Adam update; increments `step_count` first.
pub fn adam_step<T: Scalar>(param: &mut Parameter<T>, lr: f64, hyper: &AdamHyper) {
    param.step_count += 1;
    let t = param.step_count as i32;
    let (b1, b2) = (T::of(hyper.beta1), T::of(hyper.beta2));
    let corr1 = T::one() - b1.powi(t);
    let corr2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::of(lr), T::of(hyper.eps));
    let Parameter {
        value,
        grad,
        adam_m,
        adam_v,
        ..
    } = param;
    let entries = value
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(adam_m.data_mut().iter_mut().zip(adam_v.data_mut()));
    for ((theta, &g), (m, v)) in entries {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / corr1;
        let v_hat = *v / corr2;
        *theta -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor2D;

    fn with_grads(grads: &[&[f64]]) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        for (i, g) in grads.iter().enumerate() {
            let id = ps.add(format!("p{i}"), Tensor2D::zeros(1, g.len()));
            ps.get_mut(id).grad = Tensor2D::from_rows(&[g]);
        }
        ps
    }

    #[test]
    fn clipping_examples() {
        let mut ps = with_grads(&[&[12.0], &[16.0]]);
        assert_eq!(clip_gradients(&mut ps, 10.0), 0.5);
        assert!((global_grad_norm(&ps) - 10.0).abs() < 1e-12);

        let mut ps = with_grads(&[&[3.0]]);
        assert_eq!(clip_gradients(&mut ps, 10.0), 1.0);
        assert_eq!(ps.grad(ps.ids().next().unwrap()).item(), 3.0);

        let mut ps = with_grads(&[&[0.0, 0.0]]);
        assert_eq!(clip_gradients(&mut ps, 10.0), 1.0);
    }

    #[test]
    fn zero_gradient_and_zero_lr_leave_theta() {
        let mut p = Parameter::new(Tensor2D::scalar(1.5));
        adam_step(&mut p, 0.1, &AdamHyper::default());
        assert_eq!(p.value.item(), 1.5);

        p.grad = Tensor2D::scalar(2.0);
        adam_step(&mut p, 0.0, &AdamHyper::default());
        assert_eq!(p.value.item(), 1.5);
        assert!(p.adam_m.item() != 0.0 && p.adam_v.item() != 0.0);
        assert_eq!(p.step_count, 2);
    }

    #[test]
    fn hyper_validation() {
        assert!(AdamHyper::default().validate().is_ok());
        assert!(AdamHyper {
            beta1: 1.0,
            ..AdamHyper::default()
        }
        .validate()
        .is_err());
    }
}
