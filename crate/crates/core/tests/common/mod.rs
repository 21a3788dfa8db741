#![allow(dead_code)]

use veritas_core::numcore::{ParamSet, Tape, Tensor2D, Var};
use veritas_core::rng::SplitMix64;

/// Pass when the absolute error is below `abs_tol` or the relative error
/// (against the larger magnitude) is below `rel_tol`.
pub fn close(analytic: f64, numeric: f64, rel_tol: f64, abs_tol: f64) -> bool {
    let err = (analytic - numeric).abs();
    err <= abs_tol || err / analytic.abs().max(numeric.abs()) < rel_tol
}

/// Central finite differences over every entry of every parameter, compared
/// against the tape's analytic gradient. Returns the worst offender on failure.
pub fn gradcheck<F>(params: &mut ParamSet<f64>, loss: F, h: f64, rel_tol: f64, abs_tol: f64) -> Result<usize, String>
where
    F: Fn(&ParamSet<f64>, &Tape<f64>) -> Var,
{
    params.zero_grads();
    let tape = Tape::with_checks(true);
    let l = loss(params, &tape);
    tape.backward(l, params).expect("backward");
    let analytic: Vec<Tensor2D<f64>> = params.ids().map(|id| params.grad(id).clone()).collect();

    let eval = |p: &ParamSet<f64>| {
        let tape = Tape::with_checks(true);
        let l = loss(p, &tape);
        tape.value(l).item()
    };
    let mut checked = 0;
    let ids: Vec<_> = params.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        for i in 0..params.value(id).len() {
            let orig = params.value(id).data()[i];
            params.get_mut(id).value.data_mut()[i] = orig + h;
            let up = eval(params);
            params.get_mut(id).value.data_mut()[i] = orig - h;
            let down = eval(params);
            params.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k].data()[i];
            if !close(a, numeric, rel_tol, abs_tol) {
                return Err(format!(
                    "param {} entry {i}: analytic {a:e} vs numeric {numeric:e}",
                    params.name(id)
                ));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn random_tensor(rng: &mut SplitMix64, rows: usize, cols: usize, scale: f64) -> Tensor2D<f64> {
    Tensor2D::from_fn(rows, cols, |_, _| (rng.next_f64() * 2.0 - 1.0) * scale)
}

pub mod oracle;
