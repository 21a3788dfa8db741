use crate::numcore::{NumError, ParamId, ParamSet, Tape, Tensor2D, Var};
use crate::scalar::Scalar;

/// Update (`z`), reset (`r`) and candidate (`h`) weights of one GRU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
}

impl GruParams {
    pub fn hidden(&self, params: &ParamSet<impl Scalar>) -> usize {
        params.value(self.u_z).rows()
    }
}

/// Recurrent weights bound to a tape once per sequence.
struct Bound {
    u_z: Var,
    u_r: Var,
    u_h: Var,
    b_z: Var,
    b_r: Var,
    b_h: Var,
}

fn bind<T: Scalar>(tape: &Tape<T>, params: &ParamSet<T>, p: &GruParams) -> Bound {
    Bound {
        u_z: tape.param(params, p.u_z),
        u_r: tape.param(params, p.u_r),
        u_h: tape.param(params, p.u_h),
        b_z: tape.param(params, p.b_z),
        b_r: tape.param(params, p.b_r),
        b_h: tape.param(params, p.b_h),
    }
}

/// Input-side products `x·W_z`, `x·W_r`, `x·W_h`.
fn project<T: Scalar>(tape: &Tape<T>, params: &ParamSet<T>, x: Var, p: &GruParams) -> Result<[Var; 3], NumError> {
    Ok([
        tape.matmul(x, tape.param(params, p.w_z))?,
        tape.matmul(x, tape.param(params, p.w_r))?,
        tape.matmul(x, tape.param(params, p.w_h))?,
    ])
}

/// ```text
/// z  = σ(x·W_z + h·U_z + b_z)
/// r  = σ(x·W_r + h·U_r + b_r)
/// h̃  = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
fn step<T: Scalar>(tape: &Tape<T>, [xz, xr, xh]: [Var; 3], h_prev: Var, w: &Bound) -> Result<Var, NumError> {
    let gate = |xw: Var, u: Var, b: Var, h: Var| -> Result<Var, NumError> {
        let hu = tape.matmul(h, u)?;
        tape.add_row(tape.add(xw, hu)?, b)
    };
    let z = tape.sigmoid(gate(xz, w.u_z, w.b_z, h_prev)?);
    let r = tape.sigmoid(gate(xr, w.u_r, w.b_r, h_prev)?);
    let reset = tape.mul(r, h_prev)?;
    let candidate = tape.tanh(gate(xh, w.u_h, w.b_h, reset)?);
    let keep = tape.add_scalar(tape.scale(z, -T::one()), T::one());
    let carried = tape.mul(keep, h_prev)?;
    let fresh = tape.mul(z, candidate)?;
    tape.add(carried, fresh)
}

/// One GRU step for a `1×d_in` input and `1×H` state.
pub fn gru_cell<T: Scalar>(
    tape: &Tape<T>,
    params: &ParamSet<T>,
    x_t: Var,
    h_prev: Var,
    p: &GruParams,
) -> Result<Var, NumError> {
    let proj = project(tape, params, x_t, p)?;
    step(tape, proj, h_prev, &bind(tape, params, p))
}

fn run_direction<T: Scalar>(
    tape: &Tape<T>,
    params: &ParamSet<T>,
    seq: Var,
    mask: &[bool],
    p: &GruParams,
    order: impl Iterator<Item = usize>,
) -> Result<Vec<Var>, NumError> {
    let [pz, pr, ph] = project(tape, params, seq, p)?;
    let bound = bind(tape, params, p);
    let mut h = tape.constant(Tensor2D::zeros(1, p.hidden(params)));
    let mut states = vec![h; mask.len()];
    for t in order {
        if mask[t] {
            let x = [tape.row(pz, t)?, tape.row(pr, t)?, tape.row(ph, t)?];
            h = step(tape, x, h, &bound)?;
        }
        states[t] = h;
    }
    Ok(states)
}

/// Forward states in columns `0..H`, backward states in `H..2H`. Both
/// directions start from zero; masked positions carry the previous state.
pub fn bigru<T: Scalar>(
    tape: &Tape<T>,
    params: &ParamSet<T>,
    seq: Var,
    mask: &[bool],
    fwd: &GruParams,
    bwd: &GruParams,
) -> Result<Var, NumError> {
    let len = tape.shape(seq).0;
    if mask.len() != len {
        return Err(NumError::ShapeMismatch {
            op: "bigru mask",
            left: (len, 1),
            right: (mask.len(), 1),
        });
    }
    let forward = run_direction(tape, params, seq, mask, fwd, 0..len)?;
    let backward = run_direction(tape, params, seq, mask, bwd, (0..len).rev())?;
    let f = tape.concat_rows(&forward)?;
    let b = tape.concat_rows(&backward)?;
    tape.concat_cols(&[f, b])
}
