//! Differentiation engine: exact nested derivatives of scalar parametric
//! functions.
//!
//! Input derivatives (gradients, Hessians) are computed by forward-mode
//! dual numbers; parameter gradients by a reverse-mode tape. Nesting duals
//! over tape variables yields parameter gradients of scalars that are
//! themselves built from input derivatives, which is what the physics loss
//! requires. Input dimensions here are tiny, parameter counts are in the
//! thousands, so this ordering does the asymptotically cheap thing on both
//! sides.

pub mod dual;
pub mod linalg;
pub mod real;
pub mod store;
pub mod tape;

pub use dual::{Dual, DualN};
pub use real::{dot, norm_sq, Real};
pub use store::{concat_stores, ParamSlice, ParameterStore, StoreBuilder};
pub use tape::{Tape, Var};

use crate::{Error, Result};

/// A scalar function of (parameters, inputs), written generically over the
/// scalar type so every derivative order evaluates the same code.
pub trait ScalarFunction {
    fn input_dim(&self) -> usize;
    fn eval<T: Real>(&self, params: &[T], x: &[T]) -> T;
}

/// A scalar objective of the parameters alone (inputs baked in).
pub trait ParamObjective {
    fn eval<T: Real>(&self, params: &[T]) -> T;
}

/// Which results a combined evaluation should produce.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiffRequest {
    pub want_value: bool,
    pub want_input_grad: bool,
    pub want_input_hessian: bool,
    pub want_param_grad: bool,
}

/// Results of a combined evaluation; absent pieces are `None`.
#[derive(Clone, Debug, Default)]
pub struct DiffResult {
    pub value: Option<f64>,
    pub input_grad: Option<Vec<f64>>,
    pub input_hessian: Option<Vec<Vec<f64>>>,
    pub param_grad: Option<Vec<f64>>,
}

fn check_arity<F: ScalarFunction>(f: &F, x: &[f64]) -> Result<()> {
    if x.len() != f.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: f.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Value of `f` at `x`.
pub fn eval_value<F: ScalarFunction>(f: &F, params: &ParameterStore, x: &[f64]) -> Result<f64> {
    check_arity(f, x)?;
    Ok(f.eval(&params.values, x))
}

/// Value and exact input gradient of `f` at `x`, one dual pass per input.
pub fn eval_with_input_grad<F: ScalarFunction>(
    f: &F,
    params: &ParameterStore,
    x: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_arity(f, x)?;
    let m = x.len();
    let p: Vec<Dual<f64>> = params.values.iter().map(|&v| Dual::lift(v)).collect();
    let mut grad = vec![0.0; m];
    let mut value = f.eval(&params.values, x);
    for i in 0..m {
        let xi: Vec<Dual<f64>> = x
            .iter()
            .enumerate()
            .map(|(j, &v)| Dual::new(v, if i == j { 1.0 } else { 0.0 }))
            .collect();
        let y = f.eval(&p, &xi);
        grad[i] = y.dt;
        value = y.re;
    }
    Ok((value, grad))
}

/// Exact input Hessian of `f` at `x`. Every entry is computed independently
/// by one hyper-dual pass, so symmetry of the result is a genuine property
/// of the evaluation rather than a construction artifact.
pub fn eval_input_hessian<F: ScalarFunction>(
    f: &F,
    params: &ParameterStore,
    x: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_arity(f, x)?;
    let m = x.len();
    let p: Vec<Dual<Dual<f64>>> = params
        .values
        .iter()
        .map(|&v| Dual::lift(Dual::lift(v)))
        .collect();
    let mut h = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let xi: Vec<Dual<Dual<f64>>> = x
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    Dual::new(
                        Dual::new(v, if k == i { 1.0 } else { 0.0 }),
                        Dual::new(if k == j { 1.0 } else { 0.0 }, 0.0),
                    )
                })
                .collect();
            h[i][j] = f.eval(&p, &xi).dt.dt;
        }
    }
    Ok(h)
}

/// Value and exact gradient of a scalar objective with respect to every
/// parameter, by one tape recording and one reverse sweep.
pub fn eval_param_grad<O: ParamObjective>(
    obj: &O,
    params: &ParameterStore,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let leaves = tape.leaves(&params.values);
    let y = obj.eval(&leaves);
    let grad = tape.gradient(y, params.len());
    Ok((y.value(), grad))
}

/// Combined entry point driven by a [`DiffRequest`].
pub fn evaluate<F: ScalarFunction + ParamObjective>(
    f: &F,
    params: &ParameterStore,
    x: &[f64],
    req: DiffRequest,
) -> Result<DiffResult> {
    let mut out = DiffResult::default();
    if req.want_value {
        out.value = Some(eval_value(f, params, x)?);
    }
    if req.want_input_grad {
        let (v, g) = eval_with_input_grad(f, params, x)?;
        out.value = Some(v);
        out.input_grad = Some(g);
    }
    if req.want_input_hessian {
        out.input_hessian = Some(eval_input_hessian(f, params, x)?);
    }
    if req.want_param_grad {
        let (v, g) = eval_param_grad(f, params)?;
        out.value.get_or_insert(v);
        out.param_grad = Some(g);
    }
    Ok(out)
}
