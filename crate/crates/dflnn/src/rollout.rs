//! Forward prediction: implicitly solve the learned discrete forced
//! Euler-Lagrange equations step by step, with Newton iterations and an
//! analytic Jacobian from nested differentiation.

use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::diffcore::{linalg, Dual, DualN};
use crate::discretization::{Discretization, SchemeKind};
use crate::mechanics::{lift_multi, Force, Lagrangian, ZeroForce};
use crate::with_lanes;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Residual infinity-norm tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Backtracking halvings per Newton iteration.
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-10,
            max_iters: 50,
            max_halvings: 20,
        }
    }
}

/// Positions plus per-step solver telemetry.
#[derive(Clone, Debug, Default)]
pub struct RolloutResult {
    pub positions: Vec<Vec<f64>>,
    pub newton_iters: Vec<usize>,
    pub converged: Vec<bool>,
}

fn residual_f64<const K: usize, L: Lagrangian, F: Force>(
    disc: &Discretization,
    lag: &L,
    force: &F,
    params: &[f64],
    params_n: &[DualN<f64, K>],
    q_prev: &[f64],
    q_curr: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let window = [q_prev, q_curr, x];
    disc.del_residual(lag, force, params, params_n, &window, None)
        .expect("3-point window")
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One Newton solve of `r(q_prev, q_curr, x) = 0` for `x`, starting from the
/// given initial guess.
#[allow(clippy::too_many_arguments)]
fn newton_from<const K: usize, L: Lagrangian, F: Force>(
    disc: &Discretization,
    lag: &L,
    force: &F,
    params: &[f64],
    q_prev: &[f64],
    q_curr: &[f64],
    x0: Vec<f64>,
    cfg: &NewtonConfig,
) -> std::result::Result<(Vec<f64>, usize), (Vec<f64>, f64, usize)> {
    let d = q_curr.len();
    let params_n = lift_multi::<f64, K>(params);
    // views one dual level up, for the Jacobian with respect to x
    let params_dual: Vec<Dual<f64>> = params.iter().map(|&p| Dual::lift(p)).collect();
    let params_dual_n = lift_multi::<Dual<f64>, K>(&params_dual);
    let prev_dual: Vec<Dual<f64>> = q_prev.iter().map(|&p| Dual::lift(p)).collect();
    let curr_dual: Vec<Dual<f64>> = q_curr.iter().map(|&p| Dual::lift(p)).collect();

    let mut x = x0;
    let mut r = residual_f64(disc, lag, force, params, &params_n, q_prev, q_curr, &x);
    for iter in 0..cfg.max_iters {
        if inf_norm(&r) <= cfg.tol {
            return Ok((x, iter));
        }
        // Jacobian dr/dx, one dual pass per column
        let mut jac = vec![0.0; d * d]; // row i, col j
        let mut xd: Vec<Dual<f64>> = x.iter().map(|&p| Dual::lift(p)).collect();
        for j in 0..d {
            xd[j].dt = 1.0;
            let window = [prev_dual.as_slice(), curr_dual.as_slice(), xd.as_slice()];
            let rj = disc
                .del_residual(lag, force, &params_dual, &params_dual_n, &window, None)
                .expect("3-point window");
            for i in 0..d {
                jac[i * d + j] = rj[i].dt;
            }
            xd[j].dt = 0.0;
        }
        let mut step: Vec<f64> = r.iter().map(|&v| -v).collect();
        if linalg::solve(&jac, &mut step, d).is_err() {
            return Err((x, inf_norm(&r), iter));
        }
        // backtracking on |r|
        let base_norm = norm2(&r);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(&xi, &s)| xi + t * s).collect();
            let rc = residual_f64(disc, lag, force, params, &params_n, q_prev, q_curr, &cand);
            if norm2(&rc) < base_norm || inf_norm(&rc) <= cfg.tol {
                x = cand;
                r = rc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err((x, inf_norm(&r), iter));
        }
    }
    if inf_norm(&r) <= cfg.tol {
        Ok((x, cfg.max_iters))
    } else {
        Err((x, inf_norm(&r), cfg.max_iters))
    }
}

/// Solve the three-point discrete Euler-Lagrange equation for the next
/// position. Initial guess is the linear extrapolation `2 q_curr - q_prev`;
/// one retry starts from `q_curr` before giving up.
pub fn implicit_step<L: Lagrangian, F: Force>(
    disc: &Discretization,
    lag: &L,
    force: &F,
    params: &[f64],
    q_prev: &[f64],
    q_curr: &[f64],
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, usize)> {
    if disc.scheme.kind != SchemeKind::Midpoint {
        return Err(Error::InvalidArgument(
            "implicit stepping is defined for the midpoint scheme".into(),
        ));
    }
    let guess: Vec<f64> = q_curr
        .iter()
        .zip(q_prev)
        .map(|(&c, &p)| 2.0 * c - p)
        .collect();
    let d = q_curr.len();
    with_lanes!(d, K => {
        match newton_from::<K, _, _>(disc, lag, force, params, q_prev, q_curr, guess, cfg) {
            Ok(ok) => Ok(ok),
            Err(_) => {
                match newton_from::<K, _, _>(
                    disc,
                    lag,
                    force,
                    params,
                    q_prev,
                    q_curr,
                    q_curr.to_vec(),
                    cfg,
                ) {
                    Ok(ok) => Ok(ok),
                    Err((best, residual_norm, iters)) => Err(Error::NewtonDiverged {
                        best,
                        residual_norm,
                        iters,
                    }),
                }
            }
        }
    })
}

/// Recursive forward prediction: `n_steps - 1` implicit solves after the two
/// seed positions. With `force_on = false` the learned force is replaced by
/// zero, exposing the conservative core.
#[allow(clippy::too_many_arguments)]
pub fn rollout<L: Lagrangian, F: Force>(
    disc: &Discretization,
    lag: &L,
    force: &F,
    params: &[f64],
    q0: &[f64],
    q1: &[f64],
    n_steps: usize,
    force_on: bool,
    cfg: &NewtonConfig,
) -> Result<RolloutResult> {
    if force_on {
        rollout_inner(disc, lag, force, params, q0, q1, n_steps, cfg)
    } else {
        rollout_inner(
            disc,
            lag,
            &ZeroForce(q0.len()),
            params,
            q0,
            q1,
            n_steps,
            cfg,
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn rollout_inner<L: Lagrangian, F: Force>(
    disc: &Discretization,
    lag: &L,
    force: &F,
    params: &[f64],
    q0: &[f64],
    q1: &[f64],
    n_steps: usize,
    cfg: &NewtonConfig,
) -> Result<RolloutResult> {
    let mut out = RolloutResult {
        positions: vec![q0.to_vec(), q1.to_vec()],
        newton_iters: Vec::new(),
        converged: Vec::new(),
    };
    for _ in 1..n_steps {
        let n = out.positions.len();
        let (prev, curr) = (&out.positions[n - 2], &out.positions[n - 1]);
        match implicit_step(disc, lag, force, params, prev, curr, cfg) {
            Ok((next, iters)) => {
                debug_assert!({
                    let r = disc
                        .del_residual_simple(lag, force, params, &[prev, curr, &next])
                        .unwrap();
                    inf_norm(&r) <= cfg.tol
                });
                out.positions.push(next);
                out.newton_iters.push(iters);
                out.converged.push(true);
            }
            Err(Error::NewtonDiverged {
                best,
                residual_norm,
                iters,
            }) => {
                out.positions.push(best.clone());
                out.newton_iters.push(iters);
                out.converged.push(false);
                return Err(Error::NewtonDiverged {
                    best,
                    residual_norm,
                    iters,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Squared position error at step `k` for each prediction/truth pair.
pub fn extrapolation_errors_at(
    preds: &[Vec<Vec<f64>>],
    truths: &[Trajectory],
    k: usize,
) -> Result<Vec<f64>> {
    if preds.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            got: preds.len(),
        });
    }
    let mut out = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(truths) {
        if k >= p.len() || k >= t.positions.len() {
            return Err(Error::InvalidArgument(format!(
                "step {k} out of range (prediction {}, truth {})",
                p.len(),
                t.positions.len()
            )));
        }
        let e: f64 = p[k]
            .iter()
            .zip(&t.positions[k])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        out.push(e);
    }
    Ok(out)
}

/// Mean over trajectories of the squared position error at step `k`
/// (the comparison metric; the printed formula carries no square root).
pub fn extrapolation_error(preds: &[Vec<Vec<f64>>], truths: &[Trajectory], k: usize) -> Result<f64> {
    let errs = extrapolation_errors_at(preds, truths, k)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}
