//! Loss terms: physics residual, log-det regularity barrier, autoencoder
//! reconstruction, and the weighted total.

use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::diffcore::{linalg, norm_sq, Dual, DualN, Real};
use crate::discretization::{midpoint_pair, Discretization};
use crate::mechanics::{lift_multi, velocity_hessian, Force, Lagrangian};
use crate::networks::Autoencoder;
use crate::with_lanes;
use crate::{Error, Result};

/// Smoothing constant inside the residual norm square root; keeps the
/// unsquared norm differentiable at zero residual.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub physics: f64,
    pub reg: f64,
    pub ae: f64,
    /// Number of regularization pairs R.
    pub r_points: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            physics: 0.5,
            reg: 0.5,
            ae: 0.0,
            r_points: 100,
        }
    }
}

/// One consecutive position pair drawn from the training data, fixed for the
/// whole run.
#[derive(Clone, Debug, PartialEq)]
pub struct RegPoint {
    pub q_a: Vec<f64>,
    pub q_b: Vec<f64>,
}

/// Physics loss of one window: `(h/2) sqrt(|r|^2 + eps)`, or `(h/2) |r|^2`
/// with the squared-residual switch.
#[allow(clippy::too_many_arguments)]
pub fn physics_loss<B: Real, const K: usize, L: Lagrangian, F: Force>(
    disc: &Discretization,
    lag: &L,
    force: &F,
    params: &[B],
    params_n: &[DualN<B, K>],
    window: &[&[B]],
    mask: Option<&[f64]>,
    squared: bool,
) -> Result<B> {
    let r = disc.del_residual(lag, force, params, params_n, window, mask)?;
    let sq = norm_sq(&r);
    let half_h = 0.5 * disc.scheme.h;
    if squared {
        Ok(sq.scale(half_h))
    } else {
        Ok((sq + B::constant(NORM_EPS)).sqrt().scale(half_h))
    }
}

/// As [`physics_loss`], lifting the parameter view internally.
pub fn physics_loss_simple<B: Real, L: Lagrangian, F: Force>(
    disc: &Discretization,
    lag: &L,
    force: &F,
    params: &[B],
    window: &[&[B]],
    squared: bool,
) -> Result<B> {
    let d = window.first().map_or(0, |w| w.len());
    with_lanes!(d, K => {
        let params_n = lift_multi::<B, K>(params);
        physics_loss(disc, lag, force, params, &params_n, window, None, squared)
    })
}

/// Regularity barrier at a midpoint state: `| log | det S | |` with
/// `S = d^2 L / d vbar^2`. A vanishing determinant yields an infinite
/// sentinel value, which the trainer treats as a diagnostics event rather
/// than a crash.
pub fn reg_loss_state<B: Real, L: Lagrangian>(
    lag: &L,
    params_dd: &[Dual<Dual<B>>],
    qbar: &[B],
    vbar: &[B],
) -> B {
    let d = qbar.len();
    let s = velocity_hessian(lag, params_dd, qbar, vbar);
    let det = linalg::det(&s, d);
    if det.primal() == 0.0 {
        return B::constant(f64::INFINITY);
    }
    det.abs().ln().abs()
}

/// Regularity barrier at one data pair.
pub fn reg_loss<B: Real, L: Lagrangian>(
    lag: &L,
    params_dd: &[Dual<Dual<B>>],
    point: &RegPoint,
    h: f64,
) -> B {
    let qa: Vec<B> = point.q_a.iter().map(|&x| B::constant(x)).collect();
    let qb: Vec<B> = point.q_b.iter().map(|&x| B::constant(x)).collect();
    let (qbar, vbar) = midpoint_pair(&qa, &qb, h);
    reg_loss_state(lag, params_dd, &qbar, &vbar)
}

/// Autoencoder reconstruction loss of one sample: `(d/l) |q - psi(phi(q))|^2`.
pub fn ae_loss<B: Real>(ae: &Autoencoder, params: &[B], q: &[B]) -> B {
    let z = ae.encode(params, q);
    let rec = ae.decode(params, &z);
    let mut acc = B::zero();
    for (a, b) in q.iter().zip(&rec) {
        let diff = *a - *b;
        acc = acc + diff * diff;
    }
    acc.scale(ae.spec.data_dim as f64 / ae.spec.latent_dim as f64)
}

/// Total loss over a dataset:
/// `w_phys/(N_T (N+1)) * sum of physics + w_reg/R * sum of reg`.
///
/// Windows run over the interior points of each trajectory. The physics
/// normalizer `N_T (N+1)` is used as printed even though `N-1` windows are
/// summed per trajectory.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<B: Real, L: Lagrangian, F: Force>(
    disc: &Discretization,
    lag: &L,
    force: &F,
    params: &[B],
    trajectories: &[Trajectory],
    reg_points: &[RegPoint],
    weights: &LossWeights,
    squared: bool,
) -> Result<B> {
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let params_d: Vec<Dual<B>> = params.iter().map(|&p| Dual::lift(p)).collect();
    let params_dd: Vec<Dual<Dual<B>>> =
        params_d.iter().map(|&p| Dual::lift(p)).collect();
    let wlen = disc.window_len();
    let mut phys_sum = B::zero();
    let n_steps = trajectories[0].steps();
    for traj in trajectories {
        let qs = &traj.positions;
        if qs.len() < wlen {
            continue;
        }
        for start in 0..=qs.len() - wlen {
            let lifted: Vec<Vec<B>> = qs[start..start + wlen]
                .iter()
                .map(|q| q.iter().map(|&x| B::constant(x)).collect())
                .collect();
            let window: Vec<&[B]> = lifted.iter().map(|v| v.as_slice()).collect();
            let l = physics_loss_simple(disc, lag, force, params, &window, squared)?;
            phys_sum = phys_sum + l;
        }
    }
    let n_t = trajectories.len() as f64;
    let mut total = phys_sum.scale(weights.physics / (n_t * (n_steps as f64 + 1.0)));
    if weights.reg > 0.0 && !reg_points.is_empty() {
        let mut reg_sum = B::zero();
        for p in reg_points {
            reg_sum = reg_sum + reg_loss(lag, &params_dd, p, disc.scheme.h);
        }
        total = total + reg_sum.scale(weights.reg / reg_points.len() as f64);
    }
    Ok(total)
}
