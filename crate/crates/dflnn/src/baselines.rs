//! Baselines trained on the same position-only data via midpoint state
//! approximation: GLNN (explicit forced Euler-Lagrange acceleration through
//! the inverse velocity Hessian) and a Neural ODE.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::diffcore::{linalg, Dual, ParameterStore, Real, StoreBuilder, Tape, Var};
use crate::discretization::midpoint_pair;
use crate::mechanics::{
    lagrangian_grads, lift_dual, mixed_hessian_qv, velocity_hessian, Force, Lagrangian,
    LagrangianModel, ZeroForce,
};
use crate::networks::{dropout_mask_keyed, splitmix64, Mlp, MlpSpec};
use crate::training::{adam_step, AdamState, TrainConfig, TrainReport, Trained};
use crate::{Error, Result};

/// Midpoint state `(qbar, vbar)` built from one consecutive position pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MidpointState {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl MidpointState {
    pub fn from_pair(q_a: &[f64], q_b: &[f64], h: f64) -> Self {
        let (q, v) = midpoint_pair(q_a, q_b, h);
        MidpointState { q, v }
    }

    /// Exact inversion of the midpoint construction: the right endpoint.
    pub fn right_position(&self, h: f64) -> Vec<f64> {
        self.q
            .iter()
            .zip(&self.v)
            .map(|(&q, &v)| q + 0.5 * h * v)
            .collect()
    }
}

/// Explicit acceleration of the forced Euler-Lagrange equations:
/// `a = S^{-1} (dL/dq - v . d2L/dqdv + F)` with `S = d2L/dv2`.
pub fn glnn_accel<B: Real, L: Lagrangian, F: Force>(
    lag: &L,
    force: &F,
    params: &[B],
    q: &[B],
    v: &[B],
    mask: Option<&[f64]>,
) -> Result<Vec<B>> {
    let d = q.len();
    let params_d = lift_dual(params);
    let params_dd = lift_dual(&params_d);
    let s = velocity_hessian(lag, &params_dd, q, v);
    let (gq, _) = lagrangian_grads(lag, &params_d, q, v);
    let mixed = mixed_hessian_qv(lag, &params_dd, q, v);
    let f = force.eval(params, q, v, mask);
    let mut rhs = Vec::with_capacity(d);
    for i in 0..d {
        // (v . d2L/dq dv)_i = sum_j v_j d2L/dq_j dv_i
        let mut dot = B::zero();
        for j in 0..d {
            dot = dot + v[j] * mixed[j * d + i];
        }
        rhs.push(gq[i] - dot + f[i]);
    }
    linalg::solve(&s, &mut rhs, d).map_err(|_| Error::SingularHessian {
        point: q.iter().chain(v.iter()).map(|x| x.primal()).collect(),
    })?;
    Ok(rhs)
}

/// Baseline model kinds sharing the midpoint-state training scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaselineModel {
    Glnn {
        lag: LagrangianModel,
        force: crate::mechanics::ForceModel,
    },
    NeuralOde {
        dim: usize,
        field: Mlp,
    },
}

impl BaselineModel {
    pub fn init_neural_ode(
        dim: usize,
        hidden_dim: usize,
        hidden_layers: usize,
        builder: &mut StoreBuilder,
        rng: &mut StdRng,
    ) -> Self {
        let spec = MlpSpec::new(2 * dim, 2 * dim).with_hidden(hidden_dim, hidden_layers);
        BaselineModel::NeuralOde {
            dim,
            field: Mlp::init(spec, "node.field", builder, rng),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaselineModel::Glnn { lag, .. } => lag.dim(),
            BaselineModel::NeuralOde { dim, .. } => *dim,
        }
    }

    pub fn dropout_rate(&self) -> f64 {
        match self {
            BaselineModel::Glnn { force, .. } => force.dropout_rate(),
            BaselineModel::NeuralOde { .. } => 0.0,
        }
    }

    pub fn mask_units(&self) -> usize {
        match self {
            BaselineModel::Glnn { force, .. } => force.mask_units(),
            BaselineModel::NeuralOde { .. } => 0,
        }
    }

    /// State derivative `(dq, dv)` at `(q, v)`.
    fn state_dot<B: Real>(
        &self,
        params: &[B],
        q: &[B],
        v: &[B],
        force_on: bool,
        mask: Option<&[f64]>,
    ) -> Result<(Vec<B>, Vec<B>)> {
        match self {
            BaselineModel::Glnn { lag, force } => {
                let accel = if force_on {
                    glnn_accel(lag, force, params, q, v, mask)?
                } else {
                    glnn_accel(lag, &ZeroForce(q.len()), params, q, v, mask)?
                };
                Ok((v.to_vec(), accel))
            }
            BaselineModel::NeuralOde { dim, field } => {
                let mut x = q.to_vec();
                x.extend_from_slice(v);
                let out = field.forward(params, &x);
                Ok((out[..*dim].to_vec(), out[*dim..].to_vec()))
            }
        }
    }

    /// One classical RK4 step of size `h` on the midpoint-state ODE.
    pub fn step<B: Real>(
        &self,
        params: &[B],
        q: &[B],
        v: &[B],
        h: f64,
        force_on: bool,
        mask: Option<&[f64]>,
    ) -> Result<(Vec<B>, Vec<B>)> {
        let d = q.len();
        let axpy = |x: &[B], k: &[B], a: f64| -> Vec<B> {
            x.iter().zip(k).map(|(&xi, &ki)| xi + ki.scale(a)).collect()
        };
        let (k1q, k1v) = self.state_dot(params, q, v, force_on, mask)?;
        let (k2q, k2v) = self.state_dot(
            params,
            &axpy(q, &k1q, h / 2.0),
            &axpy(v, &k1v, h / 2.0),
            force_on,
            mask,
        )?;
        let (k3q, k3v) = self.state_dot(
            params,
            &axpy(q, &k2q, h / 2.0),
            &axpy(v, &k2v, h / 2.0),
            force_on,
            mask,
        )?;
        let (k4q, k4v) = self.state_dot(params, &axpy(q, &k3q, h), &axpy(v, &k3v, h), force_on, mask)?;
        let mut qn = Vec::with_capacity(d);
        let mut vn = Vec::with_capacity(d);
        for i in 0..d {
            qn.push(q[i] + (k1q[i] + (k2q[i] + k3q[i]).scale(2.0) + k4q[i]).scale(h / 6.0));
            vn.push(v[i] + (k1v[i] + (k2v[i] + k3v[i]).scale(2.0) + k4v[i]).scale(h / 6.0));
        }
        Ok((qn, vn))
    }

    /// Positions from iterated midpoint-state steps. The two seeds are kept;
    /// subsequent positions invert the midpoint construction.
    pub fn rollout(
        &self,
        params: &[f64],
        q0: &[f64],
        q1: &[f64],
        n_steps: usize,
        h: f64,
        force_on: bool,
    ) -> Result<Vec<Vec<f64>>> {
        let mut positions = vec![q0.to_vec(), q1.to_vec()];
        let mut state = MidpointState::from_pair(q0, q1, h);
        for _ in 1..n_steps {
            let (q, v) = self.step(params, &state.q, &state.v, h, force_on, None)?;
            state = MidpointState { q, v };
            if state.q.iter().chain(state.v.iter()).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("baseline rollout state".into()));
            }
            positions.push(state.right_position(h));
        }
        Ok(positions)
    }
}

/// Mean squared single-step state prediction error over all consecutive
/// window triples of the dataset.
pub fn baseline_loss(
    model: &BaselineModel,
    params: &[f64],
    trajectories: &[Trajectory],
    h: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for traj in trajectories {
        for w in traj.positions.windows(3) {
            let s0 = MidpointState::from_pair(&w[0], &w[1], h);
            let s1 = MidpointState::from_pair(&w[1], &w[2], h);
            let (q, v) = model.step(params, &s0.q, &s0.v, h, true, None)?;
            let e: f64 = q
                .iter()
                .zip(&s1.q)
                .chain(v.iter().zip(&s1.v))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sum += e;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(sum / count as f64)
}

const CHUNK: usize = 64;

struct BaselineEpoch<'a> {
    model: &'a BaselineModel,
    trajectories: &'a [Trajectory],
    windows: &'a [(usize, usize)],
    values: &'a [f64],
    h: f64,
    coeff: f64,
    mask_units: usize,
    dropout_rate: f64,
    mask_key: u64,
}

impl<'a> BaselineEpoch<'a> {
    fn chunk_grad(
        &self,
        chunk_idx: usize,
        scratch: &mut crate::training::Scratch,
    ) -> Result<(f64, Vec<f64>)> {
        let lo = chunk_idx * CHUNK;
        let hi = (lo + CHUNK).min(self.windows.len());
        scratch.tape.clear();
        let tape = &scratch.tape;
        let leaves = tape.leaves(self.values);
        let mut acc = Var::constant(0.0);
        for &(ti, start) in &self.windows[lo..hi] {
            let qs = &self.trajectories[ti].positions;
            let w = &qs[start..start + 3];
            let s0 = MidpointState::from_pair(&w[0], &w[1], self.h);
            let s1 = MidpointState::from_pair(&w[1], &w[2], self.h);
            let q0: Vec<Var<'_>> = s0.q.iter().map(|&x| Var::constant(x)).collect();
            let v0: Vec<Var<'_>> = s0.v.iter().map(|&x| Var::constant(x)).collect();
            let mask;
            let mask_ref = if self.mask_units > 0 && self.dropout_rate > 0.0 {
                let key = splitmix64(self.mask_key ^ ((ti as u64) << 32 | start as u64));
                mask = dropout_mask_keyed(self.dropout_rate, self.mask_units, key);
                Some(mask.as_slice())
            } else {
                None
            };
            let (q, v) = self
                .model
                .step(&leaves, &q0, &v0, self.h, true, mask_ref)?;
            for i in 0..q.len() {
                let dq = q[i] - Var::constant(s1.q[i]);
                let dv = v[i] - Var::constant(s1.v[i]);
                acc = acc + dq * dq + dv * dv;
            }
        }
        scratch.tape.adjoints_into(acc, &mut scratch.adj);
        let grad = scratch.adj[..self.values.len()]
            .iter()
            .map(|g| g * self.coeff)
            .collect();
        Ok((acc.value() * self.coeff, grad))
    }
}

/// Train a baseline by Adam on the midpoint single-step loss, with the same
/// trajectory-level validation split and best-epoch selection as the main
/// trainer. Singular-Hessian evaluations skip the step and are logged.
pub fn train_baseline(
    model: &BaselineModel,
    mut store: ParameterStore,
    trajectories: &[Trajectory],
    h: f64,
    config: &TrainConfig,
) -> Result<Trained> {
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = StdRng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_val = ((trajectories.len() as f64 * config.validation_fraction).round() as usize)
        .min(trajectories.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_set: Vec<Trajectory> = train_idx.iter().map(|&i| trajectories[i].clone()).collect();
    let val_set: Vec<Trajectory> = val_idx.iter().map(|&i| trajectories[i].clone()).collect();

    let mut windows = Vec::new();
    for (ti, traj) in train_set.iter().enumerate() {
        for start in 0..traj.positions.len().saturating_sub(2) {
            windows.push((ti, start));
        }
    }
    if windows.is_empty() {
        return Err(Error::InvalidArgument(
            "baseline training needs trajectories of length >= 3".into(),
        ));
    }

    let mut adam = AdamState::new(store.len());
    let mut report = TrainReport::default();
    let mut best_values = store.values.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;

    for epoch in 0..config.epochs {
        let batch: Vec<(usize, usize)> = match config.batch_size {
            None => windows.clone(),
            Some(b) => (0..b.min(windows.len()))
                .map(|_| windows[rng.gen_range(0..windows.len())])
                .collect(),
        };
        let task = BaselineEpoch {
            model,
            trajectories: &train_set,
            windows: &batch,
            values: &store.values,
            h,
            coeff: 1.0 / batch.len() as f64,
            mask_units: model.mask_units(),
            dropout_rate: model.dropout_rate(),
            mask_key: splitmix64(config.seed ^ (epoch as u64).wrapping_mul(0x9e37)),
        };
        let n_chunks = batch.len().div_ceil(CHUNK);
        let chunk_results = crate::training::parallel_chunks(n_chunks, config.threads, |c, s| {
            task.chunk_grad(c, s)
        });
        let mut loss = 0.0;
        let mut grad = vec![0.0; store.len()];
        let mut failed = false;
        for r in chunk_results {
            match r {
                Ok((l, g)) => {
                    loss += l;
                    for (a, b) in grad.iter_mut().zip(g) {
                        *a += b;
                    }
                }
                Err(e) => {
                    report.events.push(format!("epoch {epoch}: {e}, step skipped"));
                    failed = true;
                    break;
                }
            }
        }
        if !failed && loss.is_finite() {
            if adam_step(
                &mut store.values,
                &grad,
                &mut adam,
                config.lr,
                config.beta1,
                config.beta2,
                config.adam_eps,
            )
            .is_err()
            {
                report
                    .events
                    .push(format!("epoch {epoch}: non-finite gradient, step skipped"));
            }
        } else if !failed {
            report
                .events
                .push(format!("epoch {epoch}: non-finite loss, step skipped"));
        }

        let val = if val_set.is_empty() {
            loss
        } else {
            baseline_loss(model, &store.values, &val_set, h).unwrap_or(f64::INFINITY)
        };
        report.train_loss.push(loss);
        report.val_loss.push(val);
        report.min_abs_det_s.push(f64::NAN);
        if val.is_finite() && val < best_val {
            best_val = val;
            best_epoch = epoch;
            best_values.copy_from_slice(&store.values);
        }
    }
    report.best_epoch = best_epoch;
    report.best_val_loss = best_val;
    store.values = best_values;
    Ok(Trained { store, report })
}
