//! Adam optimization of the total loss, regularization-point selection,
//! validation-based checkpoint selection, and training telemetry.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::diffcore::{Dual, DualN, ParameterStore, Real, Tape, Var};
use crate::discretization::Discretization;
use crate::mechanics::{Force, Lagrangian};
use crate::networks::{dropout_mask_keyed, splitmix64};
use crate::objective::{physics_loss, reg_loss, LossWeights, RegPoint};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Windows per step; absent means the entire dataset every step.
    pub batch_size: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Use the squared residual norm in the physics term (ablation switch;
    /// the unsquared norm is the printed form).
    pub squared_residual: bool,
    /// Global-norm gradient clip, off by default.
    pub grad_clip: Option<f64>,
    /// Worker threads for loss/gradient evaluation. The chunked reduction is
    /// deterministic for any thread count.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 20_000,
            batch_size: None,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            validation_fraction: 0.1,
            squared_residual: false,
            grad_clip: None,
            threads: default_threads(),
        }
    }
}

/// Thread count from `DFLNN_THREADS`, falling back to the machine's
/// available parallelism.
pub fn default_threads() -> usize {
    if let Ok(v) = std::env::var("DFLNN_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// First/second moment state of Adam.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One Adam update with bias correction. Rejects non-finite gradients
/// without touching the parameters or the state.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Draw `r` distinct consecutive pairs uniformly without replacement, fixed
/// for the run. Falls back to all pairs (with a warning flag) when fewer
/// exist.
pub fn select_reg_points(
    trajectories: &[Trajectory],
    r: usize,
    rng: &mut StdRng,
) -> (Vec<RegPoint>, bool) {
    let mut pairs = Vec::new();
    for traj in trajectories {
        for w in traj.positions.windows(2) {
            pairs.push(RegPoint {
                q_a: w[0].clone(),
                q_b: w[1].clone(),
            });
        }
    }
    if r >= pairs.len() {
        let warned = r > pairs.len();
        return (pairs, warned);
    }
    // partial Fisher-Yates for the first r slots
    let n = pairs.len();
    for i in 0..r {
        let j = rng.gen_range(i..n);
        pairs.swap(i, j);
    }
    pairs.truncate(r);
    (pairs, false)
}

/// Per-epoch telemetry and diagnostics events.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Smallest |det S| over the regularization points, per epoch.
    pub min_abs_det_s: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub events: Vec<String>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!(
                "{i},{},{}\n",
                crate::data::io::format_f64(*t),
                crate::data::io::format_f64(*v)
            ));
        }
        out
    }
}

/// Reusable per-worker evaluation state: the tape and the adjoint buffer.
pub(crate) struct Scratch {
    pub tape: Tape,
    pub adj: Vec<f64>,
}

impl Scratch {
    pub fn new() -> Self {
        Scratch {
            tape: Tape::with_capacity(1 << 16),
            adj: Vec::new(),
        }
    }
}

/// Run `n_chunks` independent jobs over a fixed-size worker pool, returning
/// results in chunk order. Each worker reuses one scratch across its chunks,
/// and the ordered merge keeps float reductions deterministic for any
/// thread count.
pub(crate) fn parallel_chunks<T: Send>(
    n_chunks: usize,
    threads: usize,
    f: impl Fn(usize, &mut Scratch) -> T + Sync,
) -> Vec<T> {
    if threads <= 1 || n_chunks <= 1 {
        let mut scratch = Scratch::new();
        return (0..n_chunks).map(|c| f(c, &mut scratch)).collect();
    }
    let counter = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<T>>> =
        (0..n_chunks).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n_chunks) {
            scope.spawn(|| {
                let mut scratch = Scratch::new();
                loop {
                    let c = counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if c >= n_chunks {
                        break;
                    }
                    *slots[c].lock().unwrap() = Some(f(c, &mut scratch));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|cell| cell.into_inner().unwrap().expect("all chunks ran"))
        .collect()
}

enum WorkItem {
    /// (trajectory index, window start)
    Window(usize, usize),
    Reg(usize),
}

struct EpochTask<'a, L, F> {
    lag: &'a L,
    force: &'a F,
    disc: &'a Discretization,
    trajectories: &'a [Trajectory],
    reg_points: &'a [RegPoint],
    items: &'a [WorkItem],
    values: &'a [f64],
    phys_coeff: f64,
    reg_coeff: f64,
    squared: bool,
    mask_units: usize,
    dropout_rate: f64,
    mask_key: u64,
}

const CHUNK: usize = 64;

impl<'a, L: Lagrangian + Sync, F: Force + Sync> EpochTask<'a, L, F> {
    /// Loss and gradient of one chunk of work items on the reused tape,
    /// monomorphized over the tangent lane count.
    fn chunk_grad_k<const K: usize>(
        &self,
        chunk_idx: usize,
        scratch: &mut Scratch,
    ) -> (f64, Vec<f64>) {
        let lo = chunk_idx * CHUNK;
        let hi = (lo + CHUNK).min(self.items.len());
        scratch.tape.clear();
        let tape = &scratch.tape;
        let leaves = tape.leaves(self.values);
        let leaves_n: Vec<DualN<Var<'_>, K>> =
            leaves.iter().map(|&p| DualN::lift(p)).collect();
        let leaves_dd: Vec<Dual<Dual<Var<'_>>>> = leaves
            .iter()
            .map(|&p| Dual::lift(Dual::lift(p)))
            .collect();
        let mut acc = Var::constant(0.0);
        for item in &self.items[lo..hi] {
            match item {
                WorkItem::Window(ti, start) => {
                    let traj = &self.trajectories[*ti];
                    let wlen = self.disc.window_len();
                    let lifted: Vec<Vec<Var<'_>>> = traj.positions[*start..start + wlen]
                        .iter()
                        .map(|q| q.iter().map(|&x| Var::constant(x)).collect())
                        .collect();
                    let window: Vec<&[Var<'_>]> = lifted.iter().map(|v| v.as_slice()).collect();
                    let mask;
                    let mask_ref = if self.mask_units > 0 && self.dropout_rate > 0.0 {
                        let key = splitmix64(
                            self.mask_key ^ ((*ti as u64) << 32 | *start as u64),
                        );
                        mask = dropout_mask_keyed(self.dropout_rate, self.mask_units, key);
                        Some(mask.as_slice())
                    } else {
                        None
                    };
                    let l = physics_loss(
                        self.disc,
                        self.lag,
                        self.force,
                        &leaves,
                        &leaves_n,
                        &window,
                        mask_ref,
                        self.squared,
                    )
                    .expect("validated window");
                    acc = acc + l.scale(self.phys_coeff);
                }
                WorkItem::Reg(idx) => {
                    let l = reg_loss(
                        self.lag,
                        &leaves_dd,
                        &self.reg_points[*idx],
                        self.disc.scheme.h,
                    );
                    acc = acc + l.scale(self.reg_coeff);
                }
            }
        }
        scratch.tape.adjoints_into(acc, &mut scratch.adj);
        let grad = scratch.adj[..self.values.len()].to_vec();
        (acc.value(), grad)
    }

    /// Deterministic parallel evaluation: fixed chunk boundaries, chunk
    /// results combined in index order regardless of thread count.
    fn loss_and_grad(&self, threads: usize) -> (f64, Vec<f64>) {
        let n_chunks = self.items.len().div_ceil(CHUNK);
        let dim = self.trajectories.first().map_or(1, |t| t.dim());
        let results = crate::with_lanes!(dim, K => {
            parallel_chunks(n_chunks, threads, |c, scratch| {
                self.chunk_grad_k::<K>(c, scratch)
            })
        });
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.values.len()];
        for r in results {
            loss += r.0;
            for (g, c) in grad.iter_mut().zip(r.1) {
                *g += c;
            }
        }
        (loss, grad)
    }
}

/// Physics-term validation loss (value only, dropout off).
fn validation_loss<L: Lagrangian, F: Force>(
    lag: &L,
    force: &F,
    values: &[f64],
    disc: &Discretization,
    trajectories: &[Trajectory],
    squared: bool,
) -> f64 {
    let wlen = disc.window_len();
    let mut sum = 0.0;
    let mut n_steps = 0usize;
    for traj in trajectories {
        n_steps = traj.steps();
        for start in 0..=traj.positions.len() - wlen {
            let window: Vec<&[f64]> = traj.positions[start..start + wlen]
                .iter()
                .map(|v| v.as_slice())
                .collect();
            sum += crate::objective::physics_loss_simple(
                disc, lag, force, values, &window, squared,
            )
            .expect("validated window");
        }
    }
    sum / (trajectories.len() as f64 * (n_steps as f64 + 1.0))
}

/// Smallest |det S| across the regularization points at the current
/// parameters (plain f64 evaluation).
pub fn min_abs_det_s<L: Lagrangian>(
    lag: &L,
    values: &[f64],
    reg_points: &[RegPoint],
    h: f64,
) -> f64 {
    use crate::diffcore::linalg;
    use crate::discretization::midpoint_pair;
    use crate::mechanics::velocity_hessian;
    let params_d: Vec<Dual<f64>> = values.iter().map(|&v| Dual::lift(v)).collect();
    let params_dd: Vec<Dual<Dual<f64>>> = params_d.iter().map(|&v| Dual::lift(v)).collect();
    let mut best = f64::INFINITY;
    for p in reg_points {
        let d = p.q_a.len();
        let (qbar, vbar) = midpoint_pair(&p.q_a, &p.q_b, h);
        let s = velocity_hessian(lag, &params_dd, &qbar, &vbar);
        let det = linalg::det(&s, d).abs();
        if det < best {
            best = det;
        }
    }
    best
}

/// Outcome of a training run: the store holds the best-validation
/// parameters.
pub struct Trained {
    pub store: ParameterStore,
    pub report: TrainReport,
}

/// Minimize the total loss with Adam. The trajectory list is split into
/// train/validation by trajectory; the returned parameters are those of the
/// epoch with the lowest validation loss.
#[allow(clippy::too_many_arguments)]
pub fn train<L: Lagrangian + Sync, F: Force + Sync>(
    lag: &L,
    force: &F,
    mut store: ParameterStore,
    trajectories: &[Trajectory],
    disc: &Discretization,
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<Trained> {
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for t in trajectories {
        t.validate()?;
        if t.positions.len() < disc.window_len() {
            return Err(Error::InvalidArgument(format!(
                "trajectory of {} samples is shorter than one {}-point window",
                t.positions.len(),
                disc.window_len()
            )));
        }
    }
    let mut rng = StdRng::seed_from_u64(config.seed);

    // train/validation split by trajectory
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

    let (reg_points, warned) = select_reg_points(&train_set, weights.r_points, &mut rng);
    let mut report = TrainReport::default();
    if warned {
        report.events.push(format!(
            "requested {} regularization pairs but only {} exist; using all",
            weights.r_points,
            reg_points.len()
        ));
    }

    // enumerate all training windows
    let wlen = disc.window_len();
    let mut all_windows = Vec::new();
    for (ti, traj) in train_set.iter().enumerate() {
        for start in 0..=traj.positions.len() - wlen {
            all_windows.push((ti, start));
        }
    }
    let n_t = train_set.len() as f64;
    let n_steps = train_set[0].steps() as f64;
    let full_norm = weights.physics / (n_t * (n_steps + 1.0));

    let mut adam = AdamState::new(store.len());
    let mut best_values = store.values.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let dropout_rate = force.dropout_rate();
    let mask_units = force.mask_units();

    for epoch in 0..config.epochs {
        // assemble this epoch's work items
        let mut items: Vec<WorkItem> = Vec::new();
        let phys_coeff = match config.batch_size {
            None => {
                items.extend(all_windows.iter().map(|&(t, s)| WorkItem::Window(t, s)));
                full_norm
            }
            Some(b) => {
                let b = b.min(all_windows.len());
                for _ in 0..b {
                    let (t, s) = all_windows[rng.gen_range(0..all_windows.len())];
                    items.push(WorkItem::Window(t, s));
                }
                // unbiased estimate of the full physics term
                full_norm * all_windows.len() as f64 / b as f64
            }
        };
        if weights.reg > 0.0 && !reg_points.is_empty() {
            items.extend((0..reg_points.len()).map(WorkItem::Reg));
        }
        let task = EpochTask {
            lag,
            force,
            disc,
            trajectories: &train_set,
            reg_points: &reg_points,
            items: &items,
            values: &store.values,
            phys_coeff,
            reg_coeff: weights.reg / reg_points.len().max(1) as f64,
            squared: config.squared_residual,
            mask_units,
            dropout_rate,
            mask_key: splitmix64(config.seed ^ (epoch as u64).wrapping_mul(0x9e37)),
        };
        let (loss, mut grad) = task.loss_and_grad(config.threads);

        if let Some(clip) = config.grad_clip {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                let s = clip / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }

        let stepped = if loss.is_finite() {
            adam_step(
                &mut store.values,
                &grad,
                &mut adam,
                config.lr,
                config.beta1,
                config.beta2,
                config.adam_eps,
            )
            .is_ok()
        } else {
            false
        };
        if !stepped {
            report
                .events
                .push(format!("epoch {epoch}: non-finite loss or gradient, step skipped"));
        }

        let val = if val_set.is_empty() {
            loss
        } else {
            validation_loss(
                lag,
                force,
                &store.values,
                disc,
                &val_set,
                config.squared_residual,
            )
        };
        report.train_loss.push(loss);
        report.val_loss.push(val);
        report
            .min_abs_det_s
            .push(min_abs_det_s(lag, &store.values, &reg_points, disc.scheme.h));
        if val.is_finite() && val < best_val {
            best_val = val;
            best_epoch = epoch;
            best_values.copy_from_slice(&store.values);
        }
        if !loss.is_finite() && report.events.len() > 50 {
            report.events.push(format!(
                "epoch {epoch}: aborting, loss stayed non-finite"
            ));
            break;
        }
    }

    report.best_epoch = best_epoch;
    report.best_val_loss = best_val;
    store.values = best_values;
    Ok(Trained { store, report })
}
