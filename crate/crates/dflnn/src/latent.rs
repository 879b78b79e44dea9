//! Joint autoencoder plus dynamics training on high-dimensional
//! observations, and latent-space rollout with decoding.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::data::Trajectory;
use crate::diffcore::{Dual, DualN, ParameterStore, Real, Tape, Var};
use crate::discretization::{midpoint_pair, Discretization};
use crate::mechanics::{lift_dual, Force, ForceModel, Lagrangian, LagrangianModel};
use crate::networks::{dropout_mask_keyed, splitmix64, Autoencoder};
use crate::objective::{ae_loss, physics_loss, reg_loss_state, LossWeights, RegPoint};
use crate::rollout::{rollout, NewtonConfig};
use crate::training::{adam_step, AdamState, TrainConfig, TrainReport, Trained};
use crate::{Error, Result};

/// Autoencoder plus latent dynamics; the dynamics dimension equals the
/// latent dimension.
#[derive(Clone, Debug)]
pub struct LatentPipeline {
    pub ae: Autoencoder,
    pub lag: LagrangianModel,
    pub force: ForceModel,
}

impl LatentPipeline {
    pub fn latent_dim(&self) -> usize {
        self.ae.spec.latent_dim
    }

    pub fn encode<B: Real>(&self, params: &[B], frame: &[B]) -> Vec<B> {
        self.ae.encode(params, frame)
    }

    pub fn encode_f64(&self, params: &[f64], frame: &[f64]) -> Vec<f64> {
        self.ae.encode(params, frame)
    }
}

/// The three-term loss: physics on encoded triples, the regularity barrier
/// on encoded pairs, and per-frame reconstruction.
///
/// `w_phys/(N_T (N-1)) sum physics(phi(q)) + w_reg/R sum reg(phi(q))
///  + w_ae/(N_T (N+1)) sum ae(q)`.
#[allow(clippy::too_many_arguments)]
pub fn latent_total_loss<B: Real>(
    pipeline: &LatentPipeline,
    params: &[B],
    disc: &Discretization,
    trajectories: &[Trajectory],
    reg_points: &[RegPoint],
    weights: &LossWeights,
    squared: bool,
) -> Result<B> {
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let params_d: Vec<Dual<B>> = params.iter().map(|&p| Dual::lift(p)).collect();
    let params_dd: Vec<Dual<Dual<B>>> = params_d.iter().map(|&p| Dual::lift(p)).collect();
    let n_t = trajectories.len() as f64;
    let n_steps = trajectories[0].steps() as f64;
    let h = disc.scheme.h;

    let mut phys_sum = B::zero();
    let mut ae_sum = B::zero();
    for traj in trajectories {
        let encoded: Vec<Vec<B>> = traj
            .positions
            .iter()
            .map(|frame| {
                let f: Vec<B> = frame.iter().map(|&x| B::constant(x)).collect();
                pipeline.encode(params, &f)
            })
            .collect();
        for w in encoded.windows(3) {
            let window = [w[0].as_slice(), w[1].as_slice(), w[2].as_slice()];
            phys_sum = phys_sum
                + crate::objective::physics_loss_simple(
                    disc,
                    &pipeline.lag,
                    &pipeline.force,
                    params,
                    &window,
                    squared,
                )?;
        }
        for frame in &traj.positions {
            let f: Vec<B> = frame.iter().map(|&x| B::constant(x)).collect();
            ae_sum = ae_sum + ae_loss(&pipeline.ae, params, &f);
        }
    }
    let mut total = phys_sum.scale(weights.physics / (n_t * (n_steps - 1.0)))
        + ae_sum.scale(weights.ae / (n_t * (n_steps + 1.0)));
    if weights.reg > 0.0 && !reg_points.is_empty() {
        let mut reg_sum = B::zero();
        for p in reg_points {
            let fa: Vec<B> = p.q_a.iter().map(|&x| B::constant(x)).collect();
            let fb: Vec<B> = p.q_b.iter().map(|&x| B::constant(x)).collect();
            let za = pipeline.encode(params, &fa);
            let zb = pipeline.encode(params, &fb);
            let (qbar, vbar) = midpoint_pair(&za, &zb, h);
            reg_sum = reg_sum + reg_loss_state(&pipeline.lag, &params_dd, &qbar, &vbar);
        }
        total = total + reg_sum.scale(weights.reg / reg_points.len() as f64);
    }
    Ok(total)
}

/// Encode two seed frames, roll the latent dynamics forward, decode every
/// latent state. Prediction is read-only on the parameters.
#[allow(clippy::too_many_arguments)]
pub fn latent_rollout(
    pipeline: &LatentPipeline,
    params: &[f64],
    frame0: &[f64],
    frame1: &[f64],
    n_steps: usize,
    force_on: bool,
    disc: &Discretization,
    cfg: &NewtonConfig,
) -> Result<Vec<Vec<f64>>> {
    let z0 = pipeline.encode_f64(params, frame0);
    let z1 = pipeline.encode_f64(params, frame1);
    let latent = rollout(
        disc,
        &pipeline.lag,
        &pipeline.force,
        params,
        &z0,
        &z1,
        n_steps,
        force_on,
        cfg,
    )?;
    Ok(latent
        .positions
        .iter()
        .map(|z| pipeline.ae.decode(params, z))
        .collect())
}

const CHUNK: usize = 16;

enum Item {
    Window(usize, usize),
    Frame(usize, usize),
    Reg(usize),
}

struct LatentEpoch<'a> {
    pipeline: &'a LatentPipeline,
    disc: &'a Discretization,
    trajectories: &'a [Trajectory],
    reg_points: &'a [RegPoint],
    items: &'a [Item],
    values: &'a [f64],
    phys_coeff: f64,
    ae_coeff: f64,
    reg_coeff: f64,
    squared: bool,
    mask_units: usize,
    dropout_rate: f64,
    mask_key: u64,
}

impl<'a> LatentEpoch<'a> {
    fn chunk_grad_k<const K: usize>(
        &self,
        chunk_idx: usize,
        scratch: &mut crate::training::Scratch,
    ) -> (f64, Vec<f64>) {
        let lo = chunk_idx * CHUNK;
        let hi = (lo + CHUNK).min(self.items.len());
        scratch.tape.clear();
        let tape = &scratch.tape;
        let leaves = tape.leaves(self.values);
        let leaves_n: Vec<DualN<Var<'_>, K>> = leaves.iter().map(|&p| DualN::lift(p)).collect();
        let leaves_dd: Vec<Dual<Dual<Var<'_>>>> = leaves
            .iter()
            .map(|&p| Dual::lift(Dual::lift(p)))
            .collect();
        let mut acc = Var::constant(0.0);
        for item in &self.items[lo..hi] {
            match item {
                Item::Window(ti, start) => {
                    let frames = &self.trajectories[*ti].positions[*start..start + 3];
                    let encoded: Vec<Vec<Var<'_>>> = frames
                        .iter()
                        .map(|frame| {
                            let f: Vec<Var<'_>> =
                                frame.iter().map(|&x| Var::constant(x)).collect();
                            self.pipeline.encode(&leaves, &f)
                        })
                        .collect();
                    let window = [
                        encoded[0].as_slice(),
                        encoded[1].as_slice(),
                        encoded[2].as_slice(),
                    ];
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
                        &self.pipeline.lag,
                        &self.pipeline.force,
                        &leaves,
                        &leaves_n,
                        &window,
                        mask_ref,
                        self.squared,
                    )
                    .expect("validated window");
                    acc = acc + l.scale(self.phys_coeff);
                }
                Item::Frame(ti, n) => {
                    let frame: Vec<Var<'_>> = self.trajectories[*ti].positions[*n]
                        .iter()
                        .map(|&x| Var::constant(x))
                        .collect();
                    acc = acc + ae_loss(&self.pipeline.ae, &leaves, &frame).scale(self.ae_coeff);
                }
                Item::Reg(idx) => {
                    let p = &self.reg_points[*idx];
                    let fa: Vec<Var<'_>> = p.q_a.iter().map(|&x| Var::constant(x)).collect();
                    let fb: Vec<Var<'_>> = p.q_b.iter().map(|&x| Var::constant(x)).collect();
                    let za = self.pipeline.encode(&leaves, &fa);
                    let zb = self.pipeline.encode(&leaves, &fb);
                    let (qbar, vbar) = midpoint_pair(&za, &zb, self.disc.scheme.h);
                    let l = reg_loss_state(&self.pipeline.lag, &leaves_dd, &qbar, &vbar);
                    acc = acc + l.scale(self.reg_coeff);
                }
            }
        }
        scratch.tape.adjoints_into(acc, &mut scratch.adj);
        let grad = scratch.adj[..self.values.len()].to_vec();
        (acc.value(), grad)
    }
}

/// Joint training of the autoencoder and the latent dynamics.
#[allow(clippy::too_many_arguments)]
pub fn train_latent(
    pipeline: &LatentPipeline,
    mut store: ParameterStore,
    trajectories: &[Trajectory],
    disc: &Discretization,
    weights: &LossWeights,
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

    let (reg_points, _) =
        crate::training::select_reg_points(&train_set, weights.r_points, &mut rng);

    let mut windows = Vec::new();
    let mut frames = Vec::new();
    for (ti, traj) in train_set.iter().enumerate() {
        for start in 0..traj.positions.len().saturating_sub(2) {
            windows.push((ti, start));
        }
        for n in 0..traj.positions.len() {
            frames.push((ti, n));
        }
    }
    let n_t = train_set.len() as f64;
    let n_steps = train_set[0].steps() as f64;
    let phys_norm = weights.physics / (n_t * (n_steps - 1.0));
    let ae_norm = weights.ae / (n_t * (n_steps + 1.0));

    let mut adam = AdamState::new(store.len());
    let mut report = TrainReport::default();
    let mut best_values = store.values.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;

    for epoch in 0..config.epochs {
        let mut items = Vec::new();
        let (phys_coeff, ae_coeff) = match config.batch_size {
            None => {
                items.extend(windows.iter().map(|&(t, s)| Item::Window(t, s)));
                items.extend(frames.iter().map(|&(t, n)| Item::Frame(t, n)));
                (phys_norm, ae_norm)
            }
            Some(b) => {
                let bw = b.min(windows.len());
                let bf = b.min(frames.len());
                for _ in 0..bw {
                    let (t, s) = windows[rng.gen_range(0..windows.len())];
                    items.push(Item::Window(t, s));
                }
                for _ in 0..bf {
                    let (t, n) = frames[rng.gen_range(0..frames.len())];
                    items.push(Item::Frame(t, n));
                }
                (
                    phys_norm * windows.len() as f64 / bw as f64,
                    ae_norm * frames.len() as f64 / bf as f64,
                )
            }
        };
        if weights.reg > 0.0 && !reg_points.is_empty() {
            items.extend((0..reg_points.len()).map(Item::Reg));
        }
        let task = LatentEpoch {
            pipeline,
            disc,
            trajectories: &train_set,
            reg_points: &reg_points,
            items: &items,
            values: &store.values,
            phys_coeff,
            ae_coeff,
            reg_coeff: weights.reg / reg_points.len().max(1) as f64,
            squared: config.squared_residual,
            mask_units: pipeline.force.mask_units(),
            dropout_rate: pipeline.force.dropout_rate(),
            mask_key: splitmix64(config.seed ^ (epoch as u64).wrapping_mul(0x9e37)),
        };
        let n_chunks = items.len().div_ceil(CHUNK);
        let latent_dim = pipeline.latent_dim();
        let results = crate::with_lanes!(latent_dim, K => {
            crate::training::parallel_chunks(n_chunks, config.threads, |c, s| {
                task.chunk_grad_k::<K>(c, s)
            })
        });
        let mut loss = 0.0;
        let mut grad = vec![0.0; store.len()];
        for r in results {
            loss += r.0;
            for (g, c) in grad.iter_mut().zip(r.1) {
                *g += c;
            }
        }
        if loss.is_finite() {
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
        } else {
            report
                .events
                .push(format!("epoch {epoch}: non-finite loss, step skipped"));
        }

        let val = if val_set.is_empty() {
            loss
        } else {
            latent_total_loss(
                pipeline,
                &store.values,
                disc,
                &val_set,
                &[],
                weights,
                config.squared_residual,
            )
            .map(|v| v.primal())
            .unwrap_or(f64::INFINITY)
        };
        report.train_loss.push(loss);
        report.val_loss.push(val);
        // latent regularity: min |det S| at the encoded reg pairs
        report.min_abs_det_s.push(latent_min_abs_det(
            pipeline,
            &store.values,
            &reg_points,
            disc.scheme.h,
        ));
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

fn latent_min_abs_det(
    pipeline: &LatentPipeline,
    values: &[f64],
    reg_points: &[RegPoint],
    h: f64,
) -> f64 {
    use crate::diffcore::linalg;
    use crate::mechanics::velocity_hessian;
    let params_d = lift_dual(values);
    let params_dd = lift_dual(&params_d);
    let mut best = f64::INFINITY;
    for p in reg_points {
        let za = pipeline.encode_f64(values, &p.q_a);
        let zb = pipeline.encode_f64(values, &p.q_b);
        let (qbar, vbar) = midpoint_pair(&za, &zb, h);
        let s = velocity_hessian(&pipeline.lag, &params_dd, &qbar, &vbar);
        let det = linalg::det(&s, qbar.len()).abs();
        if det < best {
            best = det;
        }
    }
    best
}

/// Mean per-pixel reconstruction error of the autoencoder over a dataset
/// (plain MSE, not the weighted loss).
pub fn reconstruction_pixel_mse(
    pipeline: &LatentPipeline,
    values: &[f64],
    trajectories: &[Trajectory],
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for traj in trajectories {
        for frame in &traj.positions {
            let z = pipeline.encode_f64(values, frame);
            let rec = pipeline.ae.decode(values, &z);
            sum += frame
                .iter()
                .zip(&rec)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            count += frame.len();
        }
    }
    sum / count as f64
}
