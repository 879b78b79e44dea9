//! Manual timing probes, run with:
//! `cargo test -p dflnn --test bench -- --ignored --nocapture`

use std::time::Instant;

use rand::rngs::StdRng;
use rand::SeedableRng;

use dflnn::data::{add_noise, dp_ode, integrate, paper_noise_sigma, DoublePendulumParams};
use dflnn::diffcore::StoreBuilder;
use dflnn::discretization::{Discretization, Scheme};
use dflnn::mechanics::{ForceModel, LagrangianModel};
use dflnn::objective::LossWeights;
use dflnn::training::{train, TrainConfig};

#[test]
#[ignore]
fn bench_task1_epochs() {
    let p = DoublePendulumParams::default();
    let mut rng = StdRng::seed_from_u64(0);
    let sigma = paper_noise_sigma(0.1);
    let trajs: Vec<_> = (0..64)
        .map(|i| {
            use rand::Rng;
            let th1 = rng.gen_range(-0.5..0.5);
            let th2 = rng.gen_range(-0.5..0.5);
            let ode = move |s: &[f64]| dp_ode(s, &p);
            let clean = integrate(&ode, &[th1, th2, 0.0, 0.0], 2, 0.1, 100, 20).unwrap();
            add_noise(&clean, sigma * (i as f64 / 63.0).sqrt(), &mut rng)
        })
        .collect();
    let mut b = StoreBuilder::new();
    let lag = LagrangianModel::init_mechanical(2, 20, 2, 1e-3, false, &mut b, &mut rng);
    let force = ForceModel::init_linear_rayleigh(2, &mut b);
    let store = b.finish();
    println!("params: {}", store.len());
    let disc = Discretization::new(Scheme::midpoint(0.1)).unwrap();
    let cfg = TrainConfig {
        epochs: 25,
        threads: dflnn::training::default_threads(),
        ..Default::default()
    };
    let t0 = Instant::now();
    let out = train(&lag, &force, store, &trajs, &disc, &LossWeights::default(), &cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "25 epochs in {dt:.2}s -> {:.1} ms/epoch (threads {}), final loss {:.4}",
        dt / 25.0 * 1000.0,
        cfg.threads,
        out.report.train_loss.last().unwrap()
    );
}

#[test]
#[ignore]
fn bench_nodes_per_window() {
    use dflnn::diffcore::{DualN, Real, Tape, Var};
    use dflnn::objective::physics_loss;
    let mut rng = StdRng::seed_from_u64(0);
    let mut b = StoreBuilder::new();
    let lag = LagrangianModel::init_mechanical(2, 20, 2, 1e-3, false, &mut b, &mut rng);
    let force = ForceModel::init_linear_rayleigh(2, &mut b);
    let store = b.finish();
    let disc = Discretization::new(Scheme::midpoint(0.1)).unwrap();
    let tape = Tape::new();
    let leaves = tape.leaves(&store.values);
    let leaves_n: Vec<DualN<Var, 4>> = leaves.iter().map(|&p| DualN::lift(p)).collect();
    let n0 = tape.node_count();
    let w = [vec![0.1, 0.2], vec![0.15, 0.18], vec![0.2, 0.15]];
    let refs: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
    let lifted: Vec<Vec<Var>> = w.iter().map(|q| q.iter().map(|&x| Var::constant(x)).collect()).collect();
    let window: Vec<&[Var]> = lifted.iter().map(|v| v.as_slice()).collect();
    let _ = refs;
    let t0 = Instant::now();
    let reps = 2000;
    for _ in 0..reps {
        let _ = physics_loss(&disc, &lag, &force, &leaves, &leaves_n, &window, None, false).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    let total = tape.node_count() - n0;
    println!(
        "nodes per window: {}  record time: {:.1} us/window",
        total / reps,
        dt / reps as f64 * 1e6
    );
}

#[test]
#[ignore]
fn bench_components() {
    use dflnn::mechanics::lift_multi;
    use dflnn::objective::{physics_loss, reg_loss, RegPoint};
    let mut rng = StdRng::seed_from_u64(0);
    let mut b = StoreBuilder::new();
    let lag = LagrangianModel::init_mechanical(2, 20, 2, 1e-3, false, &mut b, &mut rng);
    let force = ForceModel::init_linear_rayleigh(2, &mut b);
    let store = b.finish();
    let disc = Discretization::new(Scheme::midpoint(0.1)).unwrap();
    let w = [vec![0.1, 0.2], vec![0.15, 0.18], vec![0.2, 0.15]];

    // (a) windows on a cleared tape, record + sweep
    let mut tape = dflnn::diffcore::Tape::with_capacity(1 << 16);
    let mut adj = Vec::new();
    let reps = 500;
    let t0 = Instant::now();
    for _ in 0..reps {
        tape.clear();
        let leaves = tape.leaves(&store.values);
        let leaves_n: Vec<dflnn::diffcore::DualN<dflnn::diffcore::Var, 4>> =
            lift_multi(&leaves);
        let lifted: Vec<Vec<dflnn::diffcore::Var>> = w
            .iter()
            .map(|q| q.iter().map(|&x| <dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(x)).collect())
            .collect();
        let window: Vec<&[dflnn::diffcore::Var]> = lifted.iter().map(|v| v.as_slice()).collect();
        let mut acc = <dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.0);
        for _ in 0..64 {
            let l = physics_loss(&disc, &lag, &force, &leaves, &leaves_n, &window, None, false)
                .unwrap();
            acc = acc + l;
        }
        tape.adjoints_into(acc, &mut adj);
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "windows: {:.1} us per window (nodes/chunk {})",
        dt / reps as f64 / 64.0 * 1e6,
        tape.node_count()
    );

    // (b) reg points on a cleared tape
    use dflnn::diffcore::Dual;
    let pt = RegPoint {
        q_a: vec![0.1, 0.2],
        q_b: vec![0.12, 0.21],
    };
    let t0 = Instant::now();
    for _ in 0..reps {
        tape.clear();
        let leaves = tape.leaves(&store.values);
        let leaves_dd: Vec<Dual<Dual<dflnn::diffcore::Var>>> =
            leaves.iter().map(|&p| Dual::lift(Dual::lift(p))).collect();
        let mut acc = <dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.0);
        for _ in 0..64 {
            acc = acc + reg_loss(&lag, &leaves_dd, &pt, 0.1);
        }
        tape.adjoints_into(acc, &mut adj);
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "reg points: {:.1} us per point (nodes/chunk {})",
        dt / reps as f64 / 64.0 * 1e6,
        tape.node_count()
    );

    // (c) f64 validation-path residual
    let refs: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
    let t0 = Instant::now();
    let reps2 = 20_000;
    for _ in 0..reps2 {
        let _ = dflnn::objective::physics_loss_simple(&disc, &lag, &force, &store.values, &refs, false)
            .unwrap();
    }
    println!(
        "f64 residual: {:.1} us per window",
        t0.elapsed().as_secs_f64() / reps2 as f64 * 1e6
    );
}

#[test]
#[ignore]
fn bench_micro() {
    use dflnn::diffcore::{Dual, DualN, Tape};
    use dflnn::mechanics::{lagrangian_grads_multi, lift_multi, Lagrangian};
    let mut rng = StdRng::seed_from_u64(0);
    let mut b = StoreBuilder::new();
    let lag = LagrangianModel::init_mechanical(2, 20, 2, 1e-3, false, &mut b, &mut rng);
    let store = b.finish();
    let mut tape = Tape::with_capacity(1 << 20);
    let reps = 20_000;

    // (1) plain f64 Lagrangian eval
    let t0 = Instant::now();
    let mut s = 0.0;
    for i in 0..reps {
        s += lag.eval(&store.values, &[0.1 + i as f64 * 1e-9, 0.2], &[0.3, 0.4]);
    }
    println!("f64 L eval: {:.2} us ({s:.3})", t0.elapsed().as_secs_f64() / reps as f64 * 1e6);

    // (2) DualN<f64,4> gradient (no tape)
    let params_n4: Vec<DualN<f64, 4>> = lift_multi(&store.values);
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = lagrangian_grads_multi(&lag, &params_n4, &[0.1, 0.2], &[0.3, 0.4]);
    }
    println!("DualN<f64,4> grads: {:.2} us", t0.elapsed().as_secs_f64() / reps as f64 * 1e6);

    // (3) Dual<f64> single-tangent grads (4 passes)
    let params_d: Vec<Dual<f64>> = store.values.iter().map(|&v| Dual::lift(v)).collect();
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = dflnn::mechanics::lagrangian_grads(&lag, &params_d, &[0.1, 0.2], &[0.3, 0.4]);
    }
    println!("Dual<f64> grads x4: {:.2} us", t0.elapsed().as_secs_f64() / reps as f64 * 1e6);

    // (4) Var value eval (tape recording only)
    let reps2 = 2000;
    let t0 = Instant::now();
    for _ in 0..reps2 {
        tape.clear();
        let leaves = tape.leaves(&store.values);
        let q = [<dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.1), <dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.2)];
        let v = [<dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.3), <dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.4)];
        let _ = lag.eval(&leaves, &q, &v);
    }
    println!("Var L eval: {:.2} us (nodes {})", t0.elapsed().as_secs_f64() / reps2 as f64 * 1e6, tape.node_count());

    // (5) DualN<Var,4> grads (tape)
    let t0 = Instant::now();
    for _ in 0..reps2 {
        tape.clear();
        let leaves = tape.leaves(&store.values);
        let leaves_n: Vec<DualN<dflnn::diffcore::Var, 4>> = lift_multi(&leaves);
        let q = [<dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.1), <dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.2)];
        let v = [<dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.3), <dflnn::diffcore::Var as dflnn::diffcore::Real>::constant(0.4)];
        let _ = lagrangian_grads_multi(&lag, &leaves_n, &q, &v);
    }
    println!("DualN<Var,4> grads: {:.2} us (nodes {})", t0.elapsed().as_secs_f64() / reps2 as f64 * 1e6, tape.node_count());

    // (6) leaf lift alone
    let t0 = Instant::now();
    for _ in 0..reps2 {
        tape.clear();
        let leaves = tape.leaves(&store.values);
        let _: Vec<DualN<dflnn::diffcore::Var, 4>> = lift_multi(&leaves);
    }
    println!("lift alone: {:.2} us", t0.elapsed().as_secs_f64() / reps2 as f64 * 1e6);
}
