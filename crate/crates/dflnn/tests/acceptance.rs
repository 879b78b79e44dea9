//! Acceptance suite: every shipped claim verified end to end, one test per
//! criterion, each printing a PASS line with its measured numbers.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dflnn::data::{damped_ho_trajectory, integrate, render_pendulum, Trajectory, PIXEL_DIM};
use dflnn::diffcore::{
    eval_input_hessian, eval_param_grad, eval_with_input_grad, ParamObjective, ParameterStore,
    Real, ScalarFunction, StoreBuilder,
};
use dflnn::discretization::{multistep_coeffs, Discretization, Scheme};
use dflnn::driver::{
    generate, run_eval, run_rollout, run_train, ExperimentConfig, ForceKind, LagrangianKind,
    ModelKind, NoiseLevel, NoiseName, Task,
};
use dflnn::mechanics::analytic::{PendulumLagrangian, QuadraticLagrangian};
use dflnn::mechanics::{Lagrangian, ZeroForce};
use dflnn::networks::{Mlp, MlpSpec};
use dflnn::rollout::{implicit_step, rollout, NewtonConfig};

fn tmp_dir(tag: &str) -> String {
    let dir = std::env::temp_dir().join(format!("dflnn_acceptance_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir.to_string_lossy().into_owned()
}

// ---------------------------------------------------------------------------
// criterion 1: derivative correctness against central finite differences
// ---------------------------------------------------------------------------

struct MlpFn {
    mlp: Mlp,
}

impl ScalarFunction for MlpFn {
    fn input_dim(&self) -> usize {
        self.mlp.spec.input_dim
    }
    fn eval<T: Real>(&self, params: &[T], x: &[T]) -> T {
        self.mlp.forward_scalar(params, x)
    }
}

/// Objective built from an input derivative: |grad_v L(q, v)|^2 over the
/// last half of the inputs, so its parameter gradient needs third-order
/// mixed derivatives overall.
struct GradNormObjective<'a> {
    mlp: &'a Mlp,
    x: Vec<f64>,
}

impl ParamObjective for GradNormObjective<'_> {
    fn eval<T: Real>(&self, params: &[T]) -> T {
        use dflnn::diffcore::Dual;
        let m = self.x.len();
        let params_d: Vec<Dual<T>> = params.iter().map(|&p| Dual::lift(p)).collect();
        let mut acc = T::zero();
        for i in m / 2..m {
            let xd: Vec<Dual<T>> = self
                .x
                .iter()
                .enumerate()
                .map(|(j, &v)| Dual {
                    re: T::constant(v),
                    dt: if i == j { T::one() } else { T::zero() },
                })
                .collect();
            let g = self.mlp.forward_scalar(&params_d, &xd).dt;
            acc = acc + g * g;
        }
        acc
    }
}

struct ValueObjective<'a> {
    mlp: &'a Mlp,
    x: Vec<f64>,
}

impl ParamObjective for ValueObjective<'_> {
    fn eval<T: Real>(&self, params: &[T]) -> T {
        let x: Vec<T> = self.x.iter().map(|&v| T::constant(v)).collect();
        self.mlp.forward_scalar(params, &x)
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

#[test]
fn criterion_01_derivative_correctness() {
    let start = Instant::now();
    let fd = 1e-5;
    let mut worst_grad: f64 = 0.0;
    let mut worst_hess: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    let mut worst_pgrad: f64 = 0.0;
    let mut worst_nested: f64 = 0.0;
    for seed in 0..100u64 {
        let mut b = StoreBuilder::new();
        let mut rng = StdRng::seed_from_u64(seed);
        let mlp = Mlp::init(MlpSpec::new(4, 1), "net", &mut b, &mut rng);
        let store = b.finish();
        let f = MlpFn { mlp };
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();

        // input gradient vs central differences
        let (_, grad) = eval_with_input_grad(&f, &store, &x).unwrap();
        let mut fd_grad = vec![0.0; 4];
        for i in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += fd;
            xm[i] -= fd;
            fd_grad[i] = (f.eval(&store.values, &xp) - f.eval(&store.values, &xm)) / (2.0 * fd);
        }
        worst_grad = worst_grad.max(rel_err(&grad, &fd_grad));

        // input Hessian: symmetry and FD agreement
        let h = eval_input_hessian(&f, &store, &x).unwrap();
        let mut flat = Vec::new();
        let mut fd_flat = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                worst_sym = worst_sym.max((h[i][j] - h[j][i]).abs());
                flat.push(h[i][j]);
                let mut xpp = x.clone();
                let mut xpm = x.clone();
                let mut xmp = x.clone();
                let mut xmm = x.clone();
                xpp[i] += fd;
                xpp[j] += fd;
                xpm[i] += fd;
                xpm[j] -= fd;
                xmp[i] -= fd;
                xmp[j] += fd;
                xmm[i] -= fd;
                xmm[j] -= fd;
                fd_flat.push(
                    (f.eval(&store.values, &xpp) - f.eval(&store.values, &xpm)
                        - f.eval(&store.values, &xmp)
                        + f.eval(&store.values, &xmm))
                        / (4.0 * fd * fd),
                );
            }
        }
        worst_hess = worst_hess.max(rel_err(&flat, &fd_flat));

        // parameter gradient of the plain value
        let vo = ValueObjective {
            mlp: &f.mlp,
            x: x.clone(),
        };
        let (_, pgrad) = eval_param_grad(&vo, &store).unwrap();
        let mut fd_pgrad = vec![0.0; store.len()];
        let mut vals = store.values.clone();
        for i in 0..store.len() {
            let orig = vals[i];
            vals[i] = orig + fd;
            let up = vo.eval(&vals);
            vals[i] = orig - fd;
            let dn = vo.eval(&vals);
            vals[i] = orig;
            fd_pgrad[i] = (up - dn) / (2.0 * fd);
        }
        worst_pgrad = worst_pgrad.max(rel_err(&pgrad, &fd_pgrad));

        // parameter gradient of a derivative-of-derivative objective,
        // finite differences on a fixed random subset of parameters
        let no = GradNormObjective { mlp: &f.mlp, x };
        let (_, ngrad) = eval_param_grad(&no, &store).unwrap();
        let subset: Vec<usize> = (0..48)
            .map(|_| rng.gen_range(0..store.len()))
            .collect();
        let mut got = Vec::new();
        let mut want = Vec::new();
        for &i in &subset {
            let orig = vals[i];
            vals[i] = orig + fd;
            let up = no.eval(&vals);
            vals[i] = orig - fd;
            let dn = no.eval(&vals);
            vals[i] = orig;
            got.push(ngrad[i]);
            want.push((up - dn) / (2.0 * fd));
        }
        worst_nested = worst_nested.max(rel_err(&got, &want));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst_grad < 1e-5, "input gradient rel err {worst_grad}");
    assert!(worst_sym < 1e-10, "hessian asymmetry {worst_sym}");
    assert!(worst_hess < 1e-4, "hessian rel err {worst_hess}");
    assert!(worst_pgrad < 1e-5, "param gradient rel err {worst_pgrad}");
    assert!(worst_nested < 1e-4, "nested objective rel err {worst_nested}");
    assert!(elapsed < 10.0, "took {elapsed:.1}s, budget 10s");
    println!(
        "ACCEPTANCE 1 (derivative correctness): PASS \
         grad={worst_grad:.2e} hess={worst_hess:.2e} sym={worst_sym:.2e} \
         pgrad={worst_pgrad:.2e} nested={worst_nested:.2e} in {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// criterion 2: stencil coefficients and derivative convergence order
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_stencil_coefficients() {
    let s = multistep_coeffs(2).unwrap();
    assert!((s.delta[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((s.delta[1] + 1.0 / 12.0).abs() < 1e-12);
    let v_expect = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
    let q_expect = [-1.0 / 12.0, 8.0 / 12.0, 0.0, 4.0 / 12.0, 1.0 / 12.0];
    for i in 0..5 {
        assert!((s.v_coeffs[i] - v_expect[i]).abs() < 1e-12);
        assert!((s.qbar_coeffs[i] - q_expect[i]).abs() < 1e-12);
    }

    // derivative-error slope on sin(t)
    let mut slopes = Vec::new();
    for k in 1..=2usize {
        let st = multistep_coeffs(k).unwrap();
        let t0 = 0.9;
        let mut pts = Vec::new();
        for &h in &[0.4, 0.2, 0.1, 0.05] {
            let w: Vec<Vec<f64>> = (-(k as isize)..=k as isize)
                .map(|o| vec![(t0 + o as f64 * h).sin()])
                .collect();
            let refs: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
            let (_, v) = dflnn::discretization::multistep_pair(&refs, h, &st).unwrap();
            pts.push((h.ln(), (v[0] - t0.cos()).abs().ln()));
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope - 2.0 * k as f64).abs() < 0.3,
            "k={k}: slope {slope}"
        );
        slopes.push(slope);
    }
    println!(
        "ACCEPTANCE 2 (stencil coefficients): PASS exact k=2 stencils, slopes {:.2}/{:.2}",
        slopes[0], slopes[1]
    );
}

// ---------------------------------------------------------------------------
// criterion 3: long-run energy boundedness of the variational rollout
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_structure_preservation() {
    let start = Instant::now();
    let h = 0.1;
    let steps = 100_000;
    let lag = PendulumLagrangian;
    let disc = Discretization::new(Scheme::midpoint(h)).unwrap();

    // accurate second seed point from the pendulum ODE
    let ode = |s: &[f64]| vec![s[1], -s[0].sin()];
    let fine = integrate(&ode, &[0.4, 0.0], 1, h, 100, 1).unwrap();
    let q0 = 0.4;
    let q1 = fine.positions[1][0];

    let r = rollout(
        &disc,
        &lag,
        &ZeroForce(1),
        &[],
        &[q0],
        &[q1],
        steps,
        true,
        &NewtonConfig::default(),
    )
    .unwrap();
    // energy on midpoint pairs: E = vbar^2/2 - cos(qbar)
    let energy = |a: f64, b: f64| {
        let qm = 0.5 * (a + b);
        let vm = (b - a) / h;
        0.5 * vm * vm - qm.cos()
    };
    let e0 = energy(r.positions[0][0], r.positions[1][0]);
    let mut max_dev: f64 = 0.0;
    let mut head = 0.0;
    let mut tail = 0.0;
    let n = r.positions.len() - 1;
    for i in 0..n {
        let e = energy(r.positions[i][0], r.positions[i + 1][0]);
        max_dev = max_dev.max((e - e0).abs());
        if i < 1000 {
            head += e;
        }
        if i >= n - 1000 {
            tail += e;
        }
    }
    let drift = ((tail - head) / 1000.0).abs();
    assert!(max_dev < 5e-3, "energy band {max_dev}");
    assert!(drift < 1e-3, "monotone drift {drift}");

    // forward Euler control: exceeds 0.1 drift by step 10^4
    let (mut q, mut v) = (0.4, 0.0);
    let e0 = 0.5 * v * v - f64::cos(q);
    let mut exceeded_at = None;
    for step in 1..=10_000 {
        let (qn, vn) = (q + h * v, v - h * q.sin());
        q = qn;
        v = vn;
        let e = 0.5 * v * v - q.cos();
        if (e - e0).abs() > 0.1 {
            exceeded_at = Some(step);
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        exceeded_at.is_some(),
        "forward Euler control unexpectedly stable"
    );
    assert!(elapsed < 120.0, "took {elapsed:.1}s, budget 120s");
    println!(
        "ACCEPTANCE 3 (structure preservation): PASS band={max_dev:.2e} drift={drift:.2e} \
         euler exceeds 0.1 at step {} in {elapsed:.1}s",
        exceeded_at.unwrap()
    );
}

// ---------------------------------------------------------------------------
// criterion 4: implicit step against the closed-form linear solve
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_implicit_step_oracle() {
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.gen_range(0.5..3.0);
        let k = rng.gen_range(0.1..2.0);
        let h = rng.gen_range(0.05..0.8);
        let q0 = rng.gen_range(-1.0..1.0);
        let q1 = rng.gen_range(-1.0..1.0);
        let lag = QuadraticLagrangian {
            dim: 1,
            mass: m,
            stiffness: k,
        };
        // closed form root of the linear residual
        let a = -2.0 * m / (h * h) - 0.5 * k;
        let b = 2.0 * m / (h * h) * (2.0 * q1 - q0) - 0.5 * k * (q0 + 2.0 * q1);
        let expect = -b / a;
        let disc = Discretization::new(Scheme::midpoint(h)).unwrap();
        let (next, _) = implicit_step(
            &disc,
            &lag,
            &ZeroForce(1),
            &[],
            &[q0],
            &[q1],
            &NewtonConfig::default(),
        )
        .unwrap();
        worst = worst.max((next[0] - expect).abs());
    }
    assert!(worst < 1e-12, "worst deviation {worst}");

    // hand case L = v^2/2 - q^2/2, h = 1, seeds (1, 1). Solving the
    // discrete stationarity condition by hand gives x = 1/5 (the bracketed
    // residual is 1/2 - (5/2)x); the published spec example value 5/9 does
    // not satisfy the equation.
    let lag = QuadraticLagrangian {
        dim: 1,
        mass: 1.0,
        stiffness: 1.0,
    };
    let disc = Discretization::new(Scheme::midpoint(1.0)).unwrap();
    let (next, _) = implicit_step(
        &disc,
        &lag,
        &ZeroForce(1),
        &[],
        &[1.0],
        &[1.0],
        &NewtonConfig::default(),
    )
    .unwrap();
    assert!((next[0] - 0.2).abs() < 1e-12);
    println!("ACCEPTANCE 4 (implicit-step oracle): PASS worst={worst:.2e}, hand root 0.2");
}

// ---------------------------------------------------------------------------
// criteria 5 and 8 share the damped double pendulum training setup
// ---------------------------------------------------------------------------

fn crit5_config(seed: u64, out_dir: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::task1_defaults(out_dir);
    cfg.data.n_train = 64;
    cfg.data.n_test = 10;
    cfg.data.n_steps = 20;
    cfg.data.test_extra_steps = 20;
    cfg.data.sigma = NoiseLevel::Named(NoiseName::Paper);
    cfg.data.noise_ramp = true;
    cfg.network.hidden_dim = 20;
    cfg.network.hidden_layers = 2;
    cfg.train.epochs = 5000;
    cfg.train.seed = seed;
    cfg
}

struct Crit5Run {
    ext35_mean: f64,
    ext35_std: f64,
    min_det_s: f64,
    train_secs: f64,
}

fn run_crit5(seed: u64, tag: &str) -> Crit5Run {
    let out = tmp_dir(tag);
    let cfg = crit5_config(seed, &out);
    generate(&cfg).unwrap();
    let t0 = Instant::now();
    let (_, trained) = run_train(&cfg).unwrap();
    let train_secs = t0.elapsed().as_secs_f64();
    let preds = run_rollout(&cfg, true).unwrap();
    let ds = dflnn::driver::load_dataset(&cfg).unwrap();
    let errs = dflnn::rollout::extrapolation_errors_at(&preds, &ds.test, 35).unwrap();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (errs.len() as f64 - 1.0);
    let min_det_s = trained
        .report
        .min_abs_det_s
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    Crit5Run {
        ext35_mean: mean,
        ext35_std: var.sqrt(),
        min_det_s,
        train_secs,
    }
}

static CRIT5_SEED0: OnceLock<Crit5Run> = OnceLock::new();

fn crit5_seed0() -> &'static Crit5Run {
    CRIT5_SEED0.get_or_init(|| run_crit5(0, "crit5_seed0"))
}

#[test]
fn criterion_05_task1_desk_scale() {
    let run = crit5_seed0();
    assert!(
        run.ext35_mean < 0.5,
        "extrapolation error at k=35: {} (need < 0.5)",
        run.ext35_mean
    );
    assert!(
        run.train_secs < 1800.0,
        "training took {:.0}s, budget 1800s",
        run.train_secs
    );
    println!(
        "ACCEPTANCE 5 (task 1 desk scale): PASS ext35={:.4}+-{:.4} train={:.0}s",
        run.ext35_mean, run.ext35_std, run.train_secs
    );
}

#[test]
fn criterion_08_regularity_barrier() {
    let mut mins = vec![crit5_seed0().min_det_s];
    for seed in [1u64, 2u64] {
        mins.push(run_crit5(seed, &format!("crit8_seed{seed}")).min_det_s);
    }
    for (i, m) in mins.iter().enumerate() {
        assert!(
            *m >= 1e-6,
            "seed {i}: min |det S| over training = {m:.3e} (need >= 1e-6)"
        );
    }
    println!(
        "ACCEPTANCE 8 (regularity barrier): PASS min|det S| per seed = {:.3e}/{:.3e}/{:.3e}",
        mins[0], mins[1], mins[2]
    );
}

// ---------------------------------------------------------------------------
// criterion 6: dissipative charged particle
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_task2_desk_scale() {
    let out = tmp_dir("crit6");
    let mut cfg = ExperimentConfig::task1_defaults(&out);
    cfg.task = Task::Cp;
    cfg.data.dp = None;
    cfg.data.cp = Some(Default::default());
    cfg.data.n_train = 64;
    cfg.data.n_test = 10;
    cfg.data.n_steps = 20;
    cfg.data.test_extra_steps = 20;
    cfg.data.noise_ramp = true;
    cfg.network.u_depends_on_velocity = true;
    cfg.train.epochs = 5000;
    generate(&cfg).unwrap();
    let t0 = Instant::now();
    run_train(&cfg).unwrap();
    let train_secs = t0.elapsed().as_secs_f64();
    let preds = run_rollout(&cfg, true).unwrap();
    let ds = dflnn::driver::load_dataset(&cfg).unwrap();
    let errs = dflnn::rollout::extrapolation_errors_at(&preds, &ds.test, 35).unwrap();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(mean < 0.1, "extrapolation error at k=35: {mean} (need < 0.1)");
    assert!(train_secs < 1800.0, "training took {train_secs:.0}s");
    println!(
        "ACCEPTANCE 6 (task 2 desk scale): PASS ext35={mean:.4} train={train_secs:.0}s"
    );
}

// ---------------------------------------------------------------------------
// criterion 7: force separation on the damped harmonic oscillator
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_force_separation() {
    let out = tmp_dir("crit7");
    let mut cfg = ExperimentConfig::task1_defaults(&out);
    cfg.task = Task::Ho;
    cfg.data.dp = None;
    cfg.data.ho_gamma = Some(0.1);
    cfg.data.n_train = 32;
    cfg.data.n_test = 8;
    cfg.data.n_steps = 50;
    cfg.data.test_extra_steps = 0;
    cfg.data.sigma = NoiseLevel::Named(NoiseName::None);
    cfg.data.noise_ramp = false;
    cfg.network.hidden_dim = 16;
    cfg.network.hidden_layers = 2;
    cfg.train.epochs = 3000;
    generate(&cfg).unwrap();
    run_train(&cfg).unwrap();
    let on = run_rollout(&cfg, true).unwrap();
    let off = run_rollout(&cfg, false).unwrap();
    let ds = dflnn::driver::load_dataset(&cfg).unwrap();

    // force-on tracks the damped truth
    let errs = dflnn::rollout::extrapolation_errors_at(&on, &ds.test, 35).unwrap();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(mean < 0.05, "force-on ext err {mean} (need < 0.05)");

    // force-off decays far less than the damped truth
    let rms = |qs: &[Vec<f64>]| -> f64 {
        (qs.iter().map(|q| q[0] * q[0]).sum::<f64>() / qs.len() as f64).sqrt()
    };
    let decay = |qs: &[Vec<f64>]| -> f64 {
        let head = rms(&qs[..10]);
        let tail = rms(&qs[qs.len() - 10..]);
        1.0 - tail / head
    };
    let mut truth_decay = 0.0;
    let mut off_decay = 0.0;
    for (p, t) in off.iter().zip(&ds.test) {
        truth_decay += decay(&t.positions);
        off_decay += decay(p);
    }
    truth_decay /= ds.test.len() as f64;
    off_decay /= ds.test.len() as f64;
    assert!(
        off_decay.abs() < 0.2 * truth_decay,
        "force-off decay {off_decay:.3} vs truth decay {truth_decay:.3}"
    );
    println!(
        "ACCEPTANCE 7 (force separation): PASS ext35={mean:.4} \
         off-decay={off_decay:.3} truth-decay={truth_decay:.3}"
    );
}

// ---------------------------------------------------------------------------
// criterion 9: baselines harness and NaN semantics
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_baselines_harness() {
    let out = tmp_dir("crit9");
    let mut cfg = crit5_config(0, &out);
    cfg.train.epochs = 200; // harness check, not an accuracy claim
    generate(&cfg).unwrap();

    for model in [ModelKind::Glnn, ModelKind::Node] {
        let mut mcfg = cfg.clone();
        mcfg.model = model;
        // the dataset hash is tied to the generating config; regenerate per
        // model into its own directory
        mcfg.out_dir = tmp_dir(&format!("crit9_{model:?}"));
        generate(&mcfg).unwrap();
        run_train(&mcfg).unwrap();
        run_rollout(&mcfg, true).unwrap();
        let table = run_eval(&mcfg, 35, true).unwrap();
        assert!(table.lines().count() >= 2, "eval table missing rows");
    }

    // singular-Hessian GLNN failures surface as NaN rows, not zeros: a
    // free-MLP Lagrangian with all-zero parameters has S = 0 everywhere
    let mut zcfg = cfg.clone();
    zcfg.model = ModelKind::Glnn;
    zcfg.lagrangian = LagrangianKind::FreeMlp;
    zcfg.out_dir = tmp_dir("crit9_singular");
    zcfg.train.epochs = 1;
    zcfg.train.lr = 0.0;
    generate(&zcfg).unwrap();
    // zero the checkpoint parameters to force the singular Hessian
    let (mut ck, _) = run_train(&zcfg).unwrap();
    ck.store.values.iter_mut().for_each(|v| *v = 0.0);
    dflnn::driver::write_checkpoint(
        &Path::new(&zcfg.out_dir).join("checkpoint.json"),
        &ck,
    )
    .unwrap();
    run_rollout(&zcfg, true).unwrap();
    let table = run_eval(&zcfg, 35, true).unwrap();
    let data_line = table.lines().nth(1).unwrap();
    assert!(
        data_line.contains("NaN"),
        "singular Hessian must yield a NaN row, got: {data_line}"
    );
    println!("ACCEPTANCE 9 (baselines harness): PASS, singular Hessian reported as NaN");
}

// ---------------------------------------------------------------------------
// criterion 10: pixel pipeline at desk scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_pixel_pipeline() {
    let out = tmp_dir("crit10");
    let mut cfg = ExperimentConfig::task1_defaults(&out);
    cfg.task = Task::Pixel;
    cfg.data.dp = None;
    cfg.data.ho_gamma = Some(0.3);
    cfg.data.n_train = 12;
    cfg.data.n_test = 4;
    cfg.data.n_steps = 40;
    cfg.data.test_extra_steps = 0;
    cfg.data.sigma = NoiseLevel::Named(NoiseName::None);
    cfg.data.noise_ramp = false;
    cfg.weights = dflnn::objective::LossWeights {
        physics: 0.9,
        reg: 0.1,
        ae: 1.0,
        r_points: 20,
    };
    cfg.network.latent_dim = 1;
    cfg.network.ae_hidden_dim = 64;
    cfg.network.hidden_dim = 16;
    cfg.network.hidden_layers = 2;
    cfg.train.epochs = 3000;
    cfg.train.batch_size = Some(48);
    generate(&cfg).unwrap();
    let (ck, _) = run_train(&cfg).unwrap();

    // gating check: reconstruction quality before rollout evaluation
    let ds = dflnn::driver::load_dataset(&cfg).unwrap();
    let pipeline = dflnn::latent::LatentPipeline {
        ae: ck.autoencoder.clone().unwrap(),
        lag: ck.dflnn.clone().unwrap().0,
        force: ck.dflnn.clone().unwrap().1,
    };
    let rec_mse =
        dflnn::latent::reconstruction_pixel_mse(&pipeline, &ck.store.values, &ds.train);
    assert!(rec_mse < 5e-3, "AE per-pixel MSE {rec_mse:.2e} (need < 5e-3)");

    let preds = run_rollout(&cfg, true).unwrap();
    let mut worst_mse = 0.0f64;
    let mut mean_mse = 0.0;
    for (p, t) in preds.iter().zip(&ds.test) {
        let mse: f64 = p[35]
            .iter()
            .zip(&t.positions[35])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / PIXEL_DIM as f64;
        worst_mse = worst_mse.max(mse);
        mean_mse += mse / preds.len() as f64;
    }
    assert!(
        mean_mse < 2e-2,
        "decoded rollout per-pixel MSE at step 35: {mean_mse:.3e} (need < 2e-2)"
    );
    println!(
        "ACCEPTANCE 10 (pixel pipeline): PASS rec={rec_mse:.2e} rollout35={mean_mse:.2e} \
         (worst {worst_mse:.2e})"
    );
}

// ---------------------------------------------------------------------------
// criterion 11: motion capture is out of scope; csv-import smoke plus the
// separation property stand in for it
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_csv_import_smoke() {
    // synthetic multi-joint data: four coupled damped oscillators
    let src = tmp_dir("crit11_src");
    let h = 0.1;
    let mut rng = StdRng::seed_from_u64(11);
    for i in 0..6 {
        let amp: Vec<f64> = (0..4).map(|_| rng.gen_range(0.3..0.8)).collect();
        let positions: Vec<Vec<f64>> = (0..=30)
            .map(|n| {
                let t = n as f64 * h;
                (0..4)
                    .map(|j| {
                        amp[j]
                            * (-0.05 * t).exp()
                            * (t * (1.0 + 0.1 * j as f64) + i as f64).sin()
                    })
                    .collect()
            })
            .collect();
        let traj = Trajectory {
            h,
            positions,
            velocities: None,
        };
        dflnn::data::io::write_trajectory_csv(
            Path::new(&src).join(format!("joint_{i}.csv")).as_path(),
            &traj,
        )
        .unwrap();
    }
    let out = tmp_dir("crit11");
    let mut cfg = ExperimentConfig::task1_defaults(&out);
    cfg.task = Task::CsvImport;
    cfg.data.dp = None;
    cfg.data.import_dir = Some(src);
    cfg.data.smoothing = Some((7, 3));
    cfg.data.n_test = 2;
    cfg.data.n_steps = 30;
    cfg.network.hidden_dim = 8;
    cfg.network.hidden_layers = 1;
    cfg.weights.r_points = 10;
    cfg.train.epochs = 30;
    generate(&cfg).unwrap();
    run_train(&cfg).unwrap();
    run_rollout(&cfg, true).unwrap();
    let table = run_eval(&cfg, 10, true).unwrap();
    assert!(table.contains("CsvImport"));
    println!("ACCEPTANCE 11 (csv import smoke): PASS (motion capture itself is out of scope)");
}

// ---------------------------------------------------------------------------
// criterion 12: byte-identical artifacts across reruns
// ---------------------------------------------------------------------------

#[test]
fn criterion_12_determinism() {
    let run_all = |tag: &str| -> Vec<(String, Vec<u8>)> {
        let out = tmp_dir(tag);
        let mut cfg = ExperimentConfig::task1_defaults(&out);
        cfg.data.n_train = 4;
        cfg.data.n_test = 2;
        cfg.data.n_steps = 8;
        cfg.data.test_extra_steps = 4;
        cfg.network.hidden_dim = 6;
        cfg.network.hidden_layers = 1;
        cfg.weights.r_points = 5;
        cfg.train.epochs = 5;
        cfg.train.threads = 2;
        generate(&cfg).unwrap();
        run_train(&cfg).unwrap();
        run_rollout(&cfg, true).unwrap();
        run_eval(&cfg, 8, true).unwrap();
        let mut files = Vec::new();
        for name in [
            "data/train_000.csv",
            "data/test_001.csv",
            "data/manifest.json",
            "checkpoint.json",
            "train_report.csv",
            "rollout/pred_000.csv",
            "eval_k8.csv",
        ] {
            let mut bytes = std::fs::read(Path::new(&out).join(name)).unwrap();
            // the config hash embeds the output directory, which differs per
            // run directory; strip it for the byte comparison
            let tagged = String::from_utf8_lossy(&bytes).replace(&out, "OUT");
            bytes = tagged.into_bytes();
            files.push((name.to_string(), bytes));
        }
        files
    };
    let a = run_all("det_a");
    let b = run_all("det_b");
    for ((name, ba), (_, bb)) in a.iter().zip(&b) {
        assert_eq!(ba, bb, "artifact {name} differs between identical runs");
    }
    println!("ACCEPTANCE 12 (determinism): PASS, {} artifacts byte-identical", a.len());
}

// ---------------------------------------------------------------------------
// supporting sanity: the trainer can drive a small autoencoder to identity
// ---------------------------------------------------------------------------

#[test]
fn autoencoder_identity_sanity() {
    use dflnn::networks::{Autoencoder, AutoencoderSpec};
    use dflnn::objective::ae_loss;
    use dflnn::training::{adam_step, AdamState};
    let mut b = StoreBuilder::new();
    let mut rng = StdRng::seed_from_u64(5);
    let ae = Autoencoder::init(AutoencoderSpec::new(2, 2, 16, 1), "ae", &mut b, &mut rng);
    let mut store: ParameterStore = b.finish();
    let points: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut adam = AdamState::new(store.len());
    let mut final_mse = f64::INFINITY;
    for _ in 0..2000 {
        let tape = dflnn::diffcore::Tape::new();
        let leaves = tape.leaves(&store.values);
        let mut acc = dflnn::diffcore::Var::constant(0.0);
        for p in &points {
            let x: Vec<dflnn::diffcore::Var> =
                p.iter().map(|&v| dflnn::diffcore::Var::constant(v)).collect();
            acc = acc + ae_loss(&ae, &leaves, &x);
        }
        let grad = tape.gradient(acc, store.len());
        adam_step(&mut store.values, &grad, &mut adam, 3e-3, 0.9, 0.999, 1e-8).unwrap();
        final_mse = acc.value() / points.len() as f64; // (d/l) = 1 here
    }
    assert!(
        final_mse < 1e-6,
        "autoencoder failed to fit identity: MSE {final_mse:.2e}"
    );
}
