//! Reproducible experiment driver behind the command-line interface:
//! dataset generation, training, rollout, and evaluation, with hashed
//! configs tying artifacts together.

use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::baselines::{train_baseline, BaselineModel};
use crate::data::io::{
    read_manifest, read_pixel_csv, read_trajectory_csv, write_manifest, write_pixel_csv,
    write_trajectory_csv, DatasetManifest,
};
use crate::data::{
    add_noise, cp_ode, damped_ho_trajectory, dp_ode, integrate, paper_noise_sigma,
    render_pendulum, savgol_smooth, ChargedParticleParams, DoublePendulumParams, Trajectory,
    PIXEL_DIM,
};
use crate::diffcore::{ParameterStore, StoreBuilder};
use crate::discretization::{Discretization, Scheme, SchemeKind};
use crate::latent::{latent_rollout, train_latent, LatentPipeline};
use crate::mechanics::{ForceModel, LagrangianModel};
use crate::networks::{Autoencoder, AutoencoderSpec};
use crate::objective::LossWeights;
use crate::rollout::{extrapolation_errors_at, rollout, NewtonConfig};
use crate::training::{train, TrainConfig, Trained};
use crate::{Error, Result};

/// Task identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Damped double pendulum (angles).
    Dp,
    /// Dissipative charged particle (Cartesian positions).
    Cp,
    /// Rendered damped pendulum frames with a latent autoencoder.
    Pixel,
    /// Damped harmonic oscillator from its closed form.
    Ho,
    /// Externally provided trajectory CSVs.
    CsvImport,
}

/// Model selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dflnn,
    Glnn,
    Node,
}

/// Lagrangian variant selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagrangianKind {
    Mechanical,
    FreeMlp,
}

/// Force variant selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceKind {
    Free,
    Rayleigh,
    LinearRayleigh,
    Combined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub h: f64,
    pub n_steps: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Extra steps generated for test trajectories beyond `n_steps`, so
    /// rollout comparisons can extend past the training horizon.
    pub test_extra_steps: usize,
    /// Noise standard deviation; `"paper"` selects `sqrt(1e-2 h)`.
    pub sigma: NoiseLevel,
    /// Ramp the noise from zero (first trajectory) to `sigma` (last).
    pub noise_ramp: bool,
    pub dp: Option<DoublePendulumParams>,
    pub cp: Option<ChargedParticleParams>,
    /// Damping coefficient for the harmonic-oscillator task.
    pub ho_gamma: Option<f64>,
    /// Savitzky-Golay smoothing `(window, polyorder)` applied on import.
    pub smoothing: Option<(usize, usize)>,
    /// Directory of trajectory CSVs for the csv-import task.
    pub import_dir: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseLevel {
    Fixed(f64),
    Named(NoiseName),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseName {
    Paper,
    None,
}

impl NoiseLevel {
    pub fn sigma(&self, h: f64) -> f64 {
        match self {
            NoiseLevel::Fixed(s) => *s,
            NoiseLevel::Named(NoiseName::Paper) => paper_noise_sigma(h),
            NoiseLevel::Named(NoiseName::None) => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub epsilon: f64,
    pub u_depends_on_velocity: bool,
    pub dropout_rate: f64,
    /// Autoencoder (pixel task): hidden width and latent dimension.
    pub ae_hidden_dim: usize,
    pub latent_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden_dim: 30,
            hidden_layers: 3,
            epsilon: 1e-3,
            u_depends_on_velocity: false,
            dropout_rate: 0.5,
            ae_hidden_dim: 64,
            latent_dim: 1,
        }
    }
}

/// The complete experiment description. Serialized to JSON; unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: ModelKind,
    pub lagrangian: LagrangianKind,
    pub force: ForceKind,
    pub scheme: Scheme,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub weights: LossWeights,
    pub train: TrainConfig,
    pub newton: NewtonConfig,
    pub out_dir: String,
}

impl ExperimentConfig {
    /// Baseline double-pendulum experiment with the defaults from the
    /// hyperparameter tables.
    pub fn task1_defaults(out_dir: &str) -> Self {
        ExperimentConfig {
            task: Task::Dp,
            model: ModelKind::Dflnn,
            lagrangian: LagrangianKind::Mechanical,
            force: ForceKind::LinearRayleigh,
            scheme: Scheme::midpoint(0.1),
            data: DataConfig {
                h: 0.1,
                n_steps: 20,
                n_train: 320,
                n_test: 10,
                test_extra_steps: 20,
                sigma: NoiseLevel::Named(NoiseName::Paper),
                noise_ramp: false,
                dp: Some(DoublePendulumParams::default()),
                cp: None,
                ho_gamma: None,
                smoothing: None,
                import_dir: None,
            },
            network: NetworkConfig::default(),
            weights: LossWeights::default(),
            train: TrainConfig::default(),
            newton: NewtonConfig::default(),
            out_dir: out_dir.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme.h <= 0.0 || self.data.h <= 0.0 {
            return Err(Error::Config("step size must be positive".into()));
        }
        if (self.scheme.h - self.data.h).abs() > 1e-12 {
            return Err(Error::Config(
                "scheme step size must match the data step size".into(),
            ));
        }
        if self.data.n_train == 0 || self.data.n_steps < 2 {
            return Err(Error::Config("need at least one trajectory of >= 2 steps".into()));
        }
        if self.task == Task::CsvImport && self.data.import_dir.is_none() {
            return Err(Error::Config("csv_import task needs data.import_dir".into()));
        }
        if self.task == Task::Pixel && self.model != ModelKind::Dflnn {
            return Err(Error::Config(
                "the pixel task is wired for the dflnn model".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stable hash tying artifacts to the config that produced them.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(canonical.as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// A dataset on disk: train/test trajectory CSVs plus manifest.
pub struct Dataset {
    pub train: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub manifest: DatasetManifest,
}

fn dataset_dir(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(&cfg.out_dir).join("data")
}

/// Generate the task dataset deterministically from the config seed and
/// write it out. Pixel frames additionally go to per-trajectory CSVs.
pub fn generate(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let dir = dataset_dir(cfg);
    fs::create_dir_all(&dir)?;
    let seed = cfg.train.seed;
    let mut rng = StdRng::seed_from_u64(seed ^ 0xda7a);
    let h = cfg.data.h;
    let sigma = cfg.data.sigma.sigma(h);
    let n_train = cfg.data.n_train;

    let mut make_clean = |steps: usize, rng: &mut StdRng| -> Result<Trajectory> {
        match cfg.task {
            Task::Dp => {
                let p = cfg.data.dp.unwrap_or_default();
                let th1 = rng.gen_range(-std::f64::consts::FRAC_PI_6..std::f64::consts::FRAC_PI_6);
                let th2 = rng.gen_range(-std::f64::consts::FRAC_PI_6..std::f64::consts::FRAC_PI_6);
                let ode = move |s: &[f64]| dp_ode(s, &p);
                integrate(&ode, &[th1, th2, 0.0, 0.0], 2, h, 100, steps)
            }
            Task::Cp => {
                let p = cfg.data.cp.unwrap_or_default();
                let q0: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let speed = rng.gen_range(0.5..1.5);
                let dir: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
                let v: Vec<f64> = dir.iter().map(|x| x / norm * speed).collect();
                let ode = move |s: &[f64]| cp_ode(s, &p);
                integrate(&ode, &[q0[0], q0[1], q0[2], v[0], v[1], v[2]], 3, h, 100, steps)
            }
            Task::Ho => {
                let gamma = cfg.data.ho_gamma.unwrap_or(0.1);
                let q0 = rng.gen_range(0.5..1.5);
                Ok(damped_ho_trajectory(gamma, q0, 0.0, h, steps))
            }
            Task::Pixel => {
                let gamma = cfg.data.ho_gamma.unwrap_or(0.3);
                let th0 = rng.gen_range(-std::f64::consts::FRAC_PI_6..std::f64::consts::FRAC_PI_6);
                let angles = damped_ho_trajectory(gamma, th0, 0.0, h, steps);
                let frames: Vec<Vec<f64>> = angles
                    .positions
                    .iter()
                    .map(|q| render_pendulum(q[0]))
                    .collect();
                Ok(Trajectory {
                    h,
                    positions: frames,
                    velocities: None,
                })
            }
            Task::CsvImport => unreachable!("import handled separately"),
        }
    };

    let (mut train_set, mut test_set) = (Vec::new(), Vec::new());
    if cfg.task == Task::CsvImport {
        let import_dir = cfg.data.import_dir.as_ref().unwrap();
        let mut files: Vec<PathBuf> = fs::read_dir(import_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |e| e == "csv"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for f in &files {
            let mut t = read_trajectory_csv(f)?;
            if let Some((w, p)) = cfg.data.smoothing {
                t = savgol_smooth(&t, w, p)?;
            }
            train_set.push(t);
        }
        let n_test = cfg.data.n_test.min(train_set.len().saturating_sub(1));
        test_set = train_set.split_off(train_set.len() - n_test);
    } else {
        for i in 0..n_train {
            let clean = make_clean(cfg.data.n_steps, &mut rng)?;
            let s_i = if cfg.data.noise_ramp && n_train > 1 {
                sigma * ((i as f64) / (n_train as f64 - 1.0)).sqrt()
            } else {
                sigma
            };
            train_set.push(add_noise(&clean, s_i, &mut rng));
        }
        for _ in 0..cfg.data.n_test {
            test_set.push(make_clean(cfg.data.n_steps + cfg.data.test_extra_steps, &mut rng)?);
        }
    }

    for (i, t) in train_set.iter().enumerate() {
        write_trajectory_csv(&dir.join(format!("train_{i:03}.csv")), t)?;
    }
    for (i, t) in test_set.iter().enumerate() {
        write_trajectory_csv(&dir.join(format!("test_{i:03}.csv")), t)?;
    }
    if cfg.task == Task::Pixel {
        for (i, t) in train_set.iter().enumerate() {
            write_pixel_csv(&dir.join(format!("frames_train_{i:03}.csv")), &t.positions)?;
        }
    }
    let manifest = DatasetManifest {
        config_hash: cfg.hash(),
        generator: format!("{:?}", cfg.task).to_lowercase(),
        h,
        dim: train_set[0].dim(),
        n_steps: cfg.data.n_steps,
        sigma,
        seed,
        n_train: train_set.len(),
        n_test: test_set.len(),
        params: task_params_json(cfg),
    };
    write_manifest(&dir.join("manifest.json"), &manifest)?;
    Ok(Dataset {
        train: train_set,
        test: test_set,
        manifest,
    })
}

fn task_params_json(cfg: &ExperimentConfig) -> serde_json::Value {
    match cfg.task {
        Task::Dp => serde_json::to_value(cfg.data.dp.unwrap_or_default()).unwrap(),
        Task::Cp => serde_json::to_value(cfg.data.cp.unwrap_or_default()).unwrap(),
        Task::Ho | Task::Pixel => serde_json::json!({"gamma": cfg.data.ho_gamma}),
        Task::CsvImport => serde_json::json!({"import_dir": cfg.data.import_dir}),
    }
}

/// Load a previously generated dataset.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let dir = dataset_dir(cfg);
    let manifest = read_manifest(&dir.join("manifest.json"))?;
    let mut train = Vec::new();
    for i in 0..manifest.n_train {
        train.push(read_trajectory_csv(&dir.join(format!("train_{i:03}.csv")))?);
    }
    let mut test = Vec::new();
    for i in 0..manifest.n_test {
        test.push(read_trajectory_csv(&dir.join(format!("test_{i:03}.csv")))?);
    }
    Ok(Dataset {
        train,
        test,
        manifest,
    })
}

/// Everything a prediction run needs, reconstructed from a checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub model: ModelKind,
    pub dflnn: Option<(LagrangianModel, ForceModel)>,
    pub baseline: Option<BaselineModel>,
    pub autoencoder: Option<Autoencoder>,
    pub store: ParameterStore,
    pub best_epoch: usize,
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let text =
        serde_json::to_string(ck).map_err(|e| Error::Io(format!("checkpoint encode: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn build_dflnn(
    cfg: &ExperimentConfig,
    dim: usize,
    rng: &mut StdRng,
) -> (LagrangianModel, ForceModel, ParameterStore) {
    let mut b = StoreBuilder::new();
    let n = &cfg.network;
    let lag = match cfg.lagrangian {
        LagrangianKind::Mechanical => LagrangianModel::init_mechanical(
            dim,
            n.hidden_dim,
            n.hidden_layers,
            n.epsilon,
            n.u_depends_on_velocity,
            &mut b,
            rng,
        ),
        LagrangianKind::FreeMlp => {
            LagrangianModel::init_free(dim, n.hidden_dim, n.hidden_layers, &mut b, rng)
        }
    };
    let force = match cfg.force {
        ForceKind::Free => ForceModel::init_free(
            dim,
            n.hidden_dim,
            n.hidden_layers,
            n.dropout_rate,
            &mut b,
            rng,
        ),
        ForceKind::Rayleigh => {
            ForceModel::init_rayleigh(dim, n.hidden_dim, n.hidden_layers, &mut b, rng)
        }
        ForceKind::LinearRayleigh => ForceModel::init_linear_rayleigh(dim, &mut b),
        ForceKind::Combined => ForceModel::init_combined(
            dim,
            n.hidden_dim,
            n.hidden_layers,
            n.dropout_rate,
            &mut b,
            rng,
        ),
    };
    (lag, force, b.finish())
}

/// Train the configured model on the stored dataset; writes the checkpoint
/// and the per-epoch loss CSV.
pub fn run_train(cfg: &ExperimentConfig) -> Result<(Checkpoint, Trained)> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    if ds.manifest.config_hash != cfg.hash() {
        return Err(Error::Config(format!(
            "dataset was generated by config {} but the current config hashes to {}",
            ds.manifest.config_hash,
            cfg.hash()
        )));
    }
    let disc = Discretization::new(cfg.scheme)?;
    let mut rng = StdRng::seed_from_u64(cfg.train.seed ^ 0x1417);
    let dim = ds.train[0].dim();

    let out = Path::new(&cfg.out_dir);
    fs::create_dir_all(out)?;

    let (checkpoint, trained) = match (cfg.model, cfg.task) {
        (ModelKind::Dflnn, Task::Pixel) => {
            let n = &cfg.network;
            let mut b = StoreBuilder::new();
            let ae = Autoencoder::init(
                AutoencoderSpec::new(PIXEL_DIM, n.latent_dim, n.ae_hidden_dim, 1),
                "ae",
                &mut b,
                &mut rng,
            );
            let l = n.latent_dim;
            let lag = LagrangianModel::init_mechanical(
                l,
                n.hidden_dim,
                n.hidden_layers,
                n.epsilon,
                n.u_depends_on_velocity,
                &mut b,
                &mut rng,
            );
            let force = ForceModel::init_linear_rayleigh(l, &mut b);
            let store = b.finish();
            let pipeline = LatentPipeline {
                ae: ae.clone(),
                lag: lag.clone(),
                force: force.clone(),
            };
            let trained =
                train_latent(&pipeline, store, &ds.train, &disc, &cfg.weights, &cfg.train)?;
            (
                Checkpoint {
                    config_hash: cfg.hash(),
                    model: cfg.model,
                    dflnn: Some((lag, force)),
                    baseline: None,
                    autoencoder: Some(ae),
                    store: trained.store.clone(),
                    best_epoch: trained.report.best_epoch,
                },
                trained,
            )
        }
        (ModelKind::Dflnn, _) => {
            let (lag, force, store) = build_dflnn(cfg, dim, &mut rng);
            let trained = train(
                &lag,
                &force,
                store,
                &ds.train,
                &disc,
                &cfg.weights,
                &cfg.train,
            )?;
            (
                Checkpoint {
                    config_hash: cfg.hash(),
                    model: cfg.model,
                    dflnn: Some((lag, force)),
                    baseline: None,
                    autoencoder: None,
                    store: trained.store.clone(),
                    best_epoch: trained.report.best_epoch,
                },
                trained,
            )
        }
        (ModelKind::Glnn, _) => {
            let (lag, force, store) = build_dflnn(cfg, dim, &mut rng);
            let model = BaselineModel::Glnn { lag, force };
            let trained = train_baseline(&model, store, &ds.train, cfg.data.h, &cfg.train)?;
            (
                Checkpoint {
                    config_hash: cfg.hash(),
                    model: cfg.model,
                    dflnn: None,
                    baseline: Some(model),
                    autoencoder: None,
                    store: trained.store.clone(),
                    best_epoch: trained.report.best_epoch,
                },
                trained,
            )
        }
        (ModelKind::Node, _) => {
            let mut b = StoreBuilder::new();
            let model = BaselineModel::init_neural_ode(
                dim,
                cfg.network.hidden_dim,
                cfg.network.hidden_layers,
                &mut b,
                &mut rng,
            );
            let store = b.finish();
            let trained = train_baseline(&model, store, &ds.train, cfg.data.h, &cfg.train)?;
            (
                Checkpoint {
                    config_hash: cfg.hash(),
                    model: cfg.model,
                    dflnn: None,
                    baseline: Some(model),
                    autoencoder: None,
                    store: trained.store.clone(),
                    best_epoch: trained.report.best_epoch,
                },
                trained,
            )
        }
    };

    write_checkpoint(&out.join("checkpoint.json"), &checkpoint)?;
    fs::write(out.join("train_report.csv"), trained.report.to_csv())?;
    Ok((checkpoint, trained))
}

/// Roll out every test trajectory from its first two samples and write the
/// prediction CSVs plus per-step Newton statistics.
pub fn run_rollout(cfg: &ExperimentConfig, force_on: bool) -> Result<Vec<Vec<Vec<f64>>>> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let ck = read_checkpoint(&Path::new(&cfg.out_dir).join("checkpoint.json"))?;
    if ck.config_hash != cfg.hash() {
        return Err(Error::Config(format!(
            "checkpoint was trained by config {} but the current config hashes to {}",
            ck.config_hash,
            cfg.hash()
        )));
    }
    let disc = Discretization::new(cfg.scheme)?;
    let out = Path::new(&cfg.out_dir).join(if force_on {
        "rollout"
    } else {
        "rollout_force_off"
    });
    fs::create_dir_all(&out)?;
    let n_steps = ds.test[0].steps();
    let mut preds = Vec::new();
    let mut newton_stats = String::from("trajectory,step,newton_iters,converged\n");
    for (i, t) in ds.test.iter().enumerate() {
        let positions = match (&ck.baseline, &ck.autoencoder, &ck.dflnn) {
            (Some(model), None, _) => {
                match model.rollout(
                    &ck.store.values,
                    &t.positions[0],
                    &t.positions[1],
                    n_steps,
                    cfg.data.h,
                    force_on,
                ) {
                    Ok(p) => p,
                    Err(Error::SingularHessian { point }) => {
                        newton_stats.push_str(&format!("{i},0,0,false\n"));
                        preds.push(vec![vec![f64::NAN; t.dim()]; n_steps + 1]);
                        let _ = point;
                        continue;
                    }
                    Err(Error::NonFinite(_)) => {
                        newton_stats.push_str(&format!("{i},0,0,false\n"));
                        preds.push(vec![vec![f64::NAN; t.dim()]; n_steps + 1]);
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            (None, Some(ae), Some((lag, force))) => {
                let pipeline = LatentPipeline {
                    ae: ae.clone(),
                    lag: lag.clone(),
                    force: force.clone(),
                };
                latent_rollout(
                    &pipeline,
                    &ck.store.values,
                    &t.positions[0],
                    &t.positions[1],
                    n_steps,
                    force_on,
                    &disc,
                    &cfg.newton,
                )?
            }
            (None, None, Some((lag, force))) => {
                let r = rollout(
                    &disc,
                    lag,
                    force,
                    &ck.store.values,
                    &t.positions[0],
                    &t.positions[1],
                    n_steps,
                    force_on,
                    &cfg.newton,
                );
                match r {
                    Ok(res) => {
                        for (s, (it, conv)) in
                            res.newton_iters.iter().zip(&res.converged).enumerate()
                        {
                            newton_stats.push_str(&format!("{i},{},{it},{conv}\n", s + 2));
                        }
                        res.positions
                    }
                    Err(Error::NewtonDiverged { .. }) => {
                        newton_stats.push_str(&format!("{i},0,0,false\n"));
                        preds.push(vec![vec![f64::NAN; t.dim()]; n_steps + 1]);
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            _ => return Err(Error::Config("checkpoint is incomplete".into())),
        };
        let traj = Trajectory {
            h: cfg.data.h,
            positions: positions.clone(),
            velocities: None,
        };
        write_trajectory_csv(&out.join(format!("pred_{i:03}.csv")), &traj)?;
        preds.push(positions);
    }
    fs::write(out.join("newton_stats.csv"), newton_stats)?;
    Ok(preds)
}

/// Extrapolation-error table at step `k`: one row per model/task with mean
/// and standard deviation over the test trajectories. NaN predictions
/// produce NaN rows rather than being dropped.
pub fn run_eval(cfg: &ExperimentConfig, k: usize, force_on: bool) -> Result<String> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    if ds.manifest.config_hash != cfg.hash() {
        return Err(Error::Config(
            "dataset hash does not match the evaluating config".into(),
        ));
    }
    let dir = Path::new(&cfg.out_dir).join(if force_on {
        "rollout"
    } else {
        "rollout_force_off"
    });
    let mut preds = Vec::new();
    for i in 0..ds.test.len() {
        preds.push(read_trajectory_csv(&dir.join(format!("pred_{i:03}.csv")))?.positions);
    }
    let errs = extrapolation_errors_at(&preds, &ds.test, k)?;
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let std = if errs.len() > 1 {
        (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let table = format!(
        "model,task,k,mean,std,config_hash\n{:?},{:?},{k},{},{},{}\n",
        cfg.model,
        cfg.task,
        crate::data::io::format_f64(mean),
        crate::data::io::format_f64(std),
        cfg.hash()
    );
    let path = Path::new(&cfg.out_dir).join(format!(
        "eval_k{k}{}.csv",
        if force_on { "" } else { "_force_off" }
    ));
    fs::write(path, &table)?;
    Ok(table)
}

/// CLI entry: run one subcommand against a config.
pub fn run(command: &str, cfg: &ExperimentConfig, k: usize, force_off: bool) -> Result<()> {
    match command {
        "gen" => {
            generate(cfg)?;
            Ok(())
        }
        "train" => {
            run_train(cfg)?;
            Ok(())
        }
        "rollout" => {
            run_rollout(cfg, !force_off)?;
            Ok(())
        }
        "eval" => {
            let table = run_eval(cfg, k, !force_off)?;
            print!("{table}");
            Ok(())
        }
        other => Err(Error::Config(format!(
            "unknown command `{other}` (expected gen, train, rollout or eval)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_dir(tag: &str) -> String {
        let dir = std::env::temp_dir().join(format!("dflnn_driver_{tag}"));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir.to_string_lossy().into_owned()
    }

    fn tiny_cfg(tag: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::task1_defaults(&tmp_dir(tag));
        cfg.data.n_train = 4;
        cfg.data.n_test = 2;
        cfg.data.n_steps = 8;
        cfg.data.test_extra_steps = 2;
        cfg.network.hidden_dim = 6;
        cfg.network.hidden_layers = 1;
        cfg.weights.r_points = 5;
        cfg.train.epochs = 3;
        cfg.train.threads = 1;
        cfg
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg = tiny_cfg("cfg");
        let json = cfg.to_json();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(cfg, back);
        let bad = json.replacen("\"task\"", "\"bogus_key\": 1, \"task\"", 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn generation_is_byte_deterministic() {
        let cfg = tiny_cfg("gen");
        generate(&cfg).unwrap();
        let read = |name: &str| fs::read(Path::new(&cfg.out_dir).join("data").join(name)).unwrap();
        let a = read("train_000.csv");
        let m1 = read("manifest.json");
        generate(&cfg).unwrap();
        assert_eq!(a, read("train_000.csv"));
        assert_eq!(m1, read("manifest.json"));
    }

    #[test]
    fn full_pipeline_smoke() {
        let cfg = tiny_cfg("pipe");
        generate(&cfg).unwrap();
        run_train(&cfg).unwrap();
        run_rollout(&cfg, true).unwrap();
        let table = run_eval(&cfg, 5, true).unwrap();
        assert!(table.contains("Dflnn"));
    }

    #[test]
    fn eval_refuses_mismatched_hash() {
        let cfg = tiny_cfg("hash");
        generate(&cfg).unwrap();
        let mut other = cfg.clone();
        other.train.seed = 99;
        assert!(matches!(run_eval(&other, 3, true), Err(Error::Config(_))));
    }
}
