//! Synthetic ground-truth generators, high-accuracy integration, noise
//! injection, smoothing, rendering and trajectory I/O.

pub mod io;
pub mod ode;
pub mod render;
pub mod savgol;

pub use ode::{cp_ode, damped_ho_trajectory, dp_ode, ChargedParticleParams, DoublePendulumParams};
pub use render::{render_pendulum, PIXEL_DIM, PIXEL_HEIGHT, PIXEL_WIDTH};
pub use savgol::savgol_smooth;

use rand::rngs::StdRng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Uniformly sampled positions; the universal data unit. True velocities are
/// generator-only diagnostics and never reach training.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    /// Number of steps `N` (positions hold `N + 1` samples).
    pub fn steps(&self) -> usize {
        self.positions.len().saturating_sub(1)
    }

    /// Number of interior three-point windows.
    pub fn midpoint_windows(&self) -> usize {
        self.positions.len().saturating_sub(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let d = self.dim();
        for (i, p) in self.positions.iter().enumerate() {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("position sample {i}")));
            }
        }
        Ok(())
    }
}

/// Fixed-step RK4 with `substeps` internal steps per sample interval.
/// The state convention is positions first (`pos_dim` of them), then their
/// velocities; only positions are sampled into the trajectory.
pub fn integrate(
    ode: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    pos_dim: usize,
    h: f64,
    substeps: usize,
    n_steps: usize,
) -> Result<Trajectory> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be >= 1".into()));
    }
    let dim = x0.len();
    let dt = h / substeps as f64;
    let mut state = x0.to_vec();
    let mut positions = Vec::with_capacity(n_steps + 1);
    let mut velocities = Vec::with_capacity(n_steps + 1);
    let sample = |s: &[f64], ps: &mut Vec<Vec<f64>>, vs: &mut Vec<Vec<f64>>| {
        ps.push(s[..pos_dim].to_vec());
        vs.push(s[pos_dim..(2 * pos_dim).min(dim)].to_vec());
    };
    sample(&state, &mut positions, &mut velocities);
    for step in 0..n_steps {
        for _ in 0..substeps {
            let k1 = ode(&state);
            let k2 = ode(&axpy(&state, &k1, dt / 2.0));
            let k3 = ode(&axpy(&state, &k2, dt / 2.0));
            let k4 = ode(&axpy(&state, &k3, dt));
            for i in 0..dim {
                state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "integration diverged at step {} of {n_steps}",
                step + 1
            )));
        }
        sample(&state, &mut positions, &mut velocities);
    }
    Ok(Trajectory {
        h,
        positions,
        velocities: Some(velocities),
    })
}

fn axpy(x: &[f64], k: &[f64], a: f64) -> Vec<f64> {
    x.iter().zip(k).map(|(&xi, &ki)| xi + a * ki).collect()
}

/// Measurement-noise level used by the synthetic tasks: variance `1e-2 h`.
pub fn paper_noise_sigma(h: f64) -> f64 {
    (1e-2 * h).sqrt()
}

/// Add i.i.d. Gaussian noise to every position coordinate.
pub fn add_noise(traj: &Trajectory, sigma: f64, rng: &mut StdRng) -> Trajectory {
    if sigma == 0.0 {
        return traj.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma >= 0");
    let positions = traj
        .positions
        .iter()
        .map(|p| p.iter().map(|&x| x + normal.sample(rng)).collect())
        .collect();
    Trajectory {
        h: traj.h,
        positions,
        velocities: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn integrate_zero_field_is_constant() {
        let ode = |s: &[f64]| vec![0.0; s.len()];
        let t = integrate(&ode, &[1.0, 2.0], 1, 0.1, 3, 5).unwrap();
        assert_eq!(t.positions.len(), 6);
        assert!(t.positions.iter().all(|p| p[0] == 1.0));
    }

    #[test]
    fn integrate_exponential_growth_matches_closed_form() {
        // q' = q (treat the single state entry as a position)
        let ode = |s: &[f64]| vec![s[0]];
        let t = integrate(&ode, &[1.0], 1, 0.1, 100, 10).unwrap();
        let expect = (1.0f64).exp();
        let got = t.positions[10][0];
        assert!(
            ((got - expect) / expect).abs() < 1e-10,
            "rel err {}",
            ((got - expect) / expect).abs()
        );
    }

    #[test]
    fn integrate_is_fourth_order() {
        let ode = |s: &[f64]| vec![s[0]];
        let exact = (1.0f64).exp();
        let err = |substeps: usize| {
            let t = integrate(&ode, &[1.0], 1, 1.0, substeps, 1).unwrap();
            (t.positions[1][0] - exact).abs()
        };
        let ratio = err(8) / err(16);
        assert!(
            (ratio - 16.0).abs() < 3.0,
            "halving substeps should cut error ~16x, got {ratio}"
        );
    }

    #[test]
    fn integrate_reports_divergence() {
        // q' = q^2 from 1 blows up at t = 1
        let ode = |s: &[f64]| vec![s[0] * s[0]];
        let res = integrate(&ode, &[1.0], 1, 0.5, 4, 10);
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    #[test]
    fn noise_zero_sigma_is_identity_and_seeded() {
        let traj = Trajectory {
            h: 0.1,
            positions: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            velocities: None,
        };
        let mut rng = StdRng::seed_from_u64(0);
        assert_eq!(add_noise(&traj, 0.0, &mut rng), traj);
        let mut r1 = StdRng::seed_from_u64(5);
        let mut r2 = StdRng::seed_from_u64(5);
        assert_eq!(add_noise(&traj, 0.3, &mut r1), add_noise(&traj, 0.3, &mut r2));
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let n = 500_000;
        let traj = Trajectory {
            h: 0.1,
            positions: vec![vec![0.0]; n],
            velocities: None,
        };
        let sigma = paper_noise_sigma(0.1);
        let mut rng = StdRng::seed_from_u64(9);
        let noisy = add_noise(&traj, sigma, &mut rng);
        let var = noisy.positions.iter().map(|p| p[0] * p[0]).sum::<f64>() / n as f64;
        assert!(
            ((var - sigma * sigma) / (sigma * sigma)).abs() < 0.01,
            "var {var} vs sigma^2 {}",
            sigma * sigma
        );
    }
}
