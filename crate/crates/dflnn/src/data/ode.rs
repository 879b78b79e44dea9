//! Ground-truth dynamics for the synthetic tasks.

use serde::{Deserialize, Serialize};

use super::Trajectory;

/// Damped double pendulum parameters. Damping is applied per pendulum as an
/// angular-velocity-proportional deceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublePendulumParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub g: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Default for DoublePendulumParams {
    fn default() -> Self {
        DoublePendulumParams {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            g: 9.81,
            b1: 0.5,
            b2: 0.5,
        }
    }
}

/// State `(theta1, theta2, omega1, omega2)` -> its time derivative.
pub fn dp_ode(state: &[f64], p: &DoublePendulumParams) -> Vec<f64> {
    let (th1, th2, w1, w2) = (state[0], state[1], state[2], state[3]);
    let dlt = th1 - th2;
    let den = 2.0 * p.m1 + p.m2 - p.m2 * (2.0 * th1 - 2.0 * th2).cos();
    let a1 = (-p.g * (2.0 * p.m1 + p.m2) * th1.sin()
        - p.m2 * p.g * (th1 - 2.0 * th2).sin()
        - 2.0 * dlt.sin() * p.m2 * (w2 * w2 * p.l2 + w1 * w1 * p.l1 * dlt.cos()))
        / (p.l1 * den)
        - p.b1 * w1;
    let a2 = (2.0 * dlt.sin()
        * (w1 * w1 * p.l1 * (p.m1 + p.m2)
            + p.g * (p.m1 + p.m2) * th1.cos()
            + w2 * w2 * p.l2 * p.m2 * dlt.cos()))
        / (p.l2 * den)
        - p.b2 * w2;
    vec![w1, w2, a1, a2]
}

/// Total mechanical energy of the (undamped) double pendulum, for
/// conservation and dissipation checks.
pub fn dp_energy(state: &[f64], p: &DoublePendulumParams) -> f64 {
    let (th1, th2, w1, w2) = (state[0], state[1], state[2], state[3]);
    let kinetic = 0.5 * p.m1 * p.l1 * p.l1 * w1 * w1
        + 0.5
            * p.m2
            * (p.l1 * p.l1 * w1 * w1
                + p.l2 * p.l2 * w2 * w2
                + 2.0 * p.l1 * p.l2 * w1 * w2 * (th1 - th2).cos());
    let potential =
        -p.g * ((p.m1 + p.m2) * p.l1 * th1.cos() + p.m2 * p.l2 * th2.cos());
    kinetic + potential
}

/// Charged particle in a constant magnetic field with linear drag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargedParticleParams {
    pub charge: f64,
    pub mass: f64,
    pub damping: f64,
    pub field: [f64; 3],
}

impl Default for ChargedParticleParams {
    fn default() -> Self {
        ChargedParticleParams {
            charge: 1.0,
            mass: 1.0,
            damping: 0.1,
            field: [0.0, 0.0, 1.0],
        }
    }
}

/// State `(x, y, z, vx, vy, vz)` -> derivative: `a = (q/m) v x B - (b/m) v`.
pub fn cp_ode(state: &[f64], p: &ChargedParticleParams) -> Vec<f64> {
    let (vx, vy, vz) = (state[3], state[4], state[5]);
    let [bx, by, bz] = p.field;
    let qm = p.charge / p.mass;
    let bm = p.damping / p.mass;
    vec![
        vx,
        vy,
        vz,
        qm * (vy * bz - vz * by) - bm * vx,
        qm * (vz * bx - vx * bz) - bm * vy,
        qm * (vx * by - vy * bx) - bm * vz,
    ]
}

/// Damped harmonic oscillator `q'' = -q - gamma q'`, sampled from the exact
/// closed-form solution (underdamped branch).
pub fn damped_ho_trajectory(gamma: f64, q0: f64, v0: f64, h: f64, n_steps: usize) -> Trajectory {
    assert!(gamma < 2.0, "underdamped branch requires gamma < 2");
    let omega = (1.0 - gamma * gamma / 4.0).sqrt();
    let a = q0;
    let b = (v0 + 0.5 * gamma * q0) / omega;
    let mut positions = Vec::with_capacity(n_steps + 1);
    let mut velocities = Vec::with_capacity(n_steps + 1);
    for n in 0..=n_steps {
        let t = n as f64 * h;
        let e = (-0.5 * gamma * t).exp();
        let (s, c) = (omega * t).sin_cos();
        positions.push(vec![e * (a * c + b * s)]);
        velocities.push(vec![e
            * (-0.5 * gamma * (a * c + b * s) + omega * (b * c - a * s))]);
    }
    Trajectory {
        h,
        positions,
        velocities: Some(velocities),
    }
}
