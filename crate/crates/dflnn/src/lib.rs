//! Learning forced and dissipative mechanical dynamics from position-only
//! trajectory data.
//!
//! The model approximates a Lagrangian and an external force with small
//! feed-forward networks, trains them by minimizing the residual of the
//! discrete forced Euler-Lagrange equations over observed position windows,
//! and predicts by implicitly solving those equations step by step. With the
//! learned force switched off, the rollout reduces to a variational
//! integrator for the learned conservative core.

pub mod baselines;
pub mod data;
pub mod diffcore;
pub mod discretization;
pub mod driver;
pub mod latent;
pub mod mechanics;
pub mod networks;
pub mod objective;
pub mod rollout;
pub mod training;

use std::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch { expected: usize, got: usize },
    Layout(String),
    SingularMatrix,
    SingularHessian { point: Vec<f64> },
    NewtonDiverged { best: Vec<f64>, residual_norm: f64, iters: usize },
    InvalidArgument(String),
    EmptyDataset,
    NonFinite(String),
    Config(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::Layout(msg) => write!(f, "parameter layout error: {msg}"),
            Error::SingularMatrix => write!(f, "singular matrix in linear solve"),
            Error::SingularHessian { point } => {
                write!(f, "singular velocity Hessian at point {point:?}")
            }
            Error::NewtonDiverged {
                residual_norm,
                iters,
                ..
            } => write!(
                f,
                "Newton solve did not converge after {iters} iterations (residual {residual_norm:.3e})"
            ),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::EmptyDataset => write!(f, "empty dataset"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
