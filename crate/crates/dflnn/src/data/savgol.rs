//! Savitzky-Golay smoothing: per-coordinate least-squares polynomial fits
//! over a sliding window. Edges are handled by fitting the boundary window
//! and evaluating the polynomial at the edge positions, so polynomial
//! signals of degree <= polyorder pass through unchanged everywhere.

use super::Trajectory;
use crate::{Error, Result};

/// Fit a degree-`order` polynomial to `y` at abscissae `-c..=c` (window
/// center `c`) and evaluate it at offset `at` (relative to window start).
fn polyfit_eval(y: &[f64], order: usize, at: f64) -> f64 {
    let n = y.len();
    let m = order + 1;
    // normal equations: (A^T A) c = A^T y with A[i][j] = x_i^j
    let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut ata = vec![0.0; m * m];
    let mut aty = vec![0.0; m];
    for (i, &x) in xs.iter().enumerate() {
        let mut pows = vec![1.0; m];
        for j in 1..m {
            pows[j] = pows[j - 1] * x;
        }
        for r in 0..m {
            aty[r] += pows[r] * y[i];
            for c in 0..m {
                ata[r * m + c] += pows[r] * pows[c];
            }
        }
    }
    let mut coef = aty;
    crate::diffcore::linalg::solve(&ata, &mut coef, m).expect("well-posed when order < window");
    let mut acc = 0.0;
    let mut p = 1.0;
    for c in coef {
        acc += c * p;
        p *= at;
    }
    acc
}

/// Smooth every coordinate of a trajectory.
pub fn savgol_smooth(traj: &Trajectory, window: usize, polyorder: usize) -> Result<Trajectory> {
    if window % 2 == 0 || window < 3 {
        return Err(Error::InvalidArgument(
            "savgol window must be odd and >= 3".into(),
        ));
    }
    if polyorder >= window {
        return Err(Error::InvalidArgument(
            "savgol polyorder must be below the window length".into(),
        ));
    }
    let n = traj.positions.len();
    if n < window {
        return Err(Error::InvalidArgument(format!(
            "trajectory of {n} samples is shorter than the window {window}"
        )));
    }
    let d = traj.dim();
    let half = window / 2;
    let mut out = vec![vec![0.0; d]; n];
    let mut col = vec![0.0; window];
    for c in 0..d {
        for i in 0..n {
            // clamp the window at the boundaries; `at` is the position of
            // sample i inside the fitted window
            let start = i.saturating_sub(half).min(n - window);
            for (k, s) in col.iter_mut().enumerate() {
                *s = traj.positions[start + k][c];
            }
            out[i][c] = polyfit_eval(&col, polyorder, (i - start) as f64);
        }
    }
    Ok(Trajectory {
        h: traj.h,
        positions: out,
        velocities: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn traj_of(f: impl Fn(f64) -> f64, n: usize, h: f64) -> Trajectory {
        Trajectory {
            h,
            positions: (0..=n).map(|i| vec![f(i as f64 * h)]).collect(),
            velocities: None,
        }
    }

    #[test]
    fn reproduces_polynomials_exactly() {
        let t = traj_of(|x| 2.0 - 3.0 * x + 0.5 * x * x * x, 40, 0.25);
        let s = savgol_smooth(&t, 11, 3).unwrap();
        for (a, b) in t.positions.iter().zip(&s.positions) {
            assert!((a[0] - b[0]).abs() < 1e-10, "{} vs {}", a[0], b[0]);
        }
    }

    #[test]
    fn constant_signal_unchanged() {
        let t = traj_of(|_| 4.2, 30, 0.1);
        let s = savgol_smooth(&t, 7, 2).unwrap();
        assert!(s.positions.iter().all(|p| (p[0] - 4.2).abs() < 1e-12));
    }

    #[test]
    fn denoises_a_sine() {
        let clean = traj_of(|x| x.sin(), 200, 0.05);
        let mut rng = StdRng::seed_from_u64(3);
        let noisy = Trajectory {
            h: clean.h,
            positions: clean
                .positions
                .iter()
                .map(|p| vec![p[0] + rng.gen_range(-0.05..0.05)])
                .collect(),
            velocities: None,
        };
        let smoothed = savgol_smooth(&noisy, 11, 3).unwrap();
        let rmse = |a: &Trajectory| {
            (a.positions
                .iter()
                .zip(&clean.positions)
                .map(|(x, y)| (x[0] - y[0]).powi(2))
                .sum::<f64>()
                / a.positions.len() as f64)
                .sqrt()
        };
        assert!(
            rmse(&smoothed) < rmse(&noisy),
            "smoothing did not reduce error: {} vs {}",
            rmse(&smoothed),
            rmse(&noisy)
        );
    }

    #[test]
    fn rejects_invalid_windows() {
        let t = traj_of(|x| x, 20, 0.1);
        assert!(savgol_smooth(&t, 4, 2).is_err());
        assert!(savgol_smooth(&t, 5, 5).is_err());
        assert!(savgol_smooth(&t, 31, 2).is_err());
    }
}
