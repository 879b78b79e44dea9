//! Stencils mapping position windows to `(qbar, vbar)` pairs and the
//! residual of the discrete forced Euler-Lagrange equations.
//!
//! The midpoint scheme consumes three-point windows. The symmetric multistep
//! scheme of order `2k` consumes `(4k+1)`-point windows: the residual at the
//! center differentiates the discrete action over the `2k+1` stencil
//! evaluations that touch the center point, pairing forces with the weight
//! `h * d(qbar_m)/d(q_n)`. Both residuals carry a `2/h` normalization so
//! they stay O(1)-conditioned as the step size shrinks; the physics loss
//! applies the `h/2` prefactor.

use serde::{Deserialize, Serialize};

use crate::diffcore::{DualN, Real};
use crate::mechanics::{lagrangian_grads_multi, lift_multi, Force, Lagrangian};
use crate::{Error, Result};

/// Run `f` with a tangent lane count suited to `2 * dim` seeds (capped at
/// 12; larger dimensions chunk their passes).
#[macro_export]
macro_rules! with_lanes {
    ($dim:expr, $k:ident => $body:expr) => {{
        match 2 * $dim {
            0..=2 => {
                const $k: usize = 2;
                $body
            }
            3..=4 => {
                const $k: usize = 4;
                $body
            }
            5..=6 => {
                const $k: usize = 6;
                $body
            }
            7..=8 => {
                const $k: usize = 8;
                $body
            }
            _ => {
                const $k: usize = 12;
                $body
            }
        }
    }};
}

/// Discretization descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    Midpoint,
    Multistep { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub kind: SchemeKind,
    pub h: f64,
}

impl Scheme {
    pub fn midpoint(h: f64) -> Self {
        Scheme {
            kind: SchemeKind::Midpoint,
            h,
        }
    }

    pub fn multistep(k: usize, h: f64) -> Self {
        Scheme {
            kind: SchemeKind::Multistep { k },
            h,
        }
    }

    /// Number of positions one residual consumes.
    pub fn window_len(&self) -> usize {
        match self.kind {
            SchemeKind::Midpoint => 3,
            SchemeKind::Multistep { k } => 4 * k + 1,
        }
    }
}

/// Finite-difference stencil of a symmetric multistep scheme of order `2k`.
///
/// `delta[j-1]` holds the one-sided derivative coefficients for offsets
/// `j = 1..=k`; the full antisymmetric set and the position-average
/// coefficients are stored indexed by `offset + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stencil {
    pub k: usize,
    pub delta: Vec<f64>,
    pub v_coeffs: Vec<f64>,
    pub qbar_coeffs: Vec<f64>,
}

/// Derivative coefficients `delta_j = ((-1)^(j-1)/j) * k!^2/((k-j)!(k+j)!)`,
/// evaluated with exact integer products to keep small orders exact.
pub fn multistep_coeffs(k: usize) -> Result<Stencil> {
    if k < 1 {
        return Err(Error::InvalidArgument("multistep order k must be >= 1".into()));
    }
    if k > 12 {
        return Err(Error::InvalidArgument(
            "multistep order k > 12 overflows the exact coefficient arithmetic".into(),
        ));
    }
    let mut delta = Vec::with_capacity(k);
    for j in 1..=k {
        // k!^2 / ((k-j)! (k+j)!) = prod_{i=0}^{j-1} (k-i) / prod_{i=1}^{j} (k+i)
        let mut num: u128 = 1;
        for i in 0..j {
            num *= (k - i) as u128;
        }
        let mut den: u128 = j as u128;
        for i in 1..=j {
            den *= (k + i) as u128;
        }
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        delta.push(sign * num as f64 / den as f64);
    }
    let mut v_coeffs = vec![0.0; 2 * k + 1];
    for j in 1..=k {
        v_coeffs[k + j] = delta[j - 1];
        v_coeffs[k - j] = -delta[j - 1];
    }
    // qbar_n = (1 - delta_1) q_{n+1} - sum_{j != 0,1} delta_j q_{n+j},
    // with the antisymmetric coefficients indexed by signed offset. For k=2
    // this reproduces the explicit order-4 stencil
    // (1/12)(-q_{n-2} + 8 q_{n-1} + 4 q_{n+1} + q_{n+2}).
    let mut qbar_coeffs = vec![0.0; 2 * k + 1];
    qbar_coeffs[k + 1] = 1.0 - delta[0];
    for off in -(k as isize)..=(k as isize) {
        if off == 0 || off == 1 {
            continue;
        }
        let idx = (off + k as isize) as usize;
        qbar_coeffs[idx] -= v_coeffs[idx];
    }
    let stencil = Stencil {
        k,
        delta,
        v_coeffs,
        qbar_coeffs,
    };
    stencil.check_consistency()?;
    Ok(stencil)
}

impl Stencil {
    /// Position coefficients must sum to one with zero first moment, and the
    /// derivative coefficients must reproduce unit slope.
    fn check_consistency(&self) -> Result<()> {
        let k = self.k as isize;
        let sum: f64 = self.qbar_coeffs.iter().sum();
        let moment: f64 = self
            .qbar_coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (i as isize - k) as f64 * c)
            .sum();
        let slope: f64 = self
            .v_coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (i as isize - k) as f64 * c)
            .sum();
        let ok = (sum - 1.0).abs() < 1e-12 && moment.abs() < 1e-12 && (slope - 1.0).abs() < 1e-12;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inconsistent multistep stencil for k={}: sum={sum}, moment={moment}, slope={slope}",
                self.k
            )))
        }
    }
}

/// Midpoint pair of one segment: average position and difference velocity.
pub fn midpoint_pair<T: Real>(q_a: &[T], q_b: &[T], h: f64) -> (Vec<T>, Vec<T>) {
    debug_assert_eq!(q_a.len(), q_b.len());
    let qbar = q_a
        .iter()
        .zip(q_b)
        .map(|(&a, &b)| (a + b).scale(0.5))
        .collect();
    let vbar = q_a
        .iter()
        .zip(q_b)
        .map(|(&a, &b)| (b - a).scale(1.0 / h))
        .collect();
    (qbar, vbar)
}

/// Stencil pair at the center of a `(2k+1)`-point window.
pub fn multistep_pair<T: Real>(
    window: &[&[T]],
    h: f64,
    stencil: &Stencil,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = 2 * stencil.k + 1;
    if window.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: window.len(),
        });
    }
    let d = window[0].len();
    let mut qbar = vec![T::zero(); d];
    let mut vbar = vec![T::zero(); d];
    for (idx, q) in window.iter().enumerate() {
        let qc = stencil.qbar_coeffs[idx];
        let vc = stencil.v_coeffs[idx];
        for i in 0..d {
            if qc != 0.0 {
                qbar[i] = qbar[i] + q[i].scale(qc);
            }
            if vc != 0.0 {
                vbar[i] = vbar[i] + q[i].scale(vc);
            }
        }
    }
    for x in vbar.iter_mut() {
        *x = x.scale(1.0 / h);
    }
    Ok((qbar, vbar))
}

/// Precomputed discretization: the scheme plus its stencil when multistep.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub scheme: Scheme,
    pub stencil: Option<Stencil>,
}

impl Discretization {
    pub fn new(scheme: Scheme) -> Result<Self> {
        if scheme.h <= 0.0 {
            return Err(Error::InvalidArgument("step size h must be positive".into()));
        }
        let stencil = match scheme.kind {
            SchemeKind::Midpoint => None,
            SchemeKind::Multistep { k } => Some(multistep_coeffs(k)?),
        };
        Ok(Discretization { scheme, stencil })
    }

    pub fn window_len(&self) -> usize {
        self.scheme.window_len()
    }

    /// Residual of the discrete forced Euler-Lagrange equations on one
    /// window, normalized by `2/h`.
    ///
    /// `params` is the base parameter view, `params_n` the same view lifted
    /// into `K`-lane multi-tangent scalars (see [`lift_multi`]); `mask`
    /// carries dropout values for a free force network during training.
    pub fn del_residual<B: Real, const K: usize, L: Lagrangian, F: Force>(
        &self,
        lag: &L,
        force: &F,
        params: &[B],
        params_n: &[DualN<B, K>],
        window: &[&[B]],
        mask: Option<&[f64]>,
    ) -> Result<Vec<B>> {
        if window.len() != self.window_len() {
            return Err(Error::DimensionMismatch {
                expected: self.window_len(),
                got: window.len(),
            });
        }
        let h = self.scheme.h;
        let d = window[0].len();
        match self.scheme.kind {
            SchemeKind::Midpoint => {
                let (qm, vm) = midpoint_pair(window[0], window[1], h);
                let (qp, vp) = midpoint_pair(window[1], window[2], h);
                let (gq_m, gv_m) = lagrangian_grads_multi(lag, params_n, &qm, &vm);
                let (gq_p, gv_p) = lagrangian_grads_multi(lag, params_n, &qp, &vp);
                let f_m = force.eval(params, &qm, &vm, mask);
                let f_p = force.eval(params, &qp, &vp, mask);
                let c = 2.0 / h;
                let mut r = Vec::with_capacity(d);
                for i in 0..d {
                    r.push(
                        gq_m[i] + gv_m[i].scale(c) + gq_p[i] - gv_p[i].scale(c)
                            + f_m[i]
                            + f_p[i],
                    );
                }
                Ok(r)
            }
            SchemeKind::Multistep { k } => {
                let stencil = self.stencil.as_ref().expect("stencil built in new()");
                let mut r = vec![B::zero(); d];
                // window center sits at index 2k; stencil m ranges over
                // offsets -k..=k, its sub-window spans (k+m)..=(3k+m)
                for m_off in -(k as isize)..=(k as isize) {
                    let widx = (k as isize - m_off) as usize; // n - m + k
                    let qc = stencil.qbar_coeffs[widx];
                    let vc = stencil.v_coeffs[widx];
                    if qc == 0.0 && vc == 0.0 {
                        continue;
                    }
                    let lo = (k as isize + m_off) as usize;
                    let sub = &window[lo..lo + 2 * k + 1];
                    let (qbar, vbar) = multistep_pair(sub, h, stencil)?;
                    let (gq, gv) = lagrangian_grads_multi(lag, params_n, &qbar, &vbar);
                    // (2/h) * [ h*qc*(dL/dq + F) + vc*dL/dv ]
                    if qc != 0.0 {
                        let f = force.eval(params, &qbar, &vbar, mask);
                        for i in 0..d {
                            r[i] = r[i] + (gq[i] + f[i]).scale(2.0 * qc);
                        }
                    }
                    if vc != 0.0 {
                        for i in 0..d {
                            r[i] = r[i] + gv[i].scale(2.0 * vc / h);
                        }
                    }
                }
                Ok(r)
            }
        }
    }

    /// Convenience form that lifts the parameter view internally and picks
    /// the tangent lane count from the dimension.
    pub fn del_residual_simple<B: Real, L: Lagrangian, F: Force>(
        &self,
        lag: &L,
        force: &F,
        params: &[B],
        window: &[&[B]],
    ) -> Result<Vec<B>> {
        let d = window.first().map_or(0, |w| w.len());
        crate::with_lanes!(d, K => {
            let params_n = lift_multi::<B, K>(params);
            self.del_residual(lag, force, params, &params_n, window, None)
        })
    }
}
