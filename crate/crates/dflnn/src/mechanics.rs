//! The learned physics: Lagrangian model variants `L(q, v)` and external
//! force variants `F(q, v)`.

use rand::rngs::StdRng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{norm_sq, Dual, DualN, Real, StoreBuilder};
use crate::networks::{Mlp, MlpSpec};
use crate::{Error, Result};

/// Pre-lift a parameter view one dual level up (zero tangents).
pub fn lift_dual<B: Real>(params: &[B]) -> Vec<Dual<B>> {
    params.iter().map(|&b| Dual::lift(b)).collect()
}

/// Pre-lift a parameter view into `K`-lane multi-tangent scalars.
pub fn lift_multi<B: Real, const K: usize>(params: &[B]) -> Vec<DualN<B, K>> {
    params.iter().map(|&b| DualN::lift(b)).collect()
}

/// Gradients of a Lagrangian with respect to position and velocity, over any
/// base scalar. One forward-dual pass per coordinate; `params_d` is the
/// parameter view lifted by [`lift_dual`].
pub fn lagrangian_grads<B: Real, L: Lagrangian + ?Sized>(
    lag: &L,
    params_d: &[Dual<B>],
    q: &[B],
    v: &[B],
) -> (Vec<B>, Vec<B>) {
    let d = q.len();
    let mut qd: Vec<Dual<B>> = q.iter().map(|&b| Dual::lift(b)).collect();
    let mut vd: Vec<Dual<B>> = v.iter().map(|&b| Dual::lift(b)).collect();
    let mut gq = Vec::with_capacity(d);
    let mut gv = Vec::with_capacity(d);
    for i in 0..d {
        qd[i].dt = B::one();
        gq.push(lag.eval(params_d, &qd, &vd).dt);
        qd[i].dt = B::zero();
    }
    for i in 0..d {
        vd[i].dt = B::one();
        gv.push(lag.eval(params_d, &qd, &vd).dt);
        vd[i].dt = B::zero();
    }
    (gq, gv)
}

/// As [`lagrangian_grads`] but with `K` tangent lanes per pass, so the value
/// chain is evaluated (and recorded, for tape scalars) once per `K` seeds
/// instead of once per coordinate. Dimensions larger than `K/2` fall back to
/// multiple passes.
pub fn lagrangian_grads_multi<B: Real, const K: usize, L: Lagrangian + ?Sized>(
    lag: &L,
    params_n: &[DualN<B, K>],
    q: &[B],
    v: &[B],
) -> (Vec<B>, Vec<B>) {
    let d = q.len();
    let mut grads = vec![B::zero(); 2 * d];
    let mut base = 0;
    while base < 2 * d {
        let lanes = K.min(2 * d - base);
        let qn: Vec<DualN<B, K>> = q
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                if i >= base && i < base + lanes {
                    DualN::seeded(b, i - base)
                } else {
                    DualN::lift(b)
                }
            })
            .collect();
        let vn: Vec<DualN<B, K>> = v
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let coord = d + i;
                if coord >= base && coord < base + lanes {
                    DualN::seeded(b, coord - base)
                } else {
                    DualN::lift(b)
                }
            })
            .collect();
        let y = lag.eval(params_n, &qn, &vn);
        for lane in 0..lanes {
            grads[base + lane] = y.dt[lane];
        }
        base += lanes;
    }
    let gv = grads.split_off(d);
    (grads, gv)
}

/// Velocity Hessian `S_ij = d^2 L / dv_i dv_j`, row-major, every entry by an
/// independent hyper-dual pass.
pub fn velocity_hessian<B: Real, L: Lagrangian + ?Sized>(
    lag: &L,
    params_dd: &[Dual<Dual<B>>],
    q: &[B],
    v: &[B],
) -> Vec<B> {
    let d = q.len();
    let qdd: Vec<Dual<Dual<B>>> = q.iter().map(|&b| Dual::lift(Dual::lift(b))).collect();
    let mut vdd: Vec<Dual<Dual<B>>> = v.iter().map(|&b| Dual::lift(Dual::lift(b))).collect();
    let mut s = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            vdd[i].re.dt = B::one();
            vdd[j].dt.re = B::one();
            s.push(lag.eval(params_dd, &qdd, &vdd).dt.dt);
            vdd[i].re.dt = B::zero();
            vdd[j].dt.re = B::zero();
        }
    }
    s
}

/// Mixed Hessian `(d^2 L / dq_i dv_j)`, row-major over `(i, j)`.
pub fn mixed_hessian_qv<B: Real, L: Lagrangian + ?Sized>(
    lag: &L,
    params_dd: &[Dual<Dual<B>>],
    q: &[B],
    v: &[B],
) -> Vec<B> {
    let d = q.len();
    let mut qdd: Vec<Dual<Dual<B>>> = q.iter().map(|&b| Dual::lift(Dual::lift(b))).collect();
    let mut vdd: Vec<Dual<Dual<B>>> = v.iter().map(|&b| Dual::lift(Dual::lift(b))).collect();
    let mut s = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            qdd[i].re.dt = B::one();
            vdd[j].dt.re = B::one();
            s.push(lag.eval(params_dd, &qdd, &vdd).dt.dt);
            qdd[i].re.dt = B::zero();
            vdd[j].dt.re = B::zero();
        }
    }
    s
}

/// Number of entries in a lower-triangular `d x d` matrix.
pub fn tril_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Multiply a packed lower-triangular matrix by a vector: `(Lambda v)_i`.
/// Packing is row-major over `(i, j)` with `i >= j`.
fn tril_mul_vec<T: Real>(packed: &[T], v: &[T], d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(d);
    let mut k = 0;
    for i in 0..d {
        let mut acc = T::zero();
        for j in 0..=i {
            acc = acc + packed[k] * v[j];
            k += 1;
        }
        let _ = i;
        out.push(acc);
    }
    out
}

/// Multiply the transpose of a packed lower-triangular matrix by a vector:
/// `(Lambda^T w)_j = sum_{i >= j} Lambda_ij w_i`.
fn tril_t_mul_vec<T: Real>(packed: &[T], w: &[T], d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d];
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            out[j] = out[j] + packed[k] * w[i];
            k += 1;
        }
    }
    out
}

/// Anything that evaluates a scalar Lagrangian at `(q, v)`, generically over
/// the scalar type. Learned models and hand-coded references share this.
pub trait Lagrangian {
    fn dim(&self) -> usize;
    fn eval<T: Real>(&self, params: &[T], q: &[T], v: &[T]) -> T;
}

/// Anything that evaluates an external force at `(q, v)`. The optional mask
/// carries inverted-dropout values for the free network's hidden units and
/// is `None` outside training.
pub trait Force {
    fn dim(&self) -> usize;
    fn eval<T: Real>(&self, params: &[T], q: &[T], v: &[T], mask: Option<&[f64]>) -> Vec<T>;

    /// Dropout rate of an embedded free network, zero otherwise.
    fn dropout_rate(&self) -> f64 {
        0.0
    }

    /// Hidden units a dropout mask must cover, zero when none apply.
    fn mask_units(&self) -> usize {
        0
    }
}

/// The always-zero force, used when rolling out the conservative core.
#[derive(Clone, Copy, Debug)]
pub struct ZeroForce(pub usize);

impl Force for ZeroForce {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval<T: Real>(&self, _p: &[T], _q: &[T], _v: &[T], _mask: Option<&[f64]>) -> Vec<T> {
        vec![T::zero(); self.0]
    }
}

/// Learned Lagrangian.
///
/// The mechanical variant is `L(q, v) = v^T M(q) v - U(.)` with
/// `M(q) = eps I + Lambda(q)^T Lambda(q)`; the kinetic quadratic form carries
/// no 1/2 factor, any such factor is absorbed into `Lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LagrangianModel {
    FreeMlp {
        dim: usize,
        net: Mlp,
    },
    Mechanical {
        dim: usize,
        lambda_net: Mlp,
        u_net: Mlp,
        epsilon: f64,
        u_depends_on_velocity: bool,
    },
}

/// Default lower bound on the mass-matrix spectrum.
pub const DEFAULT_EPSILON: f64 = 1e-3;

impl LagrangianModel {
    pub fn init_free(
        dim: usize,
        hidden_dim: usize,
        hidden_layers: usize,
        builder: &mut StoreBuilder,
        rng: &mut StdRng,
    ) -> Self {
        let spec = MlpSpec::new(2 * dim, 1).with_hidden(hidden_dim, hidden_layers);
        LagrangianModel::FreeMlp {
            dim,
            net: Mlp::init(spec, "lagrangian.free", builder, rng),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init_mechanical(
        dim: usize,
        hidden_dim: usize,
        hidden_layers: usize,
        epsilon: f64,
        u_depends_on_velocity: bool,
        builder: &mut StoreBuilder,
        rng: &mut StdRng,
    ) -> Self {
        let lambda_spec = MlpSpec::new(dim, tril_len(dim)).with_hidden(hidden_dim, hidden_layers);
        let u_in = if u_depends_on_velocity { 2 * dim } else { dim };
        let u_spec = MlpSpec::new(u_in, 1).with_hidden(hidden_dim, hidden_layers);
        LagrangianModel::Mechanical {
            dim,
            lambda_net: Mlp::init(lambda_spec, "lagrangian.lambda", builder, rng),
            u_net: Mlp::init(u_spec, "lagrangian.potential", builder, rng),
            epsilon,
            u_depends_on_velocity,
        }
    }

    /// The mass matrix `M(q) = eps I + Lambda^T Lambda`, row-major `d x d`.
    /// Only defined for the mechanical variant.
    pub fn mass_matrix(&self, params: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        match self {
            LagrangianModel::FreeMlp { .. } => Err(Error::InvalidArgument(
                "mass matrix is only defined for the mechanical Lagrangian".into(),
            )),
            LagrangianModel::Mechanical {
                dim,
                lambda_net,
                epsilon,
                ..
            } => {
                let d = *dim;
                if q.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: q.len(),
                    });
                }
                let packed = lambda_net.forward(params, q);
                // expand packed lower triangle
                let mut lam = vec![0.0; d * d];
                let mut k = 0;
                for i in 0..d {
                    for j in 0..=i {
                        lam[i * d + j] = packed[k];
                        k += 1;
                    }
                }
                let mut m = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = if i == j { *epsilon } else { 0.0 };
                        for r in 0..d {
                            acc += lam[r * d + i] * lam[r * d + j];
                        }
                        m[i * d + j] = acc;
                    }
                }
                Ok(m)
            }
        }
    }
}

impl Lagrangian for LagrangianModel {
    fn dim(&self) -> usize {
        match self {
            LagrangianModel::FreeMlp { dim, .. } => *dim,
            LagrangianModel::Mechanical { dim, .. } => *dim,
        }
    }

    fn eval<T: Real>(&self, params: &[T], q: &[T], v: &[T]) -> T {
        match self {
            LagrangianModel::FreeMlp { net, .. } => {
                let mut x = q.to_vec();
                x.extend_from_slice(v);
                net.forward_scalar(params, &x)
            }
            LagrangianModel::Mechanical {
                dim,
                lambda_net,
                u_net,
                epsilon,
                u_depends_on_velocity,
            } => {
                let packed = lambda_net.forward(params, q);
                let lv = tril_mul_vec(&packed, v, *dim);
                let kinetic = norm_sq(v).scale(*epsilon) + norm_sq(&lv);
                let u = if *u_depends_on_velocity {
                    let mut x = q.to_vec();
                    x.extend_from_slice(v);
                    u_net.forward_scalar(params, &x)
                } else {
                    u_net.forward_scalar(params, q)
                };
                kinetic - u
            }
        }
    }
}

/// Learned external force.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ForceModel {
    /// Unstructured network `R^{2d} -> R^d`, trained with dropout on its
    /// hidden layers so the Lagrangian term learns first.
    Free {
        dim: usize,
        net: Mlp,
        dropout_rate: f64,
    },
    /// Rayleigh dissipation `F = -K(q) v` with `K = A(q)^T A(q)`.
    Rayleigh {
        dim: usize,
        a_net: Mlp,
    },
    /// Rayleigh dissipation with a constant factor: `F` independent of `q`.
    LinearRayleigh {
        dim: usize,
        a_off: usize,
    },
    /// `-K(q) v + F_free(q, v)`.
    Combined {
        dim: usize,
        a_net: Mlp,
        free_net: Mlp,
        dropout_rate: f64,
    },
}

impl ForceModel {
    pub fn init_free(
        dim: usize,
        hidden_dim: usize,
        hidden_layers: usize,
        dropout_rate: f64,
        builder: &mut StoreBuilder,
        rng: &mut StdRng,
    ) -> Self {
        let spec = MlpSpec::new(2 * dim, dim).with_hidden(hidden_dim, hidden_layers);
        ForceModel::Free {
            dim,
            net: Mlp::init(spec, "force.free", builder, rng),
            dropout_rate,
        }
    }

    pub fn init_rayleigh(
        dim: usize,
        hidden_dim: usize,
        hidden_layers: usize,
        builder: &mut StoreBuilder,
        rng: &mut StdRng,
    ) -> Self {
        let spec = MlpSpec::new(dim, tril_len(dim)).with_hidden(hidden_dim, hidden_layers);
        ForceModel::Rayleigh {
            dim,
            a_net: Mlp::init(spec, "force.a", builder, rng),
        }
    }

    /// Constant factor starts at zero: no dissipation until learned.
    pub fn init_linear_rayleigh(dim: usize, builder: &mut StoreBuilder) -> Self {
        let a_off = builder.push("force.a", &[tril_len(dim)], &vec![0.0; tril_len(dim)]);
        ForceModel::LinearRayleigh { dim, a_off }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init_combined(
        dim: usize,
        hidden_dim: usize,
        hidden_layers: usize,
        dropout_rate: f64,
        builder: &mut StoreBuilder,
        rng: &mut StdRng,
    ) -> Self {
        let a_spec = MlpSpec::new(dim, tril_len(dim)).with_hidden(hidden_dim, hidden_layers);
        let f_spec = MlpSpec::new(2 * dim, dim).with_hidden(hidden_dim, hidden_layers);
        ForceModel::Combined {
            dim,
            a_net: Mlp::init(a_spec, "force.a", builder, rng),
            free_net: Mlp::init(f_spec, "force.free", builder, rng),
            dropout_rate,
        }
    }

    pub fn dropout_rate(&self) -> f64 {
        match self {
            ForceModel::Free { dropout_rate, .. } | ForceModel::Combined { dropout_rate, .. } => {
                *dropout_rate
            }
            _ => 0.0,
        }
    }

    /// Hidden units that a dropout mask must cover (zero when the variant
    /// has no free network).
    pub fn mask_units(&self) -> usize {
        match self {
            ForceModel::Free { net, .. } => net.spec.hidden_unit_count(),
            ForceModel::Combined { free_net, .. } => free_net.spec.hidden_unit_count(),
            _ => 0,
        }
    }
}

fn rayleigh_force<T: Real>(packed: &[T], v: &[T], d: usize) -> Vec<T> {
    // F = -A^T (A v)
    let av = tril_mul_vec(packed, v, d);
    let atav = tril_t_mul_vec(packed, &av, d);
    atav.into_iter().map(|x| -x).collect()
}

impl Force for ForceModel {
    fn dim(&self) -> usize {
        match self {
            ForceModel::Free { dim, .. }
            | ForceModel::Rayleigh { dim, .. }
            | ForceModel::LinearRayleigh { dim, .. }
            | ForceModel::Combined { dim, .. } => *dim,
        }
    }

    fn dropout_rate(&self) -> f64 {
        ForceModel::dropout_rate(self)
    }

    fn mask_units(&self) -> usize {
        ForceModel::mask_units(self)
    }

    fn eval<T: Real>(&self, params: &[T], q: &[T], v: &[T], mask: Option<&[f64]>) -> Vec<T> {
        match self {
            ForceModel::Free { net, .. } => {
                let mut x = q.to_vec();
                x.extend_from_slice(v);
                net.forward_masked(params, &x, mask)
            }
            ForceModel::Rayleigh { dim, a_net } => {
                let packed = a_net.forward(params, q);
                rayleigh_force(&packed, v, *dim)
            }
            ForceModel::LinearRayleigh { dim, a_off } => {
                let packed = &params[*a_off..*a_off + tril_len(*dim)];
                rayleigh_force(packed, v, *dim)
            }
            ForceModel::Combined {
                dim,
                a_net,
                free_net,
                ..
            } => {
                let packed = a_net.forward(params, q);
                let mut f = rayleigh_force(&packed, v, *dim);
                let mut x = q.to_vec();
                x.extend_from_slice(v);
                let free = free_net.forward_masked(params, &x, mask);
                for (fi, fr) in f.iter_mut().zip(free) {
                    *fi = *fi + fr;
                }
                f
            }
        }
    }
}

/// Hand-coded reference models used by rollout and baseline checks.
pub mod analytic {
    use super::{Force, Lagrangian};
    use crate::diffcore::{norm_sq, Real};

    /// `L = (m/2) |v|^2 - (k/2) |q|^2` in any dimension.
    #[derive(Clone, Copy, Debug)]
    pub struct QuadraticLagrangian {
        pub dim: usize,
        pub mass: f64,
        pub stiffness: f64,
    }

    impl Lagrangian for QuadraticLagrangian {
        fn dim(&self) -> usize {
            self.dim
        }
        fn eval<T: Real>(&self, _p: &[T], q: &[T], v: &[T]) -> T {
            norm_sq(v).scale(0.5 * self.mass) - norm_sq(q).scale(0.5 * self.stiffness)
        }
    }

    /// Planar pendulum `L = v^2/2 + cos(q)` (unit mass, length, gravity).
    #[derive(Clone, Copy, Debug)]
    pub struct PendulumLagrangian;

    impl Lagrangian for PendulumLagrangian {
        fn dim(&self) -> usize {
            1
        }
        fn eval<T: Real>(&self, _p: &[T], q: &[T], v: &[T]) -> T {
            v[0] * v[0].scale(0.5) + q[0].cos()
        }
    }

    /// Linear drag `F = -gamma v`.
    #[derive(Clone, Copy, Debug)]
    pub struct LinearDrag {
        pub dim: usize,
        pub gamma: f64,
    }

    impl Force for LinearDrag {
        fn dim(&self) -> usize {
            self.dim
        }
        fn eval<T: Real>(&self, _p: &[T], _q: &[T], v: &[T], _mask: Option<&[f64]>) -> Vec<T> {
            v.iter().map(|&vi| vi.scale(-self.gamma)).collect()
        }
    }

    /// `L = (m/2) v^2 - U(q)` with a quartic potential, for hand-checked
    /// acceleration formulas.
    #[derive(Clone, Copy, Debug)]
    pub struct QuarticWell {
        pub mass: f64,
    }

    impl Lagrangian for QuarticWell {
        fn dim(&self) -> usize {
            1
        }
        fn eval<T: Real>(&self, _p: &[T], q: &[T], v: &[T]) -> T {
            let q2 = q[0] * q[0];
            v[0] * v[0].scale(0.5 * self.mass) - q2 * q2
        }
    }
}
