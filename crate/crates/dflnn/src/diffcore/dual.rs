use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;

/// Forward-mode dual number over any base scalar.
///
/// `Dual<f64>` gives first input derivatives, `Dual<Dual<f64>>` second
/// derivatives, and `Dual<Var>` / `Dual<Dual<Var>>` thread input derivatives
/// through the reverse-mode tape so that scalars built from them remain
/// differentiable with respect to the parameters.
#[derive(Clone, Copy, Debug)]
pub struct Dual<T> {
    pub re: T,
    pub dt: T,
}

impl<T: Real> Dual<T> {
    #[inline]
    pub fn new(re: T, dt: T) -> Self {
        Dual { re, dt }
    }

    /// Lift a base value with zero tangent.
    #[inline]
    pub fn lift(re: T) -> Self {
        Dual {
            re,
            dt: T::zero(),
        }
    }

    /// Lift a base value carrying a unit tangent (a seeded variable).
    #[inline]
    pub fn seeded(re: T) -> Self {
        Dual {
            re,
            dt: T::one(),
        }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.re + rhs.re, self.dt + rhs.dt)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.re - rhs.re, self.dt - rhs.dt)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Dual::new(
            self.re * rhs.re,
            self.re * rhs.dt + self.dt * rhs.re,
        )
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let re = self.re / rhs.re;
        Dual::new(re, (self.dt - re * rhs.dt) / rhs.re)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.dt)
    }
}

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_6;

impl<T: Real> Real for Dual<T> {
    #[inline]
    fn constant(c: f64) -> Self {
        Dual::lift(T::constant(c))
    }

    #[inline]
    fn primal(&self) -> f64 {
        self.re.primal()
    }

    /// Componentwise fusion: the value and the tangent each reduce to fused
    /// base-type dots, assembled block by block in stack buffers.
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        const BLK: usize = 32;
        let mut re = T::zero();
        let mut dt = T::zero();
        let mut u = [T::zero(); BLK];
        let mut w = [T::zero(); BLK];
        let mut p = [T::zero(); 2 * BLK];
        let mut q = [T::zero(); 2 * BLK];
        let mut i = 0;
        while i < a.len() {
            let m = BLK.min(a.len() - i);
            for j in 0..m {
                u[j] = a[i + j].re;
                w[j] = b[i + j].re;
                p[j] = a[i + j].re;
                q[j] = b[i + j].dt;
                p[m + j] = a[i + j].dt;
                q[m + j] = b[i + j].re;
            }
            re = re + T::dot(&u[..m], &w[..m]);
            dt = dt + T::dot(&p[..2 * m], &q[..2 * m]);
            i += m;
        }
        Dual::new(re, dt)
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.dt)
    }

    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.dt / self.re)
    }

    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.dt / (s + s))
    }

    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.re.cos() * self.dt)
    }

    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.re.sin() * self.dt)
    }

    #[inline]
    fn erf(self) -> Self {
        // d/dx erf(x) = 2/sqrt(pi) * exp(-x^2)
        let g = (-(self.re * self.re)).exp().scale(FRAC_2_SQRT_PI);
        Dual::new(self.re.erf(), g * self.dt)
    }
}

/// Forward-mode dual number with `K` simultaneous tangent directions.
/// Shares one value evaluation across all seeds, which matters when the
/// base type is a tape variable: the value chain is recorded once instead
/// of once per input coordinate. Unused lanes hold constant zeros and fold
/// away on the tape.
#[derive(Clone, Copy, Debug)]
pub struct DualN<T, const K: usize> {
    pub re: T,
    pub dt: [T; K],
}

impl<T: Real, const K: usize> DualN<T, K> {
    #[inline]
    pub fn lift(re: T) -> Self {
        DualN {
            re,
            dt: [T::zero(); K],
        }
    }

    /// Lift with a unit seed in one lane.
    #[inline]
    pub fn seeded(re: T, lane: usize) -> Self {
        let mut dt = [T::zero(); K];
        dt[lane] = T::one();
        DualN { re, dt }
    }
}

impl<T: Real, const K: usize> Add for DualN<T, K> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut dt = self.dt;
        for (a, b) in dt.iter_mut().zip(rhs.dt) {
            *a = *a + b;
        }
        DualN {
            re: self.re + rhs.re,
            dt,
        }
    }
}

impl<T: Real, const K: usize> Sub for DualN<T, K> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut dt = self.dt;
        for (a, b) in dt.iter_mut().zip(rhs.dt) {
            *a = *a - b;
        }
        DualN {
            re: self.re - rhs.re,
            dt,
        }
    }
}

impl<T: Real, const K: usize> Mul for DualN<T, K> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut dt = [T::zero(); K];
        for k in 0..K {
            dt[k] = self.re * rhs.dt[k] + self.dt[k] * rhs.re;
        }
        DualN {
            re: self.re * rhs.re,
            dt,
        }
    }
}

impl<T: Real, const K: usize> Div for DualN<T, K> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let re = self.re / rhs.re;
        let mut dt = [T::zero(); K];
        for k in 0..K {
            dt[k] = (self.dt[k] - re * rhs.dt[k]) / rhs.re;
        }
        DualN { re, dt }
    }
}

impl<T: Real, const K: usize> Neg for DualN<T, K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut dt = self.dt;
        for a in dt.iter_mut() {
            *a = -*a;
        }
        DualN { re: -self.re, dt }
    }
}

impl<T: Real, const K: usize> Real for DualN<T, K> {
    #[inline]
    fn constant(c: f64) -> Self {
        DualN::lift(T::constant(c))
    }

    #[inline]
    fn primal(&self) -> f64 {
        self.re.primal()
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        let mut dt = [T::zero(); K];
        for k in 0..K {
            dt[k] = e * self.dt[k];
        }
        DualN { re: e, dt }
    }

    #[inline]
    fn ln(self) -> Self {
        let mut dt = [T::zero(); K];
        for k in 0..K {
            dt[k] = self.dt[k] / self.re;
        }
        DualN {
            re: self.re.ln(),
            dt,
        }
    }

    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        let two_s = s + s;
        let mut dt = [T::zero(); K];
        for k in 0..K {
            dt[k] = self.dt[k] / two_s;
        }
        DualN { re: s, dt }
    }

    #[inline]
    fn sin(self) -> Self {
        let c = self.re.cos();
        let mut dt = [T::zero(); K];
        for k in 0..K {
            dt[k] = c * self.dt[k];
        }
        DualN {
            re: self.re.sin(),
            dt,
        }
    }

    #[inline]
    fn cos(self) -> Self {
        let s = -self.re.sin();
        let mut dt = [T::zero(); K];
        for k in 0..K {
            dt[k] = s * self.dt[k];
        }
        DualN {
            re: self.re.cos(),
            dt,
        }
    }

    #[inline]
    fn erf(self) -> Self {
        let g = (-(self.re * self.re)).exp().scale(FRAC_2_SQRT_PI);
        let mut dt = [T::zero(); K];
        for k in 0..K {
            dt[k] = g * self.dt[k];
        }
        DualN {
            re: self.re.erf(),
            dt,
        }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        const BLK: usize = 32;
        let mut re = T::zero();
        let mut dt = [T::zero(); K];
        let mut u = [T::zero(); BLK];
        let mut w = [T::zero(); BLK];
        let mut p = [T::zero(); 2 * BLK];
        let mut q = [T::zero(); 2 * BLK];
        let mut i = 0;
        while i < a.len() {
            let m = BLK.min(a.len() - i);
            for j in 0..m {
                u[j] = a[i + j].re;
                w[j] = b[i + j].re;
            }
            re = re + T::dot(&u[..m], &w[..m]);
            for (k, slot) in dt.iter_mut().enumerate() {
                for j in 0..m {
                    p[j] = a[i + j].re;
                    q[j] = b[i + j].dt[k];
                    p[m + j] = a[i + j].dt[k];
                    q[m + j] = b[i + j].re;
                }
                *slot = *slot + T::dot(&p[..2 * m], &q[..2 * m]);
            }
            i += m;
        }
        DualN { re, dt }
    }
}
