use std::ops::{Add, Div, Mul, Neg, Sub};

/// Closed scalar operation set shared by plain `f64`, forward-mode duals and
/// reverse-mode tape variables. Everything the models evaluate is written
/// generically over this trait, so the same code path yields values, input
/// derivatives of any nesting depth, and parameter gradients.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Lift a constant. Constants carry no derivative information.
    fn constant(c: f64) -> Self;

    /// The underlying primal value, used for pivoting and branching only.
    fn primal(&self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn erf(self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn one() -> Self {
        Self::constant(1.0)
    }

    /// Absolute value, differentiable away from zero.
    fn abs(self) -> Self {
        if self.primal() < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Multiply by an `f64` constant.
    fn scale(self, c: f64) -> Self {
        self * Self::constant(c)
    }

    /// Fused dot product. Tape scalars override this to record one n-ary
    /// node instead of a chain of binary operations; dual types reduce it
    /// to fused base-type dots component by component.
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = Self::zero();
        for i in 0..a.len() {
            acc = acc + a[i] * b[i];
        }
        acc
    }
}

impl Real for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }

    #[inline]
    fn primal(&self) -> f64 {
        *self
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }

    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }

    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }

    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }

    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

/// Dot product over any `Real`, through the fused path.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    T::dot(a, b)
}

/// Squared Euclidean norm.
pub fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}
