use super::real::Real;
use crate::{Error, Result};

/// Row-major dense square matrix access: `a[i * n + j]`.
///
/// LU factorization with partial pivoting, generic over the scalar type.
/// Pivot selection looks only at primal values, so the factorization is
/// differentiable wherever the pivot order is locally stable.
fn lu_factor<T: Real>(a: &mut [T], n: usize, perm_sign: &mut f64) -> Option<()> {
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].primal().abs();
        for row in col + 1..n {
            let cand = a[row * n + col].primal().abs();
            if cand > best {
                best = cand;
                pivot = row;
            }
        }
        if best == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            *perm_sign = -*perm_sign;
        }
        let inv = T::one() / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            a[row * n + col] = factor;
            for j in col + 1..n {
                a[row * n + j] = a[row * n + j] - factor * a[col * n + j];
            }
        }
    }
    Some(())
}

/// Determinant of a small dense matrix via LU. Returns an exact zero value
/// (of type `T`) when a pivot vanishes.
pub fn det<T: Real>(matrix: &[T], n: usize) -> T {
    debug_assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut sign = 1.0;
    if lu_factor(&mut a, n, &mut sign).is_none() {
        return T::zero();
    }
    let mut d = T::constant(sign);
    for i in 0..n {
        d = d * a[i * n + i];
    }
    d
}

/// Solve `A x = b` in place (`b` becomes `x`). Errors on a singular pivot.
pub fn solve<T: Real>(matrix: &[T], b: &mut [T], n: usize) -> Result<()> {
    debug_assert_eq!(matrix.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut a = matrix.to_vec();
    let mut sign = 1.0;
    let mut perm: Vec<usize> = (0..n).collect();
    // Re-run factorization tracking the permutation for the rhs.
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].primal().abs();
        for row in col + 1..n {
            let cand = a[row * n + col].primal().abs();
            if cand > best {
                best = cand;
                pivot = row;
            }
        }
        if best == 0.0 {
            return Err(Error::SingularMatrix);
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            perm.swap(col, pivot);
            sign = -sign;
        }
        let inv = T::one() / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            a[row * n + col] = factor;
            for j in col + 1..n {
                a[row * n + j] = a[row * n + j] - factor * a[col * n + j];
            }
        }
    }
    let mut x: Vec<T> = perm.iter().map(|&i| b[i]).collect();
    // forward substitution (unit lower)
    for i in 0..n {
        for j in 0..i {
            x[i] = x[i] - a[i * n + j] * x[j];
        }
    }
    // back substitution
    for i in (0..n).rev() {
        for j in i + 1..n {
            x[i] = x[i] - a[i * n + j] * x[j];
        }
        x[i] = x[i] / a[i * n + i];
    }
    b.copy_from_slice(&x);
    Ok(())
}
