//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the solvers are generic over: `f32` or `f64`.
///
/// Special functions (normal CDF, quantile) are evaluated in `f64` and cast
/// back, so `f32` instantiations are limited to single precision throughout.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion from a count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Inner product of two equally sized slices.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// Solves the dense system `m · x = rhs` (row-major `n × n`) by Gaussian
/// elimination with partial pivoting. Returns `None` when a pivot vanishes.
pub fn solve_dense<S: Scalar>(mut m: Vec<S>, mut rhs: Vec<S>) -> Option<Vec<S>> {
    let n = rhs.len();
    debug_assert_eq!(m.len(), n * n);
    let scale = m.iter().fold(S::zero(), |acc, v| acc.max(v.abs()));
    let tiny = scale * S::epsilon() * S::of_usize(n.max(1) * 8);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| {
                m[a * n + col]
                    .abs()
                    .partial_cmp(&m[b * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if !(m[piv * n + col].abs() > tiny) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            rhs.swap(piv, col);
        }
        let p = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / p;
            if f == S::zero() {
                continue;
            }
            for k in col..n {
                let v = m[col * n + k];
                m[r * n + k] -= f * v;
            }
            let v = rhs[col];
            rhs[r] -= f * v;
        }
    }
    let mut x = vec![S::zero(); n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for k in (r + 1)..n {
            acc -= m[r * n + k] * x[k];
        }
        x[r] = acc / m[r * n + r];
    }
    Some(x)
}

/// Orthonormal basis (Gram–Schmidt) of the span of `vectors`, dropping
/// directions whose residual norm falls below `tol` relative to the largest
/// input norm.
pub fn orthonormal_basis<S: Scalar>(vectors: &[Vec<S>], tol: S) -> Vec<Vec<S>> {
    let scale = vectors.iter().map(|v| norm(v)).fold(S::zero(), S::max);
    let mut basis: Vec<Vec<S>> = Vec::new();
    if scale == S::zero() {
        return basis;
    }
    for v in vectors {
        let mut r = v.clone();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&r, b);
                for (ri, &bi) in r.iter_mut().zip(b) {
                    *ri -= p * bi;
                }
            }
        }
        let n = norm(&r);
        if n > tol * scale {
            basis.push(r.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let m = vec![2.0, 1.0, 1.0, 3.0];
        let x = solve_dense(m, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12);
        assert!((x[1] - 1.4).abs() < 1e-12);
        assert!(solve_dense(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0]).is_none());
    }

    #[test]
    fn basis_detects_rank() {
        let vs = vec![vec![1.0f32, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]];
        assert_eq!(orthonormal_basis(&vs, 1e-5).len(), 2);
    }
}
