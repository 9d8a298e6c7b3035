//! Standard normal density, distribution and quantile functions.
//!
//! Evaluated in `f64` (`libm` for `erfc`, `statrs` for the starting guess of
//! the inverse) and cast to the caller's scalar.

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::scalar::Scalar;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf<S: Scalar>(x: S) -> S {
    let x = x.to_f64_lossy();
    S::of(FRAC_1_SQRT_2PI * (-0.5 * x * x).exp())
}

#[inline]
pub fn cdf<S: Scalar>(x: S) -> S {
    S::of(cdf_f64(x.to_f64_lossy()))
}

/// Upper tail `1 − Φ(x)`, accurate for large positive `x`.
#[inline]
pub fn sf<S: Scalar>(x: S) -> S {
    S::of(cdf_f64(-x.to_f64_lossy()))
}

#[inline]
pub fn quantile<S: Scalar>(p: S) -> S {
    S::of(quantile_f64(p.to_f64_lossy()))
}

/// `Φ(u) − Φ(l)` for `l ≤ u`, computed on whichever tail keeps precision.
#[inline]
pub fn interval_mass<S: Scalar>(l: S, u: S) -> S {
    let (l, u) = (l.to_f64_lossy(), u.to_f64_lossy());
    let m = if l >= 0.0 {
        cdf_f64(-l) - cdf_f64(-u)
    } else if u <= 0.0 {
        cdf_f64(u) - cdf_f64(l)
    } else {
        1.0 - cdf_f64(l) - cdf_f64(-u)
    };
    S::of(m.max(0.0))
}

#[inline]
pub(crate) fn cdf_f64(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

#[inline]
pub(crate) fn pdf_f64(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
    }
}

pub(crate) fn quantile_f64(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // Halley polish against the accurate cdf
    for _ in 0..2 {
        let e = if x > 0.0 { (1.0 - p) - cdf_f64(-x) } else { cdf_f64(x) - p };
        let d = pdf_f64(x);
        if d <= 0.0 {
            break;
        }
        let u = e / d;
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}
