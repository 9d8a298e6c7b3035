//! Dual functionals of the martingale transport problem with `ψ = v*`:
//! `φ^ψ = (v ∗ γ)*`, the dual value, its coupling-relaxed form and `ρ^ψ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexfn::{smoothed_grad_inverse_from, ConvexPotential};
use crate::error::{dim_check, Error, Result};
use crate::measures::{DiscreteMeasure, MartingaleCoupling};
use crate::quadrature::QuadratureRule;
use crate::scalar::{dot, Scalar};

/// Result of a dual objective, which is legitimately `+∞` when `ν` charges
/// points outside `dom ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualValue<S> {
    Finite(S),
    Infinite,
}

impl<S: Scalar> DualValue<S> {
    pub fn is_finite(&self) -> bool {
        matches!(self, DualValue::Finite(_))
    }

    pub fn finite(&self) -> Option<S> {
        match *self {
            DualValue::Finite(v) => Some(v),
            DualValue::Infinite => None,
        }
    }

    /// `+∞` for [`DualValue::Infinite`].
    pub fn as_scalar(&self) -> S {
        self.finite().unwrap_or_else(S::infinity)
    }
}

/// Target accuracy of the inner ζ solves behind `φ^ψ`. The value is
/// stationary in ζ, so its error is quadratic in this.
pub fn inner_tolerance<S: Scalar>() -> S {
    S::of(1e-9).max(S::epsilon().sqrt() * S::of(0.01))
}

/// `φ^ψ(x) = sup_ζ ⟨ζ, x⟩ − (v ∗ γ)(ζ)`, attained at `ζ* = (∇v ∗ γ)⁻¹(x)`.
pub fn phi_psi<S: Scalar, P: ConvexPotential<S> + ?Sized>(v: &P, x: &[S], rule: &QuadratureRule<S>) -> Result<S> {
    phi_psi_at(v, x, rule, None).map(|(phi, _)| phi)
}

/// [`phi_psi`] with a warm start for the inner solve; also returns `ζ*`.
pub fn phi_psi_at<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    x: &[S],
    rule: &QuadratureRule<S>,
    start: Option<&[S]>,
) -> Result<(S, Vec<S>)> {
    let zeta = smoothed_grad_inverse_from(v, x, rule, inner_tolerance(), start)?;
    let s = v.smooth(S::one(), rule, &zeta);
    Ok((dot(&zeta, x) - s.value, zeta))
}

/// `ψ(y) = v*(y)` at each point.
pub fn psi_values<'a, S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    points: impl Iterator<Item = &'a [S]>,
) -> Result<Vec<S>> {
    points
        .map(|y| {
            dim_check(v.dim(), y.len())?;
            v.conjugate(y)
                .ok_or_else(|| Error::InvalidFunction("potential has no closed-form conjugate".into()))
        })
        .collect()
}

fn phi_sum<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    mu: &DiscreteMeasure<S>,
    rule: &QuadratureRule<S>,
) -> Result<S> {
    let terms: Vec<S> = (0..mu.len())
        .into_par_iter()
        .map(|i| phi_psi(v, mu.atom(i), rule).map(|p| mu.weight(i) * p))
        .collect::<Result<_>>()?;
    Ok(terms.into_iter().sum())
}

/// `D(ψ) = Σ_j ν_j ψ(y_j) − Σ_i μ_i φ^ψ(x_i)`.
pub fn dual_value<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
    rule: &QuadratureRule<S>,
) -> Result<DualValue<S>> {
    dim_check(v.dim(), mu.dim())?;
    dim_check(v.dim(), nu.dim())?;
    rule.check_dim(v.dim())?;
    let psi = psi_values(v, nu.atoms())?;
    if psi.iter().any(|p| !p.is_finite()) {
        return Ok(DualValue::Infinite);
    }
    let first: S = psi.iter().zip(nu.weights()).map(|(&p, &w)| p * w).sum();
    Ok(DualValue::Finite(first - phi_sum(v, mu, rule)?))
}

/// `𝓔(ψ) = Σ_i μ_i (Σ_j π_ij/μ_i ψ(y_j) − φ^ψ(x_i))` for a martingale
/// coupling `π`; the value does not depend on which coupling is used.
pub fn relaxed_dual<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    pi: &MartingaleCoupling<S>,
    rule: &QuadratureRule<S>,
) -> Result<DualValue<S>> {
    let (mu, nu) = (pi.source(), pi.target());
    dim_check(v.dim(), mu.dim())?;
    rule.check_dim(v.dim())?;
    let psi = psi_values(v, nu.atoms())?;
    let mut first = S::zero();
    for i in 0..mu.len() {
        for (j, &p) in psi.iter().enumerate() {
            let m = pi.entry(i, j);
            if m > S::zero() {
                if !p.is_finite() {
                    return Ok(DualValue::Infinite);
                }
                first += m * p;
            }
        }
    }
    Ok(DualValue::Finite(first - phi_sum(v, mu, rule)?))
}

/// `ρ^ψ = ∫ ψ* dγ = ∫ v dγ`.
pub fn rho_psi<S: Scalar, P: ConvexPotential<S> + ?Sized>(v: &P, rule: &QuadratureRule<S>) -> Result<S> {
    rule.check_dim(v.dim())?;
    Ok(v.smooth(S::one(), rule, &vec![S::zero(); v.dim()]).value)
}

/// Primal/dual values of a solution with their error bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    /// `P̂ = Σ_i μ_i E⟨∇v(ζ_i + Z), Z⟩`
    pub primal_value: f64,
    /// `D̂` with the target marginal; `None` when it is `+∞`
    pub dual_value: Option<f64>,
    /// `𝓔(ψ)` along the solution's own kernel coupling
    pub relaxed_dual: f64,
    /// `D̂ − P̂`
    pub gap: f64,
    /// `|D̂ − P̂| / max(P̂, 1e-6)`
    pub relative_gap: f64,
    /// quadrature error bars on the two values
    pub primal_error: f64,
    pub dual_error: f64,
    /// bound on how far `D̂` can move when the solver's achieved terminal
    /// marginal is replaced by the target: `½‖ν − ν̂‖₁ (max ψ − min ψ)`
    #[serde(default)]
    pub marginal_error: f64,
    /// affine normalization of ψ
    pub psi_gauge: String,
    pub quadrature: String,
}

impl DualCertificate {
    /// Numerical tolerance a negative gap may not exceed.
    pub fn tolerance(&self) -> f64 {
        3.0 * (self.primal_error + self.dual_error) + self.marginal_error + 1e-9 * (1.0 + self.primal_value.abs())
    }

    pub fn consistent(&self) -> bool {
        self.gap >= -self.tolerance()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexfn::{conjugate_at, AnalyticConvex, MaxAffine};
    use crate::measures::find_mt_coupling;
    use crate::quadrature::gauss_hermite_1d;
    use crate::transport::mcov_1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

    fn abs1(scale: f64) -> MaxAffine<f64> {
        MaxAffine::from_1d(&[-scale, scale], &[0.0, 0.0]).unwrap()
    }

    fn gh1(n: usize) -> QuadratureRule<f64> {
        QuadratureRule::gauss_hermite(1, n).unwrap()
    }

    fn binary() -> (DiscreteMeasure<f64>, DiscreteMeasure<f64>) {
        (
            DiscreteMeasure::dirac(vec![0.0]),
            DiscreteMeasure::from_1d(&[-1.0, 1.0], &[0.5, 0.5]).unwrap(),
        )
    }

    fn gaussian_atoms(n: usize) -> DiscreteMeasure<f64> {
        let (x, w) = gauss_hermite_1d(n);
        DiscreteMeasure::normalized(1, x.into_iter().map(|v| vec![v]).collect(), w).unwrap().0
    }

    fn random_max_affine(rng: &mut ChaCha8Rng) -> MaxAffine<f64> {
        loop {
            let n = rng.random_range(2..6);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            if let Ok(v) = MaxAffine::from_1d(&a, &c) {
                return v;
            }
        }
    }

    #[test]
    fn phi_examples() {
        let q = AnalyticConvex::<f64>::quadratic(1);
        let r = gh1(16);
        assert!((phi_psi(&q, &[0.0], &r).unwrap() + 0.5).abs() < 1e-12);
        assert!((phi_psi(&q, &[2.0], &r).unwrap() - 1.5).abs() < 1e-12);
        for &x in &[-3.0, -0.7, 0.4, 5.0] {
            assert!((phi_psi(&q, &[x], &r).unwrap() - (x * x / 2.0 - 0.5)).abs() < 1e-8);
        }
        assert!((phi_psi(&abs1(1.0), &[0.0], &r).unwrap() + SQRT_2_OVER_PI).abs() < 1e-12);
        assert!(matches!(phi_psi(&abs1(1.0), &[1.0], &r), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn dual_examples() {
        let (mu, nu) = binary();
        let r = gh1(64);
        let d = dual_value(&abs1(1.0), &mu, &nu, &r).unwrap().as_scalar();
        assert!((d - SQRT_2_OVER_PI).abs() < 1e-12);
        let q = AnalyticConvex::<f64>::quadratic(1);
        let d = dual_value(&q, &mu, &gaussian_atoms(31), &r).unwrap().as_scalar();
        assert!((d - 1.0).abs() < 1e-6);
        // scale scan: v = s|x| is dual-feasible only for s ≥ 1, value s·√(2/π)
        assert_eq!(dual_value(&abs1(0.5), &mu, &nu, &r).unwrap(), DualValue::Infinite);
        let best = [0.5, 0.9, 1.0, 1.3, 2.0]
            .iter()
            .map(|&s| (s, dual_value(&abs1(s), &mu, &nu, &r).unwrap().as_scalar()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(best.0, 1.0);
        assert!(dual_value(&abs1(2.0), &mu, &nu, &r).unwrap().as_scalar() > SQRT_2_OVER_PI);
    }

    #[test]
    fn relaxed_examples() {
        let r = gh1(32);
        let zero = DiscreteMeasure::dirac(vec![0.0]);
        let flat = MaxAffine::from_1d(&[0.0], &[0.0]).unwrap();
        let pi = MartingaleCoupling::new(zero.clone(), zero.clone(), vec![1.0]).unwrap();
        let val = relaxed_dual(&flat, &pi, &r);
        // a single slope has no interior; the ζ solve refuses
        assert!(matches!(val, Err(Error::Rank { .. }) | Err(Error::OutOfRange(_))));
        let (mu, nu) = binary();
        let pi = MartingaleCoupling::new(mu.clone(), nu.clone(), vec![0.5, 0.5]).unwrap();
        let e = relaxed_dual(&abs1(1.0), &pi, &r).unwrap().as_scalar();
        assert!((e - SQRT_2_OVER_PI).abs() < 1e-12);
        let g = gaussian_atoms(31);
        let pi = MartingaleCoupling::new(zero, g.clone(), g.weights().to_vec()).unwrap();
        let e = relaxed_dual(&AnalyticConvex::quadratic(1), &pi, &r).unwrap().as_scalar();
        assert!((e - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rho_examples() {
        let r = gh1(16);
        assert!((rho_psi(&AnalyticConvex::<f64>::quadratic(1), &r).unwrap() - 0.5).abs() < 1e-12);
        assert!((rho_psi(&abs1(1.0), &r).unwrap() - SQRT_2_OVER_PI).abs() < 1e-12);
        let one = MaxAffine::<f64>::new(2, vec![vec![0.4, -1.0]], vec![0.3]).unwrap();
        let r2 = QuadratureRule::gauss_hermite(2, 5).unwrap();
        assert!((rho_psi(&one, &r2).unwrap() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn affine_change_of_psi_shifts_phi() {
        // ψ + ⟨b,·⟩ + k has conjugate v(· − b) − k
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let r = gh1(8);
        for _ in 0..30 {
            let v = random_max_affine(&mut rng);
            let (b, k) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let mut w = v.clone();
            w.translate(&[b]);
            let c: Vec<f64> = w.intercepts().iter().map(|c| c + k).collect();
            let w = w.with_intercepts(c).unwrap();
            let (lo, hi) = v.slopes().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| (l.min(a[0]), h.max(a[0])));
            let x = lo + rng.random_range(0.1..0.9) * (hi - lo);
            let (p, q) = (phi_psi(&v, &[x], &r).unwrap(), phi_psi(&w, &[x], &r).unwrap());
            assert!((q - (p + b * x + k)).abs() < 1e-8, "{q} vs {}", p + b * x + k);
        }
    }

    #[test]
    fn phi_below_psi() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let r = gh1(8);
        for _ in 0..50 {
            let v = random_max_affine(&mut rng);
            let (lo, hi) = v.slopes().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| (l.min(a[0]), h.max(a[0])));
            let x = lo + rng.random_range(0.02..0.98) * (hi - lo);
            assert!(phi_psi(&v, &[x], &r).unwrap() <= conjugate_at(&v, &[x]) + 1e-12);
        }
    }

    #[test]
    fn weak_duality_against_any_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let r = gh1(8);
        let g = gaussian_atoms(64);
        let mut checked = 0;
        while checked < 20 {
            let v = random_max_affine(&mut rng);
            let slopes: Vec<f64> = v.slopes().map(|a| a[0]).collect();
            // ν on the slopes, μ the conditional means over a two-group split
            let w: Vec<f64> = slopes.iter().map(|_| rng.random_range(0.2..1.0)).collect();
            let nu = DiscreteMeasure::normalized(1, slopes.iter().map(|&a| vec![a]).collect(), w).unwrap().0;
            let mut groups = [(0.0, 0.0); 2];
            for (k, (y, p)) in nu.iter().enumerate() {
                let g = &mut groups[k % 2];
                g.0 += p * y[0];
                g.1 += p;
            }
            let xs: Vec<Vec<f64>> = groups.iter().map(|g| vec![g.0 / g.1]).collect();
            let (lo, hi) = slopes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
            if xs.iter().any(|x| x[0] <= lo || x[0] >= hi) {
                continue;
            }
            let mu = DiscreteMeasure::normalized(1, xs, groups.iter().map(|g| g.1).collect()).unwrap().0;
            let search = find_mt_coupling(&mu, &nu, None).unwrap();
            let pi = search.coupling;
            let e = relaxed_dual(&v, &pi, &r).unwrap().as_scalar();
            let mut primal = 0.0;
            for i in 0..mu.len() {
                primal += mu.weight(i) * mcov_1d(&pi.kernel(i).unwrap(), &g).unwrap();
            }
            assert!(e >= primal - 1e-6, "{e} < {primal}");
            checked += 1;
        }
    }

    #[test]
    fn certificate_tolerance() {
        let c = DualCertificate {
            primal_value: 0.8,
            dual_value: Some(0.79),
            relaxed_dual: 0.8,
            gap: -0.01,
            relative_gap: 0.0125,
            primal_error: 0.01,
            dual_error: 0.0,
            marginal_error: 0.0,
            psi_gauge: "nu-weighted-intercepts-zero".into(),
            quadrature: "gh:64".into(),
        };
        assert!(c.consistent());
        let tight = DualCertificate { primal_error: 0.0, ..c };
        assert!(!tight.consistent());
    }
}
