//! Maximal covariance between measures, Gaussian cell masses of max-affine
//! potentials and the covariance of Bass kernels with the Gaussian.

use crate::convexfn::{ConvexPotential, MaxAffine};
use crate::error::{dim_check, Error, Result};
use crate::lp::{phase_one, PhaseOne};
use crate::measures::{comonotone_walk, DiscreteMeasure};
use crate::quadrature::QuadratureRule;
use crate::scalar::{dot, Scalar};

/// `MCov(p, q) = sup_q E⟨X, Y⟩` for one-dimensional measures, attained by the
/// comonotone coupling.
pub fn mcov_1d<S: Scalar>(p: &DiscreteMeasure<S>, q: &DiscreteMeasure<S>) -> Result<S> {
    dim_check(1, p.dim())?;
    dim_check(1, q.dim())?;
    let mut total = S::zero();
    comonotone_walk(&p.sorted_1d(), &q.sorted_1d(), |x, y, m| total += m * x * y);
    Ok(total)
}

/// `MCov(p, q)` in any dimension as a transportation LP.
pub fn mcov_discrete<S: Scalar>(p: &DiscreteMeasure<S>, q: &DiscreteMeasure<S>) -> Result<S> {
    dim_check(p.dim(), q.dim())?;
    let (n, m) = (p.len(), q.len());
    if n == 1 || m == 1 {
        // the product coupling is the only one
        return Ok(dot(&p.barycenter(), &q.barycenter()));
    }
    let nv = n * m;
    let mut rows = Vec::with_capacity(n + m);
    let mut rhs = Vec::with_capacity(n + m);
    for i in 0..n {
        let mut r = vec![S::zero(); nv];
        r[i * m..(i + 1) * m].iter_mut().for_each(|v| *v = S::one());
        rows.push(r);
        rhs.push(p.weight(i));
    }
    for j in 0..m {
        let mut r = vec![S::zero(); nv];
        for i in 0..n {
            r[i * m + j] = S::one();
        }
        rows.push(r);
        rhs.push(q.weight(j));
    }
    let c: Vec<S> = (0..nv).map(|k| dot(p.atom(k / m), q.atom(k % m))).collect();
    let tol = S::of(1e-9).max(S::epsilon().sqrt());
    match phase_one(&rows, &rhs, nv, tol)? {
        PhaseOne::Feasible(t) => t.maximize(&c).map(|(v, _)| v),
        PhaseOne::Infeasible { .. } => Err(Error::Lp("transportation problem infeasible".into())),
    }
}

/// Gaussian probabilities of the cells where each affine piece is active.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMassVector<S> {
    pub masses: Vec<S>,
    /// Monte Carlo standard errors, when the masses were sampled.
    pub std_errors: Option<Vec<S>>,
}

impl<S: Scalar> CellMassVector<S> {
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total(&self) -> S {
        self.masses.iter().copied().sum()
    }

    /// The law of `∇v(ζ + Z)`: masses placed on the slopes of `v`.
    pub fn to_measure(&self, v: &MaxAffine<S>) -> Result<DiscreteMeasure<S>> {
        let atoms = v.slopes().map(|a| a.to_vec()).collect();
        DiscreteMeasure::normalized(v.dim(), atoms, self.masses.clone()).map(|(m, _)| m)
    }
}

/// Cell masses `m_j = γ_ζ(L_j)`.
///
/// Exact along the potential's integration axis, with the rule's tail on the
/// complement; exact in dimension one.
pub fn gaussian_cell_masses<S: Scalar>(
    v: &MaxAffine<S>,
    zeta: &[S],
    rule: &QuadratureRule<S>,
) -> Result<CellMassVector<S>> {
    rule.check_dim(v.dim())?;
    dim_check(v.dim(), zeta.len())?;
    Ok(CellMassVector {
        masses: v.gaussian_integrals(S::one(), rule, zeta).masses,
        std_errors: None,
    })
}

/// Cell masses by argmax counting over the rule's nodes, with binomial
/// standard errors for Monte Carlo rules.
pub fn gaussian_cell_masses_sampled<S: Scalar>(
    v: &MaxAffine<S>,
    zeta: &[S],
    rule: &QuadratureRule<S>,
) -> Result<CellMassVector<S>> {
    rule.check_dim(v.dim())?;
    dim_check(v.dim(), zeta.len())?;
    let mut masses = vec![S::zero(); v.n_pieces()];
    let mut p = vec![S::zero(); v.dim()];
    for (z, w) in rule.iter() {
        for k in 0..p.len() {
            p[k] = zeta[k] + z[k];
        }
        masses[v.active_piece(&p)] += w;
    }
    let std_errors = rule.is_monte_carlo().then(|| {
        let n = S::of_usize(rule.len());
        masses.iter().map(|&m| (m * (S::one() - m)).max(S::zero()).sqrt() / n.sqrt()).collect()
    });
    Ok(CellMassVector { masses, std_errors })
}

/// `E⟨∇v(ζ + Z), Z⟩ = MCov(∇v(ζ + ·)(γ), γ)`; the gradient coupling is
/// optimal since `∇v` is monotone.
pub fn mcov_bass_kernel<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    zeta: &[S],
    rule: &QuadratureRule<S>,
) -> Result<S> {
    rule.check_dim(v.dim())?;
    dim_check(v.dim(), zeta.len())?;
    Ok(v.gaussian_cross_moment(zeta, rule))
}
