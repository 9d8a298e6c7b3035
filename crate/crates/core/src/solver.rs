//! Fixed-point solvers for the Bass martingale between discrete (or, in one
//! dimension, quantile-specified) marginals in convex order.
//!
//! The unknown is a max-affine potential `v` with slopes on the target atoms
//! together with the initial law `α = ζ(μ)`, linked by `(∇v ∗ γ)(α) = μ` and
//! `∇v(α ∗ γ) = ν`.

use std::fmt;
use std::sync::Arc;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexfn::{smoothed_grad_inverse_from, ConvexPotential, MaxAffine};
use crate::dualeval::{phi_psi_at, psi_values, DualCertificate};
use crate::error::{dim_check, Error, Result};
use crate::measures::{check_convex_order, check_irreducible, DiscreteMeasure};
use crate::quadrature::{QuadratureRule, QuadratureSpec};
use crate::scalar::{dot, orthonormal_basis, Scalar};
use crate::special;

/// Gauge label recorded with every solution.
pub const GAUGE: &str = "nu-weighted-intercepts-zero";
/// Bound on a single log-mass intercept correction.
const LOG_STEP_CLAMP: f64 = 5.0;

/// Solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Integration rule; `None` picks [`QuadratureSpec::default_for`].
    pub quadrature: Option<QuadratureSpec>,
    /// Outer iteration cap; `None` means 500 in one dimension, 2000 otherwise.
    pub max_iter: Option<usize>,
    pub tol_marginal: f64,
    pub tol_barycenter: f64,
    /// Damping in `(0, 1]`; `None` means 1.0 in one dimension, 0.5 otherwise.
    pub damping: Option<f64>,
    /// Atoms used to discretize quantile-specified marginals.
    pub grid_size: usize,
    pub seed: u64,
    /// Starting intercepts for the multi-dimensional iteration (in the order
    /// of the target atoms); zero when absent.
    pub initial_intercepts: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            quadrature: None,
            max_iter: None,
            tol_marginal: 1e-4,
            tol_barycenter: 1e-6,
            damping: None,
            grid_size: 513,
            seed: 0,
            initial_intercepts: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Options(m));
        if !(self.tol_marginal > 0.0) || !(self.tol_barycenter > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.grid_size < 3 || self.grid_size.is_multiple_of(2) {
            return bad(format!("grid size must be odd and at least 3, got {}", self.grid_size));
        }
        if let Some(eta) = self.damping {
            if !(eta > 0.0 && eta <= 1.0) {
                return bad(format!("damping must lie in (0, 1], got {eta}"));
            }
        }
        if self.max_iter == Some(0) {
            return bad("max_iter must be positive".into());
        }
        Ok(())
    }

    fn max_iter_for(&self, dim: usize) -> usize {
        self.max_iter.unwrap_or(if dim == 1 { 500 } else { 2000 })
    }

    fn damping_for(&self, dim: usize) -> f64 {
        self.damping.unwrap_or(if dim == 1 { 1.0 } else { 0.5 })
    }

    fn quadrature_for(&self, dim: usize, pieces: usize) -> QuadratureSpec {
        self.quadrature
            .unwrap_or_else(|| QuadratureSpec::default_for(dim, pieces, self.seed))
    }
}

/// A one-dimensional law given by its quantile function `u ↦ F⁻¹(u)`.
#[derive(Clone)]
pub struct QuantileFunction<S> {
    name: String,
    f: Arc<dyn Fn(S) -> S + Send + Sync>,
}

impl<S> fmt::Debug for QuantileFunction<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("QuantileFunction").field(&self.name).finish()
    }
}

impl<S: Scalar> QuantileFunction<S> {
    pub fn new(name: impl Into<String>, f: impl Fn(S) -> S + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// Standard normal law.
    pub fn gaussian() -> Self {
        Self::new("gaussian", special::quantile)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, u: S) -> S {
        (self.f)(u)
    }

    /// `n` equally weighted atoms at the midpoint levels `(k − ½)/n`.
    pub fn discretize(&self, n: usize) -> Result<DiscreteMeasure<S>> {
        let nf = S::of_usize(n);
        let atoms: Vec<Vec<S>> = (0..n)
            .map(|k| vec![self.eval((S::of_usize(k) + S::of(0.5)) / nf)])
            .collect();
        if atoms.iter().any(|a| !a[0].is_finite()) {
            return Err(Error::InvalidMeasure(format!("quantile function {} is not finite", self.name)));
        }
        DiscreteMeasure::uniform(1, atoms)
    }
}

/// A one-dimensional marginal: atoms or a quantile function.
#[derive(Debug, Clone)]
pub enum Marginal1d<S> {
    Discrete(DiscreteMeasure<S>),
    Quantile(QuantileFunction<S>),
}

impl<S: Scalar> Marginal1d<S> {
    fn resolve(&self, grid: usize) -> Result<DiscreteMeasure<S>> {
        match self {
            Marginal1d::Discrete(m) => {
                dim_check(1, m.dim())?;
                Ok(m.clone())
            }
            Marginal1d::Quantile(q) => q.discretize(grid),
        }
    }
}

impl<S> From<DiscreteMeasure<S>> for Marginal1d<S> {
    fn from(m: DiscreteMeasure<S>) -> Self {
        Marginal1d::Discrete(m)
    }
}

impl<S> From<QuantileFunction<S>> for Marginal1d<S> {
    fn from(q: QuantileFunction<S>) -> Self {
        Marginal1d::Quantile(q)
    }
}

/// Residuals of the two defining identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max_j |Σ_i μ_i m_j(ζ_i) − ν_j|`
    pub marginal: f64,
    /// `max_i |(∇v ∗ γ)(ζ_i) − x_i|`
    pub barycenter: f64,
}

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub marginal: f64,
    pub barycenter: f64,
    /// `(Σ_i μ_i |ζ_i − ζ_i^prev|²)^{1/2}`, which is `W_2` between successive
    /// initial laws in one dimension.
    pub step: f64,
}

/// Isometric reduction to the affine hull of the target atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineReduction {
    /// orthonormal basis of the hull directions
    pub basis: Vec<Vec<f64>>,
    /// the target barycenter
    pub centre: Vec<f64>,
}

/// A solved Bass martingale: potential `v`, initial law `α` aligned with
/// the source atoms, and diagnostics.
#[derive(Debug, Clone)]
pub struct BassSolution<S> {
    pub v: MaxAffine<S>,
    pub mu: DiscreteMeasure<S>,
    pub nu: DiscreteMeasure<S>,
    /// atoms `ζ_i = ζ(x_i)` with the source weights
    pub alpha: DiscreteMeasure<S>,
    pub residuals: Residuals,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    pub reduction: Option<AffineReduction>,
    pub quadrature: QuadratureSpec,
    pub seed: u64,
}

/// The solution restricted to the affine hull of the target.
pub(crate) struct Working<S> {
    pub v: MaxAffine<S>,
    pub mu: DiscreteMeasure<S>,
    pub nu: DiscreteMeasure<S>,
    pub zeta: Vec<Vec<S>>,
}

impl<S: Scalar> BassSolution<S> {
    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    /// Dimension of the affine hull the problem was solved in.
    pub fn reduced_dim(&self) -> usize {
        self.reduction.as_ref().map_or(self.dim(), |r| r.basis.len())
    }

    pub fn zeta(&self, i: usize) -> &[S] {
        self.alpha.atom(i)
    }

    /// `Σ_j ν_j c_j`, zero in the recorded gauge.
    pub fn gauge_defect(&self) -> S {
        self.v
            .intercepts()
            .iter()
            .zip(self.nu.weights())
            .map(|(&c, &w)| c * w)
            .sum()
    }

    /// Rule matching the solution's dimension of work.
    pub fn rule(&self) -> Result<QuadratureRule<S>> {
        self.quadrature.build(self.reduced_dim().max(1))
    }

    pub(crate) fn working(&self) -> Result<Working<S>> {
        let Some(red) = &self.reduction else {
            return Ok(Working {
                v: self.v.clone(),
                mu: self.mu.clone(),
                nu: self.nu.clone(),
                zeta: self.alpha.atoms().map(|a| a.to_vec()).collect(),
            });
        };
        let basis: Vec<Vec<S>> = red.basis.iter().map(|b| b.iter().map(|&x| S::of(x)).collect()).collect();
        let centre: Vec<S> = red.centre.iter().map(|&x| S::of(x)).collect();
        let project = |p: &[S]| -> Vec<S> {
            let d: Vec<S> = p.iter().zip(&centre).map(|(&a, &b)| a - b).collect();
            basis.iter().map(|b| dot(b, &d)).collect()
        };
        let r = basis.len().max(1);
        if basis.is_empty() {
            // single target atom: the reduced problem lives on a point
            let v = MaxAffine::new(1, vec![vec![S::zero()]], vec![self.v.intercept(0)])?;
            return Ok(Working {
                v,
                mu: DiscreteMeasure::dirac(vec![S::zero()]),
                nu: DiscreteMeasure::dirac(vec![S::zero()]),
                zeta: vec![vec![S::zero()]; self.mu.len()],
            });
        }
        let slopes: Vec<Vec<S>> = self.v.slopes().map(project).collect();
        let intercepts: Vec<S> = (0..self.v.n_pieces())
            .map(|j| {
                let y = self.v.slope(j);
                let shift: S = y.iter().zip(&centre).map(|(&a, &b)| (a - b) * b).sum();
                self.v.intercept(j) - shift
            })
            .collect();
        let mu = self.mu.map(r, project)?;
        let nu = self.nu.map(r, project)?;
        Ok(Working {
            v: MaxAffine::new(r, slopes, intercepts)?,
            mu,
            nu,
            zeta: self.alpha.atoms().map(project).collect(),
        })
    }

    /// Cell masses `m_j(ζ_i)`: the kernel of source atom `i` on the target
    /// atoms.
    pub fn kernel_masses(&self, i: usize, rule: &QuadratureRule<S>) -> Result<Vec<S>> {
        if i >= self.mu.len() {
            return Err(Error::Index { index: i, len: self.mu.len() });
        }
        let w = self.working()?;
        rule.check_dim(w.v.dim())?;
        Ok(w.v.gaussian_integrals(S::one(), rule, &w.zeta[i]).masses)
    }

    /// `(z_k, v'(z_k))` at the `α ∗ γ`-quantiles of the midpoints of the
    /// target's cumulative weights; one-dimensional solutions only.
    pub fn quantile_grid(&self) -> Result<Vec<(S, S)>> {
        dim_check(1, self.dim())?;
        let zeta: Vec<S> = self.alpha.atoms().map(|a| a[0]).collect();
        let sorted = self.nu.sorted_1d();
        let mut lower = S::zero();
        let mut out = Vec::with_capacity(sorted.len());
        for (k, &(y, w)) in sorted.iter().enumerate() {
            let upper: S = sorted[k + 1..].iter().map(|p| p.1).sum();
            let z = mixture_quantile(&zeta, self.alpha.weights(), lower + w * S::of(0.5), upper + w * S::of(0.5));
            out.push((z, y));
            lower += w;
        }
        Ok(out)
    }
}

/// `F⁻¹(p)` for `F = Σ_i w_i Φ(· − ζ_i)`, given `p` and `q = 1 − p` computed
/// separately so both tails keep their precision.
pub fn mixture_quantile<S: Scalar>(zeta: &[S], w: &[S], p: S, q: S) -> S {
    let use_upper = p > S::of(0.5);
    let h = |z: S| -> S {
        if use_upper {
            q - zeta.iter().zip(w).map(|(&c, &wi)| wi * special::sf(z - c)).sum::<S>()
        } else {
            zeta.iter().zip(w).map(|(&c, &wi)| wi * special::cdf(z - c)).sum::<S>() - p
        }
    };
    let dens = |z: S| -> S { zeta.iter().zip(w).map(|(&c, &wi)| wi * special::pdf(z - c)).sum() };
    let (zmin, zmax) = zeta
        .iter()
        .fold((S::infinity(), S::neg_infinity()), |(l, u), &c| (l.min(c), u.max(c)));
    let base = if use_upper { -special::quantile(q) } else { special::quantile(p) };
    let (mut lo, mut hi) = (zmin + base, zmax + base);
    if hi - lo <= S::zero() {
        return lo;
    }
    let mut z = S::of(0.5) * (lo + hi);
    for _ in 0..200 {
        let r = h(z);
        if r == S::zero() {
            return z;
        }
        if r < S::zero() {
            lo = z;
        } else {
            hi = z;
        }
        let d = dens(z);
        let newton = z - r / d;
        let next = if d > S::zero() && newton > lo && newton < hi {
            newton
        } else {
            S::of(0.5) * (lo + hi)
        };
        if (next - z).abs() <= S::epsilon() * S::of(4.0) * (S::one() + z.abs()) || hi - lo <= S::epsilon() * (S::one() + z.abs()) {
            return next;
        }
        z = next;
    }
    z
}

fn barycenter_of<S: Scalar>(points: &[Vec<S>], w: &[S]) -> Vec<S> {
    let d = points[0].len();
    let mut b = vec![S::zero(); d];
    for (p, &wi) in points.iter().zip(w) {
        for k in 0..d {
            b[k] += wi * p[k];
        }
    }
    b
}

fn step_size<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>], w: &[S]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((p, q), &wi)| wi * p.iter().zip(q).map(|(&x, &y)| (x - y) * (x - y)).sum::<S>())
        .sum::<S>()
        .sqrt()
        .to_f64_lossy()
}

fn inner_tol<S: Scalar>(opts: &SolverOptions) -> S {
    S::of(0.1 * opts.tol_barycenter).max(S::epsilon().sqrt() * S::of(0.01))
}

fn check_pair<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>) -> Result<()> {
    if !check_convex_order(mu, nu)? {
        return Err(Error::NotConvexOrder);
    }
    let irr = check_irreducible(mu, nu).map_err(|e| match e {
        Error::Infeasible(_) => Error::NotConvexOrder,
        e => e,
    })?;
    if let Some((i, j)) = irr.witness {
        return Err(Error::NotIrreducible {
            x: mu.atom(i).iter().map(|v| v.to_f64_lossy()).collect(),
            y: nu.atom(j).iter().map(|v| v.to_f64_lossy()).collect(),
        });
    }
    Ok(())
}

/// The solution for a single target atom: `μ = ν = δ_y`.
fn trivial<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>, opts: &SolverOptions) -> Result<BassSolution<S>> {
    let d = nu.dim();
    let v = MaxAffine::new(d, vec![nu.atom(0).to_vec()], vec![S::zero()])?;
    Ok(BassSolution {
        v,
        mu: mu.clone(),
        nu: nu.clone(),
        alpha: mu.clone(),
        residuals: Residuals {
            marginal: 0.0,
            barycenter: 0.0,
        },
        iterations: 0,
        converged: true,
        history: Vec::new(),
        reduction: (d > 1).then(|| AffineReduction {
            basis: Vec::new(),
            centre: nu.atom(0).iter().map(|v| v.to_f64_lossy()).collect(),
        }),
        quadrature: opts.quadrature_for(d, 1),
        seed: opts.seed,
    })
}

/// One-dimensional fixed point: `v' = F_ν⁻¹ ∘ F_{α∗γ}` (the monotone
/// rearrangement of `α ∗ γ` onto `ν`), then `α ← (v' ∗ γ)⁻¹(μ)`.
///
/// Quantile-specified marginals are discretized to `grid_size` midpoint
/// atoms; the pair is checked for convex order and irreducibility only
/// when both sides are given as atoms.
pub fn solve_bass_1d<S: Scalar>(
    mu: impl Into<Marginal1d<S>>,
    nu: impl Into<Marginal1d<S>>,
    opts: &SolverOptions,
) -> Result<BassSolution<S>> {
    opts.validate()?;
    let (mu, nu) = (mu.into(), nu.into());
    let both_discrete = matches!((&mu, &nu), (Marginal1d::Discrete(_), Marginal1d::Discrete(_)));
    let (mu, nu) = (mu.resolve(opts.grid_size)?, nu.resolve(opts.grid_size)?);
    if both_discrete {
        check_pair(&mu, &nu)?;
    } else {
        warn!("quantile-specified marginal: convex order and irreducibility are not checked");
    }
    solve_1d_core(&mu, &nu, opts)
}

fn solve_1d_core<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>, opts: &SolverOptions) -> Result<BassSolution<S>> {
    if nu.len() == 1 {
        return trivial(mu, nu, opts);
    }
    let spec = opts.quadrature_for(1, nu.len());
    let rule: QuadratureRule<S> = spec.build(1)?;
    let eta = S::of(opts.damping_for(1));
    let max_iter = opts.max_iter_for(1);
    let tol_in = inner_tol::<S>(opts);

    // target atoms in increasing order, remembering their original slots
    let mut order: Vec<usize> = (0..nu.len()).collect();
    order.sort_by(|&a, &b| nu.atom(a)[0].partial_cmp(&nu.atom(b)[0]).unwrap());
    let y: Vec<S> = order.iter().map(|&j| nu.atom(j)[0]).collect();
    let wy: Vec<S> = order.iter().map(|&j| nu.weight(j)).collect();
    let m = y.len();
    let lower: Vec<S> = (1..m).map(|k| wy[..k].iter().copied().sum()).collect();
    let upper: Vec<S> = (1..m).map(|k| wy[k..].iter().copied().sum()).collect();

    let x: Vec<S> = mu.atoms().map(|a| a[0]).collect();
    let wx = mu.weights().to_vec();
    let bary_mu: S = x.iter().zip(&wx).map(|(&a, &b)| a * b).sum();
    let mut zeta = x.clone();
    let mut breaks: Option<Vec<S>> = None;
    let mut history = Vec::new();

    let build = |b: &[S]| -> Result<MaxAffine<S>> {
        let mut c = vec![S::zero(); m];
        for k in 1..m {
            c[k] = c[k - 1] + (y[k] - y[k - 1]) * b[k - 1];
        }
        let mut slots = vec![S::zero(); m];
        for (k, &j) in order.iter().enumerate() {
            slots[j] = c[k];
        }
        let mut v = MaxAffine::from_1d(&nu.points_1d(), &slots)?;
        v.regauge(nu.weights());
        Ok(v)
    };

    for it in 1..=max_iter {
        let target: Vec<S> = (0..m - 1)
            .map(|k| mixture_quantile(&zeta, &wx, lower[k], upper[k]))
            .collect();
        let b: Vec<S> = match &breaks {
            Some(old) => old.iter().zip(&target).map(|(&o, &t)| o + eta * (t - o)).collect(),
            None => target,
        };
        let v = build(&b)?;
        let solved: Vec<S> = x
            .par_iter()
            .zip(zeta.par_iter())
            .map(|(&xi, &zi)| smoothed_grad_inverse_from(&v, &[xi], &rule, tol_in, Some(&[zi])).map(|z| z[0]))
            .collect::<Result<_>>()?;
        // translation gauge: bary(α) = bary(μ)
        let shift = bary_mu - solved.iter().zip(&wx).map(|(&a, &b)| a * b).sum::<S>();
        let new_zeta: Vec<S> = solved.iter().map(|&z| z + shift).collect();
        let b: Vec<S> = b.iter().map(|&t| t + shift).collect();
        let v = build(&b)?;
        let step = step_size(
            &new_zeta.iter().map(|&z| vec![z]).collect::<Vec<_>>(),
            &zeta.iter().map(|&z| vec![z]).collect::<Vec<_>>(),
            &wx,
        );
        // residuals of the pair (v, new α)
        let mut nu_hat = vec![S::zero(); m];
        let mut bary_res = S::zero();
        for (i, &z) in new_zeta.iter().enumerate() {
            let mut g = S::zero();
            for k in 0..m {
                let lo = if k == 0 { S::neg_infinity() } else { b[k - 1] - z };
                let hi = if k + 1 == m { S::infinity() } else { b[k] - z };
                let mass = special::interval_mass(lo, hi);
                nu_hat[k] += wx[i] * mass;
                g += mass * y[k];
            }
            bary_res = bary_res.max((g - x[i]).abs());
        }
        let marg = nu_hat
            .iter()
            .zip(&wy)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max);
        let rec = IterationRecord {
            marginal: marg.to_f64_lossy(),
            barycenter: bary_res.to_f64_lossy(),
            step,
        };
        debug!("1-D iteration {it}: {rec:?}");
        history.push(rec);
        zeta = new_zeta;
        breaks = Some(b);
        if rec.marginal <= opts.tol_marginal && rec.barycenter <= opts.tol_barycenter {
            let alpha = DiscreteMeasure::new(1, zeta.iter().map(|&z| vec![z]).collect(), wx.clone())?;
            return Ok(BassSolution {
                v,
                mu: mu.clone(),
                nu: nu.clone(),
                alpha,
                residuals: Residuals {
                    marginal: rec.marginal,
                    barycenter: rec.barycenter,
                },
                iterations: it,
                converged: true,
                history,
                reduction: None,
                quadrature: spec,
                seed: opts.seed,
            });
        }
    }
    let last = history.last().copied().unwrap();
    Err(Error::MaxIterations {
        iterations: max_iter,
        marginal_residual: last.marginal,
        barycenter_residual: last.barycenter,
    })
}

/// Multi-dimensional iteration: solve `(∇v ∗ γ)(ζ_i) = x_i` for every source
/// atom (in parallel, warm-started), then move the intercepts by
/// `c_j += η·log(ν̂_j / ν_j)` and re-gauge.
///
/// A target whose atoms do not affinely span the space is solved in its
/// affine hull and re-embedded; a one-dimensional hull uses
/// [`solve_bass_1d`]'s iteration.
pub fn solve_bass_nd<S: Scalar>(
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
    opts: &SolverOptions,
) -> Result<BassSolution<S>> {
    opts.validate()?;
    dim_check(mu.dim(), nu.dim())?;
    check_pair(mu, nu)?;
    let d = nu.dim();
    if nu.len() == 1 {
        return trivial(mu, nu, opts);
    }
    let centre = nu.barycenter();
    let diffs: Vec<Vec<S>> = nu
        .atoms()
        .map(|y| y.iter().zip(&centre).map(|(&a, &b)| a - b).collect())
        .collect();
    let basis = orthonormal_basis(&diffs, S::of(1e-9));
    let r = basis.len();
    if r == d && d > 1 {
        return solve_nd_core(mu, nu, opts);
    }
    let project = |p: &[S]| -> Vec<S> {
        let q: Vec<S> = p.iter().zip(&centre).map(|(&a, &b)| a - b).collect();
        basis.iter().map(|b| dot(b, &q)).collect()
    };
    let (mu_r, nu_r) = (mu.map(r, project)?, nu.map(r, project)?);
    if nu_r.len() != nu.len() {
        return Err(Error::InvalidMeasure("target atoms collapse under hull projection".into()));
    }
    let reduced_opts = SolverOptions {
        quadrature: opts.quadrature,
        ..opts.clone()
    };
    let red = if r == 1 {
        solve_1d_core(&mu_r, &nu_r, &reduced_opts)?
    } else {
        solve_nd_core(&mu_r, &nu_r, &reduced_opts)?
    };
    if d == r {
        return Ok(red);
    }
    // v(z) = v_r(Uᵀ(z − ȳ)) + ⟨ȳ, z⟩, ζ = U ζ_r + ȳ
    let embed = |p: &[S]| -> Vec<S> {
        let mut out = centre.clone();
        for (b, &c) in basis.iter().zip(p) {
            for k in 0..d {
                out[k] += c * b[k];
            }
        }
        out
    };
    let intercepts: Vec<S> = (0..nu.len())
        .map(|j| {
            let shift: S = nu.atom(j).iter().zip(&centre).map(|(&a, &b)| (a - b) * b).sum();
            red.v.intercept(j) + shift
        })
        .collect();
    let v = MaxAffine::new(d, nu.atoms().map(|a| a.to_vec()).collect(), intercepts)?;
    let alpha = DiscreteMeasure::new(d, red.alpha.atoms().map(embed).collect(), red.alpha.weights().to_vec())?;
    Ok(BassSolution {
        v,
        mu: mu.clone(),
        nu: nu.clone(),
        alpha,
        reduction: Some(AffineReduction {
            basis: basis.iter().map(|b| b.iter().map(|x| x.to_f64_lossy()).collect()).collect(),
            centre: centre.iter().map(|x| x.to_f64_lossy()).collect(),
        }),
        ..red
    })
}

fn solve_nd_core<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>, opts: &SolverOptions) -> Result<BassSolution<S>> {
    let d = nu.dim();
    let n = nu.len();
    let spec = opts.quadrature_for(d, n);
    let rule: QuadratureRule<S> = spec.build(d)?;
    let eta = S::of(opts.damping_for(d));
    let max_iter = opts.max_iter_for(d);
    let tol_in = inner_tol::<S>(opts);
    let clamp = S::of(LOG_STEP_CLAMP);

    let slopes: Vec<Vec<S>> = nu.atoms().map(|a| a.to_vec()).collect();
    let mut c: Vec<S> = match &opts.initial_intercepts {
        Some(c0) if c0.len() == n => c0.iter().map(|&v| S::of(v)).collect(),
        Some(c0) => {
            return Err(Error::Options(format!("{} initial intercepts for {} target atoms", c0.len(), n)));
        }
        None => vec![S::zero(); n],
    };
    let x: Vec<Vec<S>> = mu.atoms().map(|a| a.to_vec()).collect();
    let wx = mu.weights().to_vec();
    let bary_mu = mu.barycenter();
    let mut zeta = x.clone();
    let mut history = Vec::new();
    let mut v = MaxAffine::new(d, slopes.clone(), c.clone())?;
    v.regauge(nu.weights());
    c = v.intercepts().to_vec();

    for it in 1..=max_iter {
        let solved: Vec<(Vec<S>, Vec<S>, S)> = x
            .par_iter()
            .zip(zeta.par_iter())
            .map(|(xi, zi)| {
                let z = smoothed_grad_inverse_from(&v, xi, &rule, tol_in, Some(zi))?;
                let g = v.gaussian_integrals(S::one(), &rule, &z);
                let res = g
                    .gradient
                    .iter()
                    .zip(xi)
                    .map(|(&a, &b)| (a - b).abs())
                    .fold(S::zero(), S::max);
                Ok((z, g.masses, res))
            })
            .collect::<Result<_>>()?;
        let mut nu_hat = vec![S::zero(); n];
        let mut bary_res = S::zero();
        for ((_, m, res), &w) in solved.iter().zip(&wx) {
            for j in 0..n {
                nu_hat[j] += w * m[j];
            }
            bary_res = bary_res.max(*res);
        }
        let new_zeta: Vec<Vec<S>> = solved.into_iter().map(|s| s.0).collect();
        let marg = nu_hat
            .iter()
            .zip(nu.weights())
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max);
        let rec = IterationRecord {
            marginal: marg.to_f64_lossy(),
            barycenter: bary_res.to_f64_lossy(),
            step: step_size(&new_zeta, &zeta, &wx),
        };
        debug!("iteration {it}: {rec:?}");
        history.push(rec);
        zeta = new_zeta;
        let done = rec.marginal <= opts.tol_marginal && rec.barycenter <= opts.tol_barycenter;
        if !done {
            for j in 0..n {
                let ratio = nu_hat[j] / nu.weight(j);
                let step = if ratio > S::zero() { ratio.ln() } else { -clamp };
                c[j] += eta * step.max(-clamp).min(clamp);
            }
        }
        // translation gauge, then the additive one
        let bary_alpha = barycenter_of(&zeta, &wx);
        let b: Vec<S> = bary_mu.iter().zip(&bary_alpha).map(|(&a, &z)| a - z).collect();
        for (j, cj) in c.iter_mut().enumerate() {
            *cj += dot(&slopes[j], &b);
        }
        for z in &mut zeta {
            for k in 0..d {
                z[k] += b[k];
            }
        }
        v = MaxAffine::new(d, slopes.clone(), c.clone())?;
        v.regauge(nu.weights());
        c = v.intercepts().to_vec();
        if done {
            let alpha = DiscreteMeasure::new(d, zeta, wx)?;
            return Ok(BassSolution {
                v,
                mu: mu.clone(),
                nu: nu.clone(),
                alpha,
                residuals: Residuals {
                    marginal: rec.marginal,
                    barycenter: rec.barycenter,
                },
                iterations: it,
                converged: true,
                history,
                reduction: None,
                quadrature: spec,
                seed: opts.seed,
            });
        }
    }
    let last = history.last().copied().unwrap();
    Err(Error::MaxIterations {
        iterations: max_iter,
        marginal_residual: last.marginal,
        barycenter_residual: last.barycenter,
    })
}

/// Primal value `P̂ = Σ_i μ_i E⟨∇v(ζ_i + Z), Z⟩` of the solution's kernels
/// against the dual value `D̂ = Σ_j ν_j ψ(y_j) − Σ_i μ_i φ^ψ(x_i)` of
/// `ψ = v*`, with quadrature error bars.
///
/// In one dimension both are exact. For Gauss–Hermite rules the error bar
/// is the change when the rule is halved; for Monte Carlo rules it is the
/// standard error.
pub fn duality_gap_report<S: Scalar>(
    sol: &BassSolution<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
    rule: &QuadratureRule<S>,
) -> Result<DualCertificate> {
    dim_check(sol.dim(), mu.dim())?;
    dim_check(sol.dim(), nu.dim())?;
    if mu.len() != sol.mu.len() || nu.len() != sol.nu.len() {
        return Err(Error::InvalidMeasure("measures do not match the solution".into()));
    }
    let w = sol.working()?;
    rule.check_dim(w.v.dim())?;
    let quadrature = rule.spec().to_string();
    if sol.nu.len() == 1 {
        return Ok(DualCertificate {
            primal_value: 0.0,
            dual_value: Some(0.0),
            relaxed_dual: 0.0,
            gap: 0.0,
            relative_gap: 0.0,
            primal_error: 0.0,
            dual_error: 0.0,
            marginal_error: 0.0,
            psi_gauge: GAUGE.into(),
            quadrature,
        });
    }
    let psi = psi_values(&w.v, w.nu.atoms())?;
    // (P̂, D̂, relaxed, se(P̂), se(φ part)) and the achieved terminal marginal
    let values = |rule: &QuadratureRule<S>| -> Result<((S, S, S, S, S), Vec<S>)> {
        let per_atom: Vec<((S, S, S, S, S), Vec<S>)> = (0..w.mu.len())
            .into_par_iter()
            .map(|i| {
                let x = w.mu.atom(i);
                let (phi, zeta) = phi_psi_at(&w.v, x, rule, Some(&w.zeta[i]))?;
                let g = w.v.gaussian_integrals(S::one(), rule, &zeta);
                let kernel_psi: S = g
                    .masses
                    .iter()
                    .zip(&psi)
                    .filter(|(&m, _)| m > S::zero())
                    .map(|(&m, &p)| m * p)
                    .sum();
                Ok(((g.cross, phi, kernel_psi, g.cross_se, g.value_se), g.masses))
            })
            .collect::<Result<_>>()?;
        let mut acc = (S::zero(), S::zero(), S::zero(), S::zero(), S::zero());
        let mut achieved = vec![S::zero(); w.nu.len()];
        for (i, (t, masses)) in per_atom.iter().enumerate() {
            let m = w.mu.weight(i);
            for (a, &q) in achieved.iter_mut().zip(masses) {
                *a += m * q;
            }
            acc.0 += m * t.0;
            acc.1 += m * t.1;
            acc.2 += m * t.2;
            acc.3 += m * t.3;
            acc.4 += m * t.4;
        }
        let nu_psi: S = psi.iter().zip(w.nu.weights()).map(|(&p, &q)| p * q).sum();
        Ok(((acc.0, nu_psi - acc.1, acc.2 - acc.1, acc.3, acc.4), achieved))
    };
    let ((p, d, relaxed, p_se, d_se), achieved) = values(rule)?;
    let (primal_error, dual_error) = if w.v.dim() == 1 {
        (S::zero(), S::zero())
    } else {
        match rule.spec() {
            QuadratureSpec::MonteCarlo { .. } => (p_se, d_se),
            QuadratureSpec::GaussHermite { per_axis } => {
                let half = QuadratureRule::gauss_hermite(w.v.dim(), (per_axis / 2).max(1))?;
                let ((p2, d2, ..), _) = values(&half)?;
                ((p - p2).abs(), if d.is_finite() { (d - d2).abs() } else { S::zero() })
            }
        }
    };
    let mismatch: S = achieved
        .iter()
        .zip(w.nu.weights())
        .map(|(&a, &q)| (a - q).abs())
        .sum();
    let (lo, hi) = psi
        .iter()
        .fold((S::infinity(), S::neg_infinity()), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let marginal_error = S::of(0.5) * mismatch * (hi - lo);
    let (p, d, relaxed) = (p.to_f64_lossy(), d.to_f64_lossy(), relaxed.to_f64_lossy());
    let gap = d - p;
    Ok(DualCertificate {
        primal_value: p,
        dual_value: d.is_finite().then_some(d),
        relaxed_dual: relaxed,
        gap,
        relative_gap: gap.abs() / p.max(1e-6),
        primal_error: primal_error.to_f64_lossy(),
        dual_error: dual_error.to_f64_lossy(),
        marginal_error: marginal_error.to_f64_lossy(),
        psi_gauge: GAUGE.into(),
        quadrature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexfn::AnalyticConvex;
    use crate::measures::find_mt_coupling;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binary() -> (DiscreteMeasure<f64>, DiscreteMeasure<f64>) {
        (
            DiscreteMeasure::dirac(vec![0.0]),
            DiscreteMeasure::from_1d(&[-1.0, 1.0], &[0.5, 0.5]).unwrap(),
        )
    }

    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().validate().is_ok());
        let bad = SolverOptions {
            grid_size: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverOptions {
            damping: Some(1.5),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverOptions {
            tol_marginal: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn options_roundtrip_json() {
        let opts = SolverOptions {
            quadrature: Some(QuadratureSpec::MonteCarlo { samples: 100, seed: 3 }),
            ..Default::default()
        };
        let s = serde_json::to_string(&opts).unwrap();
        assert_eq!(serde_json::from_str::<SolverOptions>(&s).unwrap(), opts);
    }

    #[test]
    fn mixture_quantile_inverts_cdf() {
        let zeta = [-1.0, 0.3, 2.0];
        let w = [0.2, 0.5, 0.3];
        for &p in &[1e-12, 1e-4, 0.1, 0.5, 0.77, 1.0 - 1e-6] {
            let z = mixture_quantile(&zeta, &w, p, 1.0 - p);
            let f: f64 = zeta.iter().zip(&w).map(|(&c, &wi)| wi * special::cdf(z - c)).sum();
            assert!((f - p).abs() < 1e-12 * (1.0 + p / 1e-3), "{p} {f}");
        }
    }

    #[test]
    fn binary_example() {
        let (mu, nu) = binary();
        let sol = solve_bass_1d(mu.clone(), nu.clone(), &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.zeta(0)[0].abs() < 1e-8);
        let rule = sol.rule().unwrap();
        let k = sol.kernel_masses(0, &rule).unwrap();
        assert!((k[0] - 0.5).abs() < 1e-8 && (k[1] - 0.5).abs() < 1e-8);
        // v = |·| up to the gauge Σ ν_j c_j = 0
        assert!(sol.gauge_defect().abs() < 1e-12);
        assert!((sol.v.intercept(0) - sol.v.intercept(1)).abs() < 1e-8);
        let cert = duality_gap_report(&sol, &mu, &nu, &QuadratureRule::gauss_hermite(1, 64).unwrap()).unwrap();
        assert!((cert.primal_value - SQRT_2_OVER_PI).abs() < 1e-3, "{cert:?}");
        assert!((cert.dual_value.unwrap() - SQRT_2_OVER_PI).abs() < 1e-3, "{cert:?}");
        assert!(cert.gap.abs() < 1e-3);
    }

    #[test]
    fn binary_in_single_precision() {
        let mu = DiscreteMeasure::<f32>::dirac(vec![0.0]);
        let nu = DiscreteMeasure::<f32>::from_1d(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        let opts = SolverOptions {
            tol_barycenter: 1e-4,
            ..Default::default()
        };
        let sol = solve_bass_1d(mu.clone(), nu.clone(), &opts).unwrap();
        let cert = duality_gap_report(&sol, &mu, &nu, &QuadratureRule::gauss_hermite(1, 64).unwrap()).unwrap();
        assert!((cert.primal_value - SQRT_2_OVER_PI).abs() < 1e-4, "{cert:?}");
    }

    #[test]
    fn brownian_quantile_form() {
        let mu = DiscreteMeasure::<f64>::dirac(vec![0.0]);
        let sol = solve_bass_1d(mu.clone(), QuantileFunction::gaussian(), &SolverOptions::default()).unwrap();
        assert!(sol.zeta(0)[0].abs() < 1e-3);
        let grid = sol.quantile_grid().unwrap();
        let err = grid.iter().map(|&(z, y)| (z - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "sup error {err}");
        let nu = sol.nu.clone();
        let cert = duality_gap_report(&sol, &mu, &nu, &sol.rule().unwrap()).unwrap();
        // MCov(δ_0, γ) = 1 minus the discretization loss of the 513-atom target
        assert!((cert.primal_value - 1.0).abs() < 5e-3, "{cert:?}");
        assert!(cert.gap.abs() < 1e-3, "{cert:?}");
    }

    #[test]
    fn single_atom_target_is_trivial() {
        let d = DiscreteMeasure::dirac(vec![0.0]);
        let sol = solve_bass_1d(d.clone(), d.clone(), &SolverOptions::default()).unwrap();
        let cert = duality_gap_report(&sol, &d, &d, &QuadratureRule::gauss_hermite(1, 64).unwrap()).unwrap();
        assert_eq!(cert.primal_value, 0.0);
        assert_eq!(cert.dual_value, Some(0.0));
    }

    #[test]
    fn rejects_bad_pairs() {
        let (mu, nu) = binary();
        assert!(matches!(
            solve_bass_1d(nu.clone(), mu.clone(), &SolverOptions::default()),
            Err(Error::NotConvexOrder)
        ));
        let nu = DiscreteMeasure::from_1d(&[-2.0, 0.0, 2.0], &[0.25, 0.5, 0.25]).unwrap();
        let mu = DiscreteMeasure::from_1d(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        // the atom at 0 can only be reached by both sides through a coupling
        // that is not strictly positive: mass from -1 stays left of 0
        assert!(matches!(
            solve_bass_1d(mu, nu, &SolverOptions::default()),
            Err(Error::NotIrreducible { .. })
        ));
    }

    #[test]
    fn arctan_roundtrip() {
        let v = AnalyticConvex::<f64>::arctan();
        let rule = QuadratureRule::gauss_hermite(1, 64).unwrap();
        // α = ½δ_{±1}; μ = (arctan ∗ γ)(α) and ν = arctan(α ∗ γ) on 513 points
        let alpha = DiscreteMeasure::from_1d(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        let (mu, nu) = crate::martingale::forward_construct_quantiles(&v, &alpha, &rule, 513).unwrap();
        let opts = SolverOptions::default();
        let sol = solve_bass_1d(mu, nu, &opts).unwrap();
        let err = sol
            .quantile_grid()
            .unwrap()
            .iter()
            .map(|&(z, y)| (z.atan() - y).abs())
            .fold(0.0, f64::max);
        assert!(err <= 0.02, "sup error {err}");
        // default tolerances stop after a handful of steps; tighten them to
        // observe the rate
        let tight = SolverOptions {
            tol_marginal: 1e-9,
            tol_barycenter: 1e-10,
            ..opts
        };
        let sol = solve_bass_1d(sol.mu.clone(), sol.nu.clone(), &tight).unwrap();
        let h = &sol.history;
        assert!(h.len() >= 11, "{} iterations", h.len());
        for w in h[h.len() - 11..].windows(2) {
            assert!(w[1].step < 0.95 * w[0].step, "{:?}", w);
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (DiscreteMeasure<f64>, DiscreteMeasure<f64>) {
        // ν random; μ the conditional means of ν over a random split into
        // contiguous blocks, then spread so that every μ atom is interior
        loop {
            let m = rng.random_range(2..=5);
            let mut y: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            y.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / total).collect();
            let nu = DiscreteMeasure::from_1d(&y, &w).unwrap();
            let n = rng.random_range(1..=m.min(5));
            // shrink a random ν-sampled mean-preserving contraction
            let bary: f64 = y.iter().zip(&w).map(|(a, b)| a * b).sum();
            let xs: Vec<f64> = (0..n)
                .map(|_| bary + 0.6 * (rng.random_range(y[0]..y[m - 1]) - bary))
                .collect();
            let xm: f64 = xs.iter().sum::<f64>() / n as f64;
            let xs: Vec<f64> = xs.iter().map(|x| x - xm + bary).collect();
            let Ok(mu) = DiscreteMeasure::from_1d(&xs, &vec![1.0 / n as f64; n]) else {
                continue;
            };
            if check_pair(&mu, &nu).is_ok() {
                return (mu, nu);
            }
        }
    }

    #[test]
    fn random_instances_close_the_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rule = QuadratureRule::gauss_hermite(1, 64).unwrap();
        for _ in 0..10 {
            let (mu, nu) = random_instance(&mut rng);
            let sol = solve_bass_1d(mu.clone(), nu.clone(), &SolverOptions::default()).unwrap();
            let cert = duality_gap_report(&sol, &mu, &nu, &rule).unwrap();
            assert!(cert.relative_gap <= 1e-2, "{cert:?}");
            for i in 0..mu.len() {
                assert!(sol.kernel_masses(i, &rule).unwrap().iter().all(|&m| m > 0.0));
            }
        }
    }

    #[test]
    fn symmetric_square_in_the_plane() {
        let mu = DiscreteMeasure::<f64>::dirac(vec![0.0, 0.0]);
        let nu = DiscreteMeasure::uniform(
            2,
            vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let sol = solve_bass_nd(&mu, &nu, &SolverOptions::default()).unwrap();
        assert!(sol.v.intercepts().iter().all(|c| c.abs() < 1e-6), "{:?}", sol.v.intercepts());
        let rule = sol.rule().unwrap();
        for m in sol.kernel_masses(0, &rule).unwrap() {
            assert!((m - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn collinear_target_reduces_to_1d() {
        let mu = DiscreteMeasure::<f64>::dirac(vec![0.0, 0.0]);
        let nu = DiscreteMeasure::uniform(2, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let sol = solve_bass_nd(&mu, &nu, &SolverOptions::default()).unwrap();
        assert_eq!(sol.reduced_dim(), 1);
        let rule = sol.rule().unwrap();
        let k = sol.kernel_masses(0, &rule).unwrap();
        assert!((k[0] - 0.5).abs() < 1e-8 && (k[1] - 0.5).abs() < 1e-8);
        let cert = duality_gap_report(&sol, &mu, &nu, &rule).unwrap();
        assert!((cert.primal_value - SQRT_2_OVER_PI).abs() < 1e-3);
        // ∇v at the embedded ζ reproduces the source atom
        let g = sol.v.smooth(1.0, &QuadratureRule::gauss_hermite(2, 20).unwrap(), sol.zeta(0));
        assert!(g.gradient.iter().all(|x| x.abs() < 1e-6), "{:?}", g.gradient);
    }

    fn random_triangle(seed: u64) -> (DiscreteMeasure<f64>, DiscreteMeasure<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let atoms: Vec<Vec<f64>> = (0..3)
                .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                .collect();
            let area = (atoms[1][0] - atoms[0][0]) * (atoms[2][1] - atoms[0][1])
                - (atoms[2][0] - atoms[0][0]) * (atoms[1][1] - atoms[0][1]);
            if area.abs() < 0.5 {
                continue;
            }
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
            let (nu, _) = DiscreteMeasure::normalized(2, atoms, w).unwrap();
            return (DiscreteMeasure::dirac(nu.barycenter()), nu);
        }
    }

    #[test]
    fn random_triangle_certificate() {
        let (mu, nu) = random_triangle(5);
        let sol = solve_bass_nd(&mu, &nu, &SolverOptions::default()).unwrap();
        assert!(sol.residuals.marginal < 1e-4);
        let cert = duality_gap_report(&sol, &mu, &nu, &sol.rule().unwrap()).unwrap();
        assert!(cert.relative_gap < 1e-2, "{cert:?}");
        assert!(sol.gauge_defect().abs() < 1e-10);
    }

    #[test]
    fn gauge_invariance() {
        let (mu, nu) = random_triangle(8);
        let a = solve_bass_nd(&mu, &nu, &SolverOptions::default()).unwrap();
        let opts = SolverOptions {
            initial_intercepts: Some(vec![3.0; 3]),
            ..Default::default()
        };
        let b = solve_bass_nd(&mu, &nu, &opts).unwrap();
        for j in 0..3 {
            assert!((a.v.intercept(j) - b.v.intercept(j)).abs() < 1e-6);
        }
        for k in 0..2 {
            assert!((a.zeta(0)[k] - b.zeta(0)[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn primal_beats_perturbed_couplings() {
        let mu = DiscreteMeasure::from_1d(&[-0.5, 0.5], &[0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::from_1d(&[-2.0, 0.0, 1.0, 2.5], &[0.2, 0.3, 0.3, 0.2]).unwrap();
        let nu = {
            // recentre ν so the barycenters agree
            let b = nu.barycenter()[0];
            nu.map(1, |y| vec![y[0] - b]).unwrap()
        };
        let sol = solve_bass_1d(mu.clone(), nu.clone(), &SolverOptions::default()).unwrap();
        let rule = QuadratureRule::gauss_hermite(1, 64).unwrap();
        let cert = duality_gap_report(&sol, &mu, &nu, &rule).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let promote = (rng.random_range(0..mu.len()), rng.random_range(0..nu.len()));
            let Ok(found) = find_mt_coupling(&mu, &nu, Some(promote)) else {
                continue;
            };
            let pi = found.coupling;
            let value: f64 = (0..mu.len())
                .map(|i| {
                    let k = pi.kernel(i).unwrap();
                    mu.weight(i) * crate::transport::mcov_discrete(&rule_measure(&rule), &k).unwrap()
                })
                .sum();
            assert!(value <= cert.primal_value + 1e-9, "{value} > {}", cert.primal_value);
        }
    }

    fn rule_measure(rule: &QuadratureRule<f64>) -> DiscreteMeasure<f64> {
        let atoms: Vec<Vec<f64>> = rule.iter().map(|(z, _)| z.to_vec()).collect();
        DiscreteMeasure::new(1, atoms, rule.weights().to_vec()).unwrap()
    }

    #[test]
    fn deterministic_under_parallelism() {
        let (mu, nu) = random_triangle(3);
        let a = solve_bass_nd(&mu, &nu, &SolverOptions::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| solve_bass_nd(&mu, &nu, &SolverOptions::default()).unwrap());
        assert_eq!(a.v.intercepts(), b.v.intercepts());
        assert_eq!(a.iterations, b.iterations);
    }
}
