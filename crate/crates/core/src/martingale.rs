//! The Bass martingale `M_t = ∇v_t(B_t)`, `v_t = v ∗ γ^{1−t}`, `B_0 ∼ α`:
//! forward construction of its marginals, kernels, exact path sampling and
//! pathwise diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexfn::{AnalyticConvex, ConvexPotential, MaxAffine};
use crate::error::{dim_check, Error, Result};
use crate::lp::{phase_one, PhaseOne};
use crate::measures::{wasserstein2_bounds, DiscreteMeasure};
use crate::quadrature::QuadratureRule;
use crate::scalar::Scalar;
use crate::solver::{mixture_quantile, solve_bass_1d, BassSolution, SolverOptions};

/// Default number of time steps on `[0, 1]`.
pub const DEFAULT_STEPS: usize = 64;
/// Largest cloud `|α| · |rule|` built in full for analytic potentials;
/// larger products assign rule nodes to `α`-atoms in strata.
pub const CLOUD_LIMIT: usize = 2_000_000;

/// Potential accepted by [`forward_construct`].
#[derive(Debug, Clone, Copy)]
pub enum Potential<'a, S> {
    MaxAffine(&'a MaxAffine<S>),
    Analytic(&'a AnalyticConvex<S>),
}

impl<'a, S> From<&'a MaxAffine<S>> for Potential<'a, S> {
    fn from(v: &'a MaxAffine<S>) -> Self {
        Potential::MaxAffine(v)
    }
}

impl<'a, S> From<&'a AnalyticConvex<S>> for Potential<'a, S> {
    fn from(v: &'a AnalyticConvex<S>) -> Self {
        Potential::Analytic(v)
    }
}

/// `μ = (∇v ∗ γ)(α)` and `ν = ∇v(α ∗ γ)`.
///
/// For a max-affine `v`, `ν` sits on the slopes with the mixed cell masses.
/// For an analytic `v` it is the cloud `∇v(a + z_k)` over the rule's nodes,
/// each `α`-atom taking every node, or (when that exceeds [`CLOUD_LIMIT`])
/// an interleaved share of them.
pub fn forward_construct<'a, S: Scalar>(
    v: impl Into<Potential<'a, S>>,
    alpha: &DiscreteMeasure<S>,
    rule: &QuadratureRule<S>,
) -> Result<(DiscreteMeasure<S>, DiscreteMeasure<S>)> {
    let v = v.into();
    let d = alpha.dim();
    let pot: &dyn ConvexPotential<S> = match v {
        Potential::MaxAffine(v) => v,
        Potential::Analytic(v) => v,
    };
    dim_check(d, pot.dim())?;
    rule.check_dim(d)?;
    let starts: Vec<&[S]> = alpha.atoms().collect();
    let mu_atoms: Vec<Vec<S>> = starts
        .par_iter()
        .map(|a| pot.smooth(S::one(), rule, a).gradient)
        .collect();
    let (mu, _) = DiscreteMeasure::normalized(d, mu_atoms, alpha.weights().to_vec())?;
    let nu = match v {
        Potential::MaxAffine(v) => {
            let per_atom: Vec<Vec<S>> = starts
                .par_iter()
                .map(|a| v.gaussian_integrals(S::one(), rule, a).masses)
                .collect();
            let mut masses = vec![S::zero(); v.n_pieces()];
            for (m, &w) in per_atom.iter().zip(alpha.weights()) {
                for (acc, &mj) in masses.iter_mut().zip(m) {
                    *acc += w * mj;
                }
            }
            DiscreteMeasure::normalized(d, v.slopes().map(|s| s.to_vec()).collect(), masses)?.0
        }
        Potential::Analytic(v) => {
            let n = alpha.len();
            let full = n.saturating_mul(rule.len()) <= CLOUD_LIMIT;
            let groups: Vec<(Vec<Vec<S>>, Vec<S>)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let a = alpha.atom(i);
                    let nodes: Vec<usize> = if full {
                        (0..rule.len()).collect()
                    } else {
                        (i..rule.len()).step_by(n).collect()
                    };
                    let share: S = nodes.iter().map(|&k| rule.weights()[k]).sum();
                    let mut pts = Vec::with_capacity(nodes.len());
                    let mut ws = Vec::with_capacity(nodes.len());
                    let mut x = vec![S::zero(); d];
                    for &k in &nodes {
                        for (xi, (&ai, &zi)) in x.iter_mut().zip(a.iter().zip(rule.node(k))) {
                            *xi = ai + zi;
                        }
                        pts.push(v.gradient(&x));
                        ws.push(alpha.weight(i) * rule.weights()[k] / share);
                    }
                    (pts, ws)
                })
                .collect();
            let (pts, ws): (Vec<_>, Vec<_>) = groups.into_iter().unzip();
            DiscreteMeasure::normalized(d, pts.concat(), ws.concat())?.0
        }
    };
    Ok((mu, nu))
}

/// One-dimensional forward construction with `ν` discretized at `n`
/// midpoint quantiles: atoms `v'(F⁻¹((k − ½)/n))` where `F` is the law of
/// `α ∗ γ`. Requires `v'` non-decreasing, which convexity guarantees.
pub fn forward_construct_quantiles<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    alpha: &DiscreteMeasure<S>,
    rule: &QuadratureRule<S>,
    n: usize,
) -> Result<(DiscreteMeasure<S>, DiscreteMeasure<S>)> {
    dim_check(1, v.dim())?;
    dim_check(1, alpha.dim())?;
    if n == 0 {
        return Err(Error::Options("need at least one quantile atom".into()));
    }
    let mu_atoms: Vec<Vec<S>> = alpha.atoms().map(|a| v.smooth(S::one(), rule, a).gradient).collect();
    let (mu, _) = DiscreteMeasure::normalized(1, mu_atoms, alpha.weights().to_vec())?;
    let zeta: Vec<S> = alpha.atoms().map(|a| a[0]).collect();
    let nf = S::of_usize(n);
    let atoms: Vec<Vec<S>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let p = (S::of_usize(k) + S::of(0.5)) / nf;
            let q = (S::of_usize(n - k) - S::of(0.5)) / nf;
            v.gradient(&[mixture_quantile(&zeta, alpha.weights(), p, q)])
        })
        .collect();
    let (nu, _) = DiscreteMeasure::normalized(1, atoms, vec![S::one(); n])?;
    Ok((mu, nu))
}

/// A potential paired with an initial law and the rule used for the
/// smoothed gradients `∇v_t`, `t < 1`.
#[derive(Debug, Clone)]
pub struct BassModel<S, P> {
    pub v: P,
    pub alpha: DiscreteMeasure<S>,
    pub rule: QuadratureRule<S>,
}

impl<S: Scalar, P: ConvexPotential<S>> BassModel<S, P> {
    pub fn new(v: P, alpha: DiscreteMeasure<S>, rule: QuadratureRule<S>) -> Result<Self> {
        dim_check(v.dim(), alpha.dim())?;
        rule.check_dim(v.dim())?;
        Ok(Self { v, alpha, rule })
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }
}

impl<S: Scalar> BassModel<S, MaxAffine<S>> {
    /// The martingale of a solved problem, in the original coordinates.
    pub fn from_solution(sol: &BassSolution<S>) -> Result<Self> {
        Self::new(sol.v.clone(), sol.alpha.clone(), sol.quadrature.build(sol.dim())?)
    }
}

/// `π_x = ∇v(ζ(x) + ·)(γ)` for the source atom `x_i`, on the target atoms.
pub fn kernel<S: Scalar>(sol: &BassSolution<S>, i: usize) -> Result<DiscreteMeasure<S>> {
    let rule = sol.rule()?;
    let masses = sol.kernel_masses(i, &rule)?;
    let atoms = sol.nu.atoms().map(|a| a.to_vec()).collect();
    Ok(DiscreteMeasure::normalized(sol.dim(), atoms, masses)?.0)
}

/// Sampled paths of `(B, M)` on a uniform grid of `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PathEnsemble<S> {
    pub dim: usize,
    pub n_paths: usize,
    /// `0 = t_0 < … < t_K = 1`
    pub times: Vec<S>,
    /// path-major, then time, then coordinate
    pub b: Vec<S>,
    pub m: Vec<S>,
    /// `Σ_k ⟨ΔM_k, ΔB_k⟩` per path
    pub cross: Vec<S>,
    /// `Σ_k |Δ(M − B)_k|²` per path
    pub quad_var: Vec<S>,
    /// per path, the smallest weight with which `M_t`, `t < 1`, averages the
    /// target atoms (max-affine potentials only)
    pub min_weight: Option<Vec<S>>,
    pub seed: u64,
}

impl<S: Scalar> PathEnsemble<S> {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    fn offset(&self, path: usize, k: usize) -> usize {
        (path * self.times.len() + k) * self.dim
    }

    pub fn b_at(&self, path: usize, k: usize) -> &[S] {
        let o = self.offset(path, k);
        &self.b[o..o + self.dim]
    }

    pub fn m_at(&self, path: usize, k: usize) -> &[S] {
        let o = self.offset(path, k);
        &self.m[o..o + self.dim]
    }

    /// Grid index nearest to `t`.
    pub fn index_of(&self, t: S) -> usize {
        let mut best = 0;
        for (k, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    /// Empirical law of `M_{t_k}`.
    pub fn law_at(&self, k: usize) -> Result<DiscreteMeasure<S>> {
        let pts: Vec<Vec<S>> = (0..self.n_paths).map(|p| self.m_at(p, k).to_vec()).collect();
        let w = vec![S::one(); self.n_paths];
        Ok(DiscreteMeasure::normalized(self.dim, pts, w)?.0)
    }
}

/// Samples `n_paths` paths with `n_steps` uniform steps. Path `p` draws
/// from its own ChaCha8 stream `p` under `seed`, so the ensemble does not
/// depend on the worker count.
///
/// `M_1 = ∇v(B_1)` is the raw (lowest-index) subgradient; earlier times use
/// the smoothed gradient at variance `1 − t`.
pub fn sample_paths<S: Scalar, P: ConvexPotential<S>>(
    model: &BassModel<S, P>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathEnsemble<S>> {
    if n_steps < 2 {
        return Err(Error::Options(format!("need at least 2 steps, got {n_steps}")));
    }
    if n_paths == 0 {
        return Err(Error::Options("need at least one path".into()));
    }
    let d = model.dim();
    let times: Vec<S> = (0..=n_steps)
        .map(|k| S::of_usize(k) / S::of_usize(n_steps))
        .collect();
    let sd = (S::one() / S::of_usize(n_steps)).sqrt();
    let mut cum = Vec::with_capacity(model.alpha.len());
    let mut acc = 0.0;
    for &w in model.alpha.weights() {
        acc += w.to_f64_lossy();
        cum.push(acc);
    }
    // M_0 depends only on the starting atom
    let m0: Vec<Vec<S>> = model
        .alpha
        .atoms()
        .map(|a| model.v.smooth(S::one(), &model.rule, a).gradient)
        .collect();
    let stride = (n_steps + 1) * d;
    let m0_weight: Vec<Option<S>> = model
        .alpha
        .atoms()
        .map(|a| model.v.smooth_with_min_weight(S::one(), &model.rule, a).1)
        .collect();
    let per_path: Vec<(Vec<S>, Vec<S>, S, S, Option<S>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let u: f64 = rng.random::<f64>() * acc;
            let start = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            let mut b = Vec::with_capacity(stride);
            let mut m = Vec::with_capacity(stride);
            b.extend_from_slice(model.alpha.atom(start));
            m.extend_from_slice(&m0[start]);
            let (mut cross, mut qv) = (S::zero(), S::zero());
            let mut weight = m0_weight[start];
            for k in 1..=n_steps {
                let prev = (k - 1) * d;
                for c in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    b.push(b[prev + c] + sd * S::of(z));
                }
                let bk = &b[k * d..];
                let mk = if k == n_steps {
                    model.v.gradient(bk)
                } else {
                    let (s, w) = model.v.smooth_with_min_weight(S::one() - times[k], &model.rule, bk);
                    weight = match (weight, w) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        _ => None,
                    };
                    s.gradient
                };
                m.extend_from_slice(&mk);
                for c in 0..d {
                    let db = b[k * d + c] - b[prev + c];
                    let dm = m[k * d + c] - m[prev + c];
                    cross += dm * db;
                    qv += (dm - db) * (dm - db);
                }
            }
            (b, m, cross, qv, weight)
        })
        .collect();
    let mut ens = PathEnsemble {
        dim: d,
        n_paths,
        times,
        b: Vec::with_capacity(n_paths * stride),
        m: Vec::with_capacity(n_paths * stride),
        cross: Vec::with_capacity(n_paths),
        quad_var: Vec::with_capacity(n_paths),
        min_weight: Some(Vec::with_capacity(n_paths)),
        seed,
    };
    for (b, m, c, q, w) in per_path {
        ens.b.extend(b);
        ens.m.extend(m);
        ens.cross.push(c);
        ens.quad_var.push(q);
        match (&mut ens.min_weight, w) {
            (Some(all), Some(w)) => all.push(w),
            (slot, _) => *slot = None,
        }
    }
    Ok(ens)
}

fn mean_se(xs: impl ExactSizeIterator<Item = f64>) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    for x in xs {
        s += x;
        s2 += x * x;
    }
    let mean = s / n;
    let var = if n > 1.0 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// Path estimates of `P = E Σ⟨ΔM, ΔB⟩` and `MT = E Σ|Δ(M − B)|²`, and the
/// residual of `MT = d + m₂(ν) − m₂(μ) − 2P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub p_hat: f64,
    pub p_se: f64,
    pub mt_hat: f64,
    pub mt_se: f64,
    pub relation_residual: f64,
    pub relation_se: f64,
}

pub fn estimate_functionals<S: Scalar>(
    ens: &PathEnsemble<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<Functionals> {
    dim_check(ens.dim, mu.dim())?;
    dim_check(ens.dim, nu.dim())?;
    let shift = ens.dim as f64 + nu.second_moment().to_f64_lossy() - mu.second_moment().to_f64_lossy();
    let (p_hat, p_se) = mean_se(ens.cross.iter().map(|c| c.to_f64_lossy()));
    let (mt_hat, mt_se) = mean_se(ens.quad_var.iter().map(|c| c.to_f64_lossy()));
    let (rel, relation_se) = mean_se(
        ens.cross
            .iter()
            .zip(&ens.quad_var)
            .map(|(c, q)| q.to_f64_lossy() - (shift - 2.0 * c.to_f64_lossy())),
    );
    Ok(Functionals {
        p_hat,
        p_se,
        mt_hat,
        mt_se,
        relation_residual: rel.abs(),
        relation_se,
    })
}

/// Interiority of the paths in `conv(supp ν)` before the terminal time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// the target atoms affinely span the space
    pub full_span: bool,
    /// smallest margin over all paths and times `t < 1`: Euclidean distance
    /// to the boundary in dimensions 1 and 2, the largest attainable
    /// minimum barycentric weight above that
    pub min_margin: f64,
    /// smallest recorded cell weight over all paths and times `t < 1`; a
    /// positive value certifies interiority where the computed point has
    /// rounded onto the boundary
    pub min_weight: Option<f64>,
    pub violations: usize,
    /// `(path, grid index)` of the first violation
    pub first_violation: Option<(usize, usize)>,
    pub pass: bool,
}

enum Hull {
    Interval(f64, f64),
    /// counter-clockwise vertices
    Polygon(Vec<[f64; 2]>),
    Points(Vec<Vec<f64>>),
}

impl Hull {
    fn margin(&self, x: &[f64]) -> f64 {
        match self {
            Hull::Interval(lo, hi) => (x[0] - lo).min(hi - x[0]),
            Hull::Polygon(v) => {
                let mut best = f64::INFINITY;
                for k in 0..v.len() {
                    let (a, b) = (v[k], v[(k + 1) % v.len()]);
                    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
                    let len = (ex * ex + ey * ey).sqrt();
                    best = best.min((ex * (x[1] - a[1]) - ey * (x[0] - a[0])) / len);
                }
                best
            }
            Hull::Points(pts) => barycentric_depth(pts, x),
        }
    }
}

/// `max s` over `x = Σ λ_j y_j`, `Σ λ_j = 1`, `λ_j ≥ s ≥ 0`; negative when
/// `x` is outside the hull.
fn barycentric_depth(pts: &[Vec<f64>], x: &[f64]) -> f64 {
    let (n, d) = (pts.len(), x.len());
    // variables: μ_1..μ_n, s, with λ_j = μ_j + s
    let mut rows = Vec::with_capacity(d + 1);
    for c in 0..d {
        let mut r: Vec<f64> = pts.iter().map(|p| p[c]).collect();
        r.push(pts.iter().map(|p| p[c]).sum());
        rows.push(r);
    }
    let mut r = vec![1.0; n];
    r.push(n as f64);
    rows.push(r);
    let mut rhs = x.to_vec();
    rhs.push(1.0);
    match phase_one(&rows, &rhs, n + 1, 1e-12) {
        Ok(PhaseOne::Feasible(t)) => {
            let mut c = vec![0.0; n + 1];
            c[n] = 1.0;
            t.maximize(&c).map(|(v, _)| v).unwrap_or(f64::NAN)
        }
        _ => -1.0,
    }
}

fn convex_hull_2d(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

fn affine_rank(pts: &[Vec<f64>]) -> usize {
    let diffs: Vec<Vec<f64>> = pts[1..]
        .iter()
        .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| a - b).collect())
        .collect();
    crate::scalar::orthonormal_basis(&diffs, 1e-9).len()
}

/// Checks that `M_t` lies strictly inside `conv(supp ν)` for every path and
/// every grid time `t < 1`.
///
/// A point counts as a violation only if its geometric margin is not
/// positive and its path carries no positive cell-weight certificate
/// (the ensemble's weights refer to the potential's slopes, which must be
/// the atoms of `ν`).
pub fn check_boundary<S: Scalar>(ens: &PathEnsemble<S>, nu: &DiscreteMeasure<S>) -> Result<BoundaryReport> {
    dim_check(ens.dim, nu.dim())?;
    let d = ens.dim;
    let pts: Vec<Vec<f64>> = nu.atoms().map(|a| a.iter().map(|x| x.to_f64_lossy()).collect()).collect();
    let full_span = pts.len() > d && affine_rank(&pts) == d;
    if !full_span {
        return Ok(BoundaryReport {
            full_span,
            min_margin: f64::NAN,
            min_weight: None,
            violations: 0,
            first_violation: None,
            pass: true,
        });
    }
    let hull = match d {
        1 => {
            let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p[0]), h.max(p[0])));
            Hull::Interval(lo, hi)
        }
        2 => Hull::Polygon(convex_hull_2d(&pts.iter().map(|p| [p[0], p[1]]).collect::<Vec<_>>())),
        _ => Hull::Points(pts),
    };
    let k_max = ens.n_steps();
    let per_path: Vec<(f64, Option<usize>, usize)> = (0..ens.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut min = f64::INFINITY;
            let (mut first, mut count) = (None, 0);
            let mut x = vec![0.0; d];
            let certified = ens
                .min_weight
                .as_ref()
                .is_some_and(|w| w[p] > S::zero());
            for k in 0..k_max {
                for (xi, v) in x.iter_mut().zip(ens.m_at(p, k)) {
                    *xi = v.to_f64_lossy();
                }
                let margin = hull.margin(&x);
                min = min.min(margin);
                if !(margin > 0.0) && !certified {
                    count += 1;
                    first.get_or_insert(k);
                }
            }
            (min, first, count)
        })
        .collect();
    let min_margin = per_path.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let violations = per_path.iter().map(|r| r.2).sum();
    let first_violation = per_path.iter().enumerate().find_map(|(p, r)| r.1.map(|k| (p, k)));
    let min_weight = ens
        .min_weight
        .as_ref()
        .map(|w| w.iter().map(|x| x.to_f64_lossy()).fold(f64::INFINITY, f64::min));
    Ok(BoundaryReport {
        full_span,
        min_margin,
        min_weight,
        violations,
        first_violation,
        pass: violations == 0,
    })
}

/// Drift of `M_1 − M_{1/2}` within one bin of `M_{1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinDrift {
    /// coordinate of `M_{1/2}` used for binning
    pub axis: usize,
    pub bin: usize,
    pub count: usize,
    pub drift: Vec<f64>,
    pub threshold: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub n_paths: usize,
    pub overall_drift: Vec<f64>,
    pub overall_threshold: Vec<f64>,
    pub bins: Vec<BinDrift>,
    pub pass: bool,
}

/// Number of equal-count bins in [`check_martingale`].
pub const DRIFT_BINS: usize = 10;
/// Fewer paths leave too few per bin for the standard errors to be usable.
pub const MIN_DRIFT_PATHS: usize = 1000;

/// Statistical martingale test: overall drift `|mean(M_1 − M_0)|` within 3
/// standard errors, and for each coordinate axis, the drift of
/// `M_1 − M_{1/2}` inside each of [`DRIFT_BINS`] equal-count bins of that
/// coordinate of `M_{1/2}` within 4 standard errors.
pub fn check_martingale<S: Scalar>(ens: &PathEnsemble<S>) -> Result<MartingaleReport> {
    if ens.n_paths < MIN_DRIFT_PATHS {
        return Err(Error::Options(format!("{} paths are too few for a drift test", ens.n_paths)));
    }
    let d = ens.dim;
    let (k_mid, k_end) = (ens.index_of(S::of(0.5)), ens.n_steps());
    let coord = |p: usize, k: usize, c: usize| ens.m_at(p, k)[c].to_f64_lossy();
    let mut pass = true;
    let mut overall_drift = Vec::with_capacity(d);
    let mut overall_threshold = Vec::with_capacity(d);
    for c in 0..d {
        let (m, se) = mean_se((0..ens.n_paths).map(|p| coord(p, k_end, c) - coord(p, 0, c)));
        pass &= m.abs() < 3.0 * se || m == 0.0;
        overall_drift.push(m);
        overall_threshold.push(3.0 * se);
    }
    let mut bins = Vec::new();
    for axis in 0..d {
        let mut order: Vec<usize> = (0..ens.n_paths).collect();
        order.sort_by(|&a, &b| coord(a, k_mid, axis).partial_cmp(&coord(b, k_mid, axis)).unwrap());
        for bin in 0..DRIFT_BINS {
            let idx = &order[bin * ens.n_paths / DRIFT_BINS..(bin + 1) * ens.n_paths / DRIFT_BINS];
            let mut drift = Vec::with_capacity(d);
            let mut threshold = Vec::with_capacity(d);
            for c in 0..d {
                let (m, se) = mean_se(idx.iter().map(|&p| coord(p, k_end, c) - coord(p, k_mid, c)));
                pass &= m.abs() < 4.0 * se || m == 0.0;
                drift.push(m);
                threshold.push(4.0 * se);
            }
            bins.push(BinDrift {
                axis,
                bin,
                count: idx.len(),
                drift,
                threshold,
            });
        }
    }
    Ok(MartingaleReport {
        n_paths: ens.n_paths,
        overall_drift,
        overall_threshold,
        bins,
        pass,
    })
}

/// Distances from the empirical laws of `M_0` and `M_1` to `μ` and `ν`,
/// against the bound `4 n^{−1/2} (1 + m₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub initial_w2: f64,
    pub initial_bound: f64,
    /// upper bound on the terminal distance (exact in one dimension)
    pub terminal_w2: f64,
    pub terminal_w2_lower: f64,
    pub terminal_bound: f64,
    pub pass: bool,
}

pub fn check_marginals<S: Scalar>(
    ens: &PathEnsemble<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<MarginalReport> {
    let scale = 4.0 / (ens.n_paths as f64).sqrt();
    let w0 = wasserstein2_bounds(&ens.law_at(0)?, mu)?;
    let w1 = wasserstein2_bounds(&ens.law_at(ens.n_steps())?, nu)?;
    let initial_bound = scale * (1.0 + mu.second_moment().to_f64_lossy());
    let terminal_bound = scale * (1.0 + nu.second_moment().to_f64_lossy());
    let (initial_w2, terminal_w2) = (w0.upper.to_f64_lossy(), w1.upper.to_f64_lossy());
    Ok(MarginalReport {
        initial_w2,
        initial_bound,
        terminal_w2,
        terminal_w2_lower: w1.lower.to_f64_lossy(),
        terminal_bound,
        pass: initial_w2 < initial_bound && terminal_w2 < terminal_bound,
    })
}

/// Kernels of the problem restarted from the binned law of `M_{1/2}`,
/// compared with the terminal frequencies of the paths in each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConsistency {
    pub bins: usize,
    /// largest `|frequency − kernel mass| / standard error` over bins and
    /// target atoms
    pub max_z: f64,
    pub pass: bool,
}

/// Time-consistency diagnostic for one-dimensional solutions: the Bass
/// martingale from `law(M_{1/2})` to `ν` should reproduce the conditional
/// kernels of the original one. `law(M_{1/2})` is re-discretized into
/// `bins` equal-count atoms at the bin means, shifted together so that
/// their barycenter is that of `ν`.
pub fn time_consistency<S: Scalar>(
    sol: &BassSolution<S>,
    ens: &PathEnsemble<S>,
    bins: usize,
    opts: &SolverOptions,
) -> Result<TimeConsistency> {
    dim_check(1, sol.dim())?;
    dim_check(1, ens.dim)?;
    if bins < 2 || ens.n_paths < 10 * bins {
        return Err(Error::Options(format!("{} bins over {} paths", bins, ens.n_paths)));
    }
    let k_mid = ens.index_of(S::of(0.5));
    let k_end = ens.n_steps();
    let targets = sol.nu.sorted_1d();
    let slot = |y: S| -> usize {
        let i = targets.partition_point(|t| t.0 < y);
        match i {
            0 => 0,
            i if i == targets.len() => i - 1,
            i if (targets[i].0 - y).abs() < (y - targets[i - 1].0).abs() => i,
            i => i - 1,
        }
    };
    let mut order: Vec<usize> = (0..ens.n_paths).collect();
    order.sort_by(|&a, &b| ens.m_at(a, k_mid)[0].partial_cmp(&ens.m_at(b, k_mid)[0]).unwrap());
    let mut means = Vec::with_capacity(bins);
    let mut freqs = Vec::with_capacity(bins);
    let mut counts = Vec::with_capacity(bins);
    for b in 0..bins {
        let idx = &order[b * ens.n_paths / bins..(b + 1) * ens.n_paths / bins];
        let n = idx.len() as f64;
        means.push(idx.iter().map(|&p| ens.m_at(p, k_mid)[0].to_f64_lossy()).sum::<f64>() / n);
        let mut f = vec![0.0; targets.len()];
        for &p in idx {
            f[slot(ens.m_at(p, k_end)[0])] += 1.0 / n;
        }
        freqs.push(f);
        counts.push(n);
    }
    // recentre on bary(ν) so the restarted pair is in convex order
    let total = ens.n_paths as f64;
    let bary: f64 = means.iter().zip(&counts).map(|(m, c)| m * c).sum::<f64>() / total;
    let target_bary = sol.nu.barycenter()[0].to_f64_lossy();
    for m in &mut means {
        *m += target_bary - bary;
    }
    let mu_mid = DiscreteMeasure::new(
        1,
        means.iter().map(|&m| vec![S::of(m)]).collect(),
        counts.iter().map(|&c| S::of(c / total)).collect(),
    )?;
    let nu = DiscreteMeasure::new(
        1,
        targets.iter().map(|t| vec![t.0]).collect(),
        targets.iter().map(|t| t.1).collect(),
    )?;
    let restart = solve_bass_1d(mu_mid, nu, opts)?;
    let rule = restart.rule()?;
    let mut max_z: f64 = 0.0;
    for b in 0..bins {
        let masses = restart.kernel_masses(b, &rule)?;
        for (j, m) in masses.iter().enumerate() {
            let m = m.to_f64_lossy();
            let se = (m * (1.0 - m) / counts[b]).sqrt().max(1e-12);
            max_z = max_z.max((freqs[b][j] - m).abs() / se);
        }
    }
    Ok(TimeConsistency {
        bins,
        max_z,
        pass: max_z <= 3.0,
    })
}
