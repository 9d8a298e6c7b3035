//! Discrete probability measures on R^d, martingale couplings between them,
//! convex-order feasibility and the atom-pair irreducibility test.

use std::collections::HashMap;

use crate::error::{dim_check, Error, Result};
use crate::lp::{phase_one, FeasibleTableau, PhaseOne};
use crate::scalar::{dot, Scalar};

/// Residual tolerance for coupling constraints.
pub const COUPLING_TOL: f64 = 1e-9;
/// Mass above which a coupling is said to charge an atom pair.
pub const CHARGE_THRESHOLD: f64 = 1e-10;

fn weight_tol<S: Scalar>(n: usize) -> S {
    S::of(1e-12).max(S::epsilon() * S::of_usize(4 * n.max(1)))
}

fn coupling_tol<S: Scalar>() -> S {
    S::of(COUPLING_TOL).max(S::epsilon().sqrt() * S::of(4.0))
}

/// Weighted atom cloud `Σ w_i δ_{x_i}` in `R^dim`.
///
/// Weights are strictly positive and sum to one; duplicate atoms are merged
/// on construction, keeping the position of the first occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<S> {
    dim: usize,
    atoms: Vec<S>,
    weights: Vec<S>,
}

/// Barycenter and second moment of a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<S> {
    pub barycenter: Vec<S>,
    pub second_moment: S,
}

impl<S: Scalar> DiscreteMeasure<S> {
    /// Builds a measure from atoms and probabilities summing to one.
    pub fn new(dim: usize, atoms: Vec<Vec<S>>, weights: Vec<S>) -> Result<Self> {
        let m = Self::build(dim, atoms, weights)?;
        let total: S = m.weights.iter().copied().sum();
        if (total - S::one()).abs() > weight_tol::<S>(m.len()) {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(m)
    }

    /// Builds a measure from non-negative masses, dropping zero masses and
    /// rescaling the rest to total one. Returns the measure and the raw total.
    pub fn normalized(dim: usize, atoms: Vec<Vec<S>>, masses: Vec<S>) -> Result<(Self, S)> {
        if masses.iter().any(|&w| w < S::zero() || !w.is_finite()) {
            return Err(Error::InvalidMeasure("masses must be finite and non-negative".into()));
        }
        let total: S = masses.iter().copied().sum();
        if !(total > S::zero()) {
            return Err(Error::InvalidMeasure("total mass is zero".into()));
        }
        let (atoms, masses): (Vec<_>, Vec<_>) = atoms
            .into_iter()
            .zip(masses)
            .filter(|(_, w)| *w > S::zero())
            .map(|(a, w)| (a, w / total))
            .unzip();
        let mut m = Self::build(dim, atoms, masses)?;
        let s: S = m.weights.iter().copied().sum();
        for w in &mut m.weights {
            *w /= s;
        }
        Ok((m, total))
    }

    pub fn dirac(point: Vec<S>) -> Self {
        let dim = point.len();
        Self::build(dim, vec![point], vec![S::one()]).expect("single finite atom")
    }

    /// Equally weighted atoms.
    pub fn uniform(dim: usize, atoms: Vec<Vec<S>>) -> Result<Self> {
        let w = S::one() / S::of_usize(atoms.len().max(1));
        let n = atoms.len();
        Self::normalized(dim, atoms, vec![w; n]).map(|(m, _)| m)
    }

    /// One-dimensional measure from scalar atoms.
    pub fn from_1d(points: &[S], weights: &[S]) -> Result<Self> {
        Self::new(1, points.iter().map(|&p| vec![p]).collect(), weights.to_vec())
    }

    fn build(dim: usize, atoms: Vec<Vec<S>>, weights: Vec<S>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be positive".into()));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut flat = Vec::with_capacity(atoms.len() * dim);
        let mut ws: Vec<S> = Vec::with_capacity(atoms.len());
        for (a, w) in atoms.into_iter().zip(weights) {
            dim_check(dim, a.len())?;
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMeasure("non-finite coordinate".into()));
            }
            if !(w > S::zero()) || !w.is_finite() {
                return Err(Error::InvalidMeasure(format!("weight {w} is not strictly positive")));
            }
            // -0.0 and 0.0 are the same point
            let key: Vec<u64> = a
                .iter()
                .map(|&x| {
                    let x = if x == S::zero() { S::zero() } else { x };
                    x.to_f64_lossy().to_bits()
                })
                .collect();
            match seen.get(&key) {
                Some(&k) => ws[k] += w,
                None => {
                    seen.insert(key, ws.len());
                    flat.extend_from_slice(&a);
                    ws.push(w);
                }
            }
        }
        Ok(Self {
            dim,
            atoms: flat,
            weights: ws,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn atom(&self, i: usize) -> &[S] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> S {
        self.weights[i]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = &[S]> + '_ {
        self.atoms.chunks_exact(self.dim)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[S], S)> + '_ {
        self.atoms.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// Atom coordinates of a one-dimensional measure.
    pub fn points_1d(&self) -> Vec<S> {
        debug_assert_eq!(self.dim, 1);
        self.atoms.clone()
    }

    pub fn barycenter(&self) -> Vec<S> {
        let mut b = vec![S::zero(); self.dim];
        for (a, w) in self.iter() {
            for (bk, &ak) in b.iter_mut().zip(a) {
                *bk += w * ak;
            }
        }
        b
    }

    pub fn second_moment(&self) -> S {
        self.iter().map(|(a, w)| w * dot(a, a)).sum()
    }

    /// Pushes the measure through `f`, merging atoms that collide.
    pub fn map(&self, dim: usize, f: impl FnMut(&[S]) -> Vec<S>) -> Result<Self> {
        let atoms = self.atoms().map(f).collect();
        Self::normalized(dim, atoms, self.weights.clone()).map(|(m, _)| m)
    }

    /// `(atom, weight)` pairs of a 1-D measure sorted by position.
    pub fn sorted_1d(&self) -> Vec<(S, S)> {
        let mut v: Vec<(S, S)> = self.atoms.iter().copied().zip(self.weights.iter().copied()).collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        v
    }
}

/// Barycenter `Σ w_i x_i` and second moment `Σ w_i |x_i|²`.
pub fn moments<S: Scalar>(m: &DiscreteMeasure<S>) -> Moments<S> {
    Moments {
        barycenter: m.barycenter(),
        second_moment: m.second_moment(),
    }
}

/// Quadratic Wasserstein distance between two 1-D measures via the
/// comonotone (quantile) coupling.
pub fn wasserstein2_1d<S: Scalar>(p: &DiscreteMeasure<S>, q: &DiscreteMeasure<S>) -> Result<S> {
    dim_check(1, p.dim())?;
    dim_check(1, q.dim())?;
    let mut acc = S::zero();
    comonotone_walk(&p.sorted_1d(), &q.sorted_1d(), |x, y, w| acc += w * (x - y) * (x - y));
    Ok(acc.max(S::zero()).sqrt())
}

/// Two-sided bounds on the quadratic Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2Bounds<S> {
    pub lower: S,
    pub upper: S,
}

/// Bounds on `W_2(p, q)`; exact in one dimension.
///
/// Above one dimension the upper bound is the cost of the coupling that is
/// monotone along a space-filling curve (Hilbert in the plane, Morton
/// order otherwise) through both supports, and the lower bound is the
/// largest one-dimensional distance among projections onto a fixed fan of
/// unit directions. Both run in `O(n log n)`.
pub fn wasserstein2_bounds<S: Scalar>(p: &DiscreteMeasure<S>, q: &DiscreteMeasure<S>) -> Result<W2Bounds<S>> {
    dim_check(p.dim(), q.dim())?;
    let d = p.dim();
    if d == 1 {
        let w = wasserstein2_1d(p, q)?;
        return Ok(W2Bounds { lower: w, upper: w });
    }
    // curve coupling
    let mut lo = vec![S::infinity(); d];
    let mut hi = vec![S::neg_infinity(); d];
    for a in p.atoms().chain(q.atoms()) {
        for k in 0..d {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(a[k]);
        }
    }
    let bits = if d == 2 { 31 } else { (63 / d).min(31) };
    let cells = S::of_usize((1usize << bits) - 1);
    let key = |a: &[S]| -> u64 {
        let c: Vec<u64> = (0..d)
            .map(|k| {
                let span = hi[k] - lo[k];
                let u = if span > S::zero() { (a[k] - lo[k]) / span } else { S::zero() };
                (u * cells).round().to_f64_lossy() as u64
            })
            .collect();
        if d == 2 {
            hilbert_index(bits as u32, c[0], c[1])
        } else {
            morton_index(bits, &c)
        }
    };
    let order = |m: &DiscreteMeasure<S>| -> Vec<(usize, S)> {
        let mut v: Vec<(u64, usize)> = m.atoms().enumerate().map(|(i, a)| (key(a), i)).collect();
        v.sort_unstable();
        v.into_iter().map(|(_, i)| (i, m.weight(i))).collect()
    };
    let (a, b) = (order(p), order(q));
    let mut upper = S::zero();
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        let (x, y) = (p.atom(a[i].0), q.atom(b[j].0));
        upper += m * x.iter().zip(y).map(|(&u, &v)| (u - v) * (u - v)).sum::<S>();
        ra -= m;
        rb -= m;
        if ra <= S::zero() {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= S::zero() {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    // projection fan
    let mut dirs: Vec<Vec<S>> = Vec::new();
    if d == 2 {
        for k in 0..32 {
            let th = std::f64::consts::PI * k as f64 / 32.0;
            dirs.push(vec![S::of(th.cos()), S::of(th.sin())]);
        }
    } else {
        for k in 0..d {
            let mut e = vec![S::zero(); d];
            e[k] = S::one();
            dirs.push(e);
            for l in k + 1..d {
                for sgn in [S::one(), -S::one()] {
                    let mut e = vec![S::zero(); d];
                    e[k] = S::of(std::f64::consts::FRAC_1_SQRT_2);
                    e[l] = sgn * S::of(std::f64::consts::FRAC_1_SQRT_2);
                    dirs.push(e);
                }
            }
        }
    }
    let mut lower = S::zero();
    for u in &dirs {
        let pp = p.map(1, |x| vec![dot(u, x)])?;
        let qq = q.map(1, |x| vec![dot(u, x)])?;
        lower = lower.max(wasserstein2_1d(&pp, &qq)?);
    }
    let upper = upper.max(S::zero()).sqrt();
    Ok(W2Bounds {
        lower: lower.min(upper),
        upper,
    })
}

fn hilbert_index(bits: u32, mut x: u64, mut y: u64) -> u64 {
    let n = 1u64 << bits;
    let mut d = 0u64;
    let mut s = n >> 1;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = n - 1 - x;
                y = n - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s >>= 1;
    }
    d
}

fn morton_index(bits: usize, c: &[u64]) -> u64 {
    let mut key = 0u64;
    for b in (0..bits).rev() {
        for &ck in c {
            key = (key << 1) | ((ck >> b) & 1);
        }
    }
    key
}

/// Walks the comonotone coupling of two sorted weighted lists, calling
/// `f(x, y, mass)` for every cell.
pub(crate) fn comonotone_walk<S: Scalar>(a: &[(S, S)], b: &[(S, S)], mut f: impl FnMut(S, S, S)) {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    while i < a.len() && j < b.len() {
        if ra < rb {
            f(a[i].0, b[j].0, ra);
            rb -= ra;
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        } else {
            f(a[i].0, b[j].0, rb);
            ra -= rb;
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
            if ra <= S::zero() {
                i += 1;
                if i < a.len() {
                    ra = a[i].1;
                }
            }
        }
    }
}

/// Joint weights `π_ij` between a source and target measure with the
/// martingale (barycenter) constraint `Σ_j π_ij y_j = μ_i x_i`.
#[derive(Debug, Clone)]
pub struct MartingaleCoupling<S> {
    source: DiscreteMeasure<S>,
    target: DiscreteMeasure<S>,
    matrix: Vec<S>,
}

/// Maximal absolute violations of the coupling constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingResiduals<S> {
    pub rows: S,
    pub columns: S,
    pub barycenter: S,
}

impl<S: Scalar> CouplingResiduals<S> {
    pub fn max(&self) -> S {
        self.rows.max(self.columns).max(self.barycenter)
    }
}

impl<S: Scalar> MartingaleCoupling<S> {
    /// Validates marginals and barycenters to within `1e-9`.
    pub fn new(source: DiscreteMeasure<S>, target: DiscreteMeasure<S>, matrix: Vec<S>) -> Result<Self> {
        dim_check(source.dim(), target.dim())?;
        if matrix.len() != source.len() * target.len() {
            return Err(Error::InvalidMeasure("coupling matrix has wrong size".into()));
        }
        if matrix.iter().any(|&p| !(p >= S::zero())) {
            return Err(Error::InvalidMeasure("coupling has negative entries".into()));
        }
        let c = Self { source, target, matrix };
        let r = c.residuals();
        if r.max() > coupling_tol::<S>() {
            return Err(Error::InvalidMeasure(format!(
                "coupling residuals too large: rows {}, columns {}, barycenter {}",
                r.rows, r.columns, r.barycenter
            )));
        }
        Ok(c)
    }

    pub fn source(&self) -> &DiscreteMeasure<S> {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure<S> {
        &self.target
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> S {
        self.matrix[i * self.target.len() + j]
    }

    pub fn matrix(&self) -> &[S] {
        &self.matrix
    }

    pub fn residuals(&self) -> CouplingResiduals<S> {
        let (m, n, d) = (self.source.len(), self.target.len(), self.source.dim());
        let mut r = CouplingResiduals {
            rows: S::zero(),
            columns: S::zero(),
            barycenter: S::zero(),
        };
        let mut cols = vec![S::zero(); n];
        for i in 0..m {
            let mut row = S::zero();
            let mut bary = vec![S::zero(); d];
            for j in 0..n {
                let p = self.entry(i, j);
                row += p;
                cols[j] += p;
                for (bk, &yk) in bary.iter_mut().zip(self.target.atom(j)) {
                    *bk += p * yk;
                }
            }
            r.rows = r.rows.max((row - self.source.weight(i)).abs());
            for (bk, &xk) in bary.iter().zip(self.source.atom(i)) {
                r.barycenter = r.barycenter.max((*bk - self.source.weight(i) * xk).abs());
            }
        }
        for (j, c) in cols.into_iter().enumerate() {
            r.columns = r.columns.max((c - self.target.weight(j)).abs());
        }
        r
    }

    /// Disintegration kernel `π_{x_i}` as a measure on the target atoms.
    pub fn kernel(&self, i: usize) -> Result<DiscreteMeasure<S>> {
        if i >= self.source.len() {
            return Err(Error::Index { index: i, len: self.source.len() });
        }
        let n = self.target.len();
        let atoms = self.target.atoms().map(|a| a.to_vec()).collect();
        DiscreteMeasure::normalized(self.source.dim(), atoms, self.matrix[i * n..(i + 1) * n].to_vec())
            .map(|(m, _)| m)
    }
}

/// Coupling LP in variables `π_ij` (index `i·n + j`): row sums, column sums
/// and centered barycenter rows `Σ_j π_ij (y_j − x_i) = 0`.
struct CouplingLp<S> {
    rows: Vec<Vec<S>>,
    rhs: Vec<S>,
    m: usize,
    n: usize,
    d: usize,
}

impl<S: Scalar> CouplingLp<S> {
    fn new(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>) -> Self {
        let (m, n, d) = (mu.len(), nu.len(), mu.dim());
        let nv = m * n;
        let mut rows = Vec::with_capacity(m + n + m * d);
        let mut rhs = Vec::with_capacity(m + n + m * d);
        for i in 0..m {
            let mut r = vec![S::zero(); nv];
            r[i * n..(i + 1) * n].iter_mut().for_each(|v| *v = S::one());
            rows.push(r);
            rhs.push(mu.weight(i));
        }
        for j in 0..n {
            let mut r = vec![S::zero(); nv];
            for i in 0..m {
                r[i * n + j] = S::one();
            }
            rows.push(r);
            rhs.push(nu.weight(j));
        }
        for i in 0..m {
            let x = mu.atom(i);
            for k in 0..d {
                let mut r = vec![S::zero(); nv];
                for j in 0..n {
                    r[i * n + j] = nu.atom(j)[k] - x[k];
                }
                rows.push(r);
                rhs.push(S::zero());
            }
        }
        Self { rows, rhs, m, n, d }
    }

    fn describe(&self, bad_rows: &[usize]) -> String {
        let mut parts = Vec::new();
        let srcs: Vec<usize> = bad_rows.iter().filter(|&&r| r < self.m).copied().collect();
        let tgts: Vec<usize> = bad_rows
            .iter()
            .filter(|&&r| r >= self.m && r < self.m + self.n)
            .map(|r| r - self.m)
            .collect();
        let bars: Vec<usize> = bad_rows
            .iter()
            .filter(|&&r| r >= self.m + self.n)
            .map(|r| (r - self.m - self.n) / self.d)
            .collect();
        if !srcs.is_empty() {
            parts.push(format!("source marginal at atoms {srcs:?}"));
        }
        if !tgts.is_empty() {
            parts.push(format!("target marginal at atoms {tgts:?}"));
        }
        if !bars.is_empty() {
            parts.push(format!("barycenter at source atoms {bars:?}"));
        }
        if parts.is_empty() {
            parts.push("marginal and barycenter constraints".into());
        }
        parts.join("; ")
    }

    fn solve(&self) -> Result<std::result::Result<FeasibleTableau<S>, String>> {
        let tol = coupling_tol::<S>() * S::of(0.1);
        match phase_one(&self.rows, &self.rhs, self.m * self.n, tol)? {
            PhaseOne::Feasible(t) => Ok(Ok(t)),
            PhaseOne::Infeasible { rows, .. } => Ok(Err(self.describe(&rows))),
        }
    }
}

/// A feasible martingale coupling, and the optimal mass on the promoted
/// atom pair when one was requested.
#[derive(Debug, Clone)]
pub struct CouplingSearch<S> {
    pub coupling: MartingaleCoupling<S>,
    pub promoted_mass: Option<S>,
}

/// Finds a martingale coupling of `mu` and `nu`; with `promote = Some((i, j))`
/// the returned coupling maximizes `π_ij`.
pub fn find_mt_coupling<S: Scalar>(
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
    promote: Option<(usize, usize)>,
) -> Result<CouplingSearch<S>> {
    dim_check(mu.dim(), nu.dim())?;
    if let Some((i, j)) = promote {
        if i >= mu.len() {
            return Err(Error::Index { index: i, len: mu.len() });
        }
        if j >= nu.len() {
            return Err(Error::Index { index: j, len: nu.len() });
        }
    }
    let lp = CouplingLp::new(mu, nu);
    let tab = lp.solve()?.map_err(Error::Infeasible)?;
    let (x, promoted) = match promote {
        None => (tab.solution(), None),
        Some((i, j)) => {
            let mut c = vec![S::zero(); lp.m * lp.n];
            c[i * lp.n + j] = S::one();
            let (v, x) = tab.maximize(&c)?;
            (x, Some(v.max(S::zero())))
        }
    };
    let coupling = MartingaleCoupling::new(mu.clone(), nu.clone(), x)?;
    Ok(CouplingSearch {
        coupling,
        promoted_mass: promoted,
    })
}

/// Convex-order test `mu ⪯_c nu` (Strassen): a martingale coupling exists.
///
/// One-dimensional inputs use the potential-function comparison; other
/// dimensions solve the coupling LP.
pub fn check_convex_order<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>) -> Result<bool> {
    dim_check(mu.dim(), nu.dim())?;
    if mu.dim() == 1 {
        Ok(convex_order_1d(mu, nu))
    } else {
        convex_order_lp(mu, nu)
    }
}

/// LP feasibility route for the convex order, any dimension.
pub fn convex_order_lp<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>) -> Result<bool> {
    dim_check(mu.dim(), nu.dim())?;
    Ok(CouplingLp::new(mu, nu).solve()?.is_ok())
}

/// `u_m(k) = Σ w_i |x_i − k|`.
pub fn potential_1d<S: Scalar>(m: &DiscreteMeasure<S>, k: S) -> S {
    m.iter().map(|(a, w)| w * (a[0] - k).abs()).sum()
}

fn potential_scale<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>) -> S {
    mu.atoms()
        .chain(nu.atoms())
        .map(|a| a[0].abs())
        .fold(S::one(), S::max)
}

fn potential_tol<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>) -> S {
    S::of(CHARGE_THRESHOLD).max(S::epsilon() * S::of(64.0)) * potential_scale(mu, nu)
}

/// Potential-function route: equal means and `u_mu ≤ u_nu` at every atom.
pub fn convex_order_1d<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>) -> bool {
    let tol = potential_tol(mu, nu);
    if (mu.barycenter()[0] - nu.barycenter()[0]).abs() > tol {
        return false;
    }
    mu.atoms()
        .chain(nu.atoms())
        .all(|a| potential_1d(nu, a[0]) - potential_1d(mu, a[0]) >= -tol)
}

/// Result of the irreducibility test. The witness is `(source atom index,
/// target atom index)` of a pair that no martingale coupling charges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Irreducibility {
    pub irreducible: bool,
    pub witness: Option<(usize, usize)>,
}

/// Atom-pair irreducibility: every pair `(x_i, y_j)` is charged by some
/// martingale coupling. Pairs are scanned target-major, so the witness is
/// the first blocked pair in that order.
///
/// 1-D inputs use the potential-function characterization; other dimensions
/// solve one LP per pair.
pub fn check_irreducible<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>) -> Result<Irreducibility> {
    dim_check(mu.dim(), nu.dim())?;
    if mu.dim() == 1 {
        if !convex_order_1d(mu, nu) {
            return Err(Error::Infeasible("measures are not in convex order".into()));
        }
        Ok(irreducible_1d(mu, nu))
    } else {
        check_irreducible_lp(mu, nu)
    }
}

/// One LP per atom pair maximizing `π_ij`.
pub fn check_irreducible_lp<S: Scalar>(
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<Irreducibility> {
    dim_check(mu.dim(), nu.dim())?;
    let lp = CouplingLp::new(mu, nu);
    let tab = lp.solve()?.map_err(Error::Infeasible)?;
    let thr = S::of(CHARGE_THRESHOLD);
    let x0 = tab.solution();
    for j in 0..lp.n {
        for i in 0..lp.m {
            if x0[i * lp.n + j] > thr {
                continue;
            }
            let mut c = vec![S::zero(); lp.m * lp.n];
            c[i * lp.n + j] = S::one();
            let (v, _) = tab.maximize(&c)?;
            if !(v > thr) {
                return Ok(Irreducibility {
                    irreducible: false,
                    witness: Some((i, j)),
                });
            }
        }
    }
    Ok(Irreducibility {
        irreducible: true,
        witness: None,
    })
}

/// Potential-function route: the gap `u_nu − u_mu` vanishes exactly at the
/// boundaries of irreducible components. A pair is blocked when a touching
/// point separates it, or when the source atom itself sits on one.
pub fn irreducible_1d<S: Scalar>(mu: &DiscreteMeasure<S>, nu: &DiscreteMeasure<S>) -> Irreducibility {
    let tol = potential_tol(mu, nu);
    let mut touch: Vec<S> = mu
        .atoms()
        .chain(nu.atoms())
        .map(|a| a[0])
        .filter(|&k| potential_1d(nu, k) - potential_1d(mu, k) <= tol)
        .collect();
    touch.sort_by(|a, b| a.partial_cmp(b).unwrap());
    touch.dedup();
    for j in 0..nu.len() {
        let y = nu.atom(j)[0];
        for i in 0..mu.len() {
            let x = mu.atom(i)[0];
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            let separated = touch.iter().any(|&t| t > lo && t < hi);
            let pinned = x != y && touch.contains(&x);
            if separated || pinned {
                return Irreducibility {
                    irreducible: false,
                    witness: Some((i, j)),
                };
            }
        }
    }
    Irreducibility {
        irreducible: true,
        witness: None,
    }
}
