//! Convex potentials: max-of-affine functions, closed-form test potentials,
//! Legendre conjugates, Gaussian smoothing `v ∗ γ^t` and the inverse of the
//! smoothed gradient.

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{dim_check, Error, Result};
use crate::lp::{phase_one, PhaseOne};
use crate::quadrature::{gauss_legendre_01, QuadratureRule};
use crate::scalar::{dot, norm, orthonormal_basis, solve_dense, Scalar};
use crate::special;

/// Value and gradient of a smoothed potential at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed<S> {
    pub value: S,
    pub gradient: Vec<S>,
}

/// A finite convex function on R^d with an everywhere-defined gradient
/// selection.
pub trait ConvexPotential<S: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[S]) -> S;

    /// Writes a (sub)gradient at `x` into `out`.
    fn gradient_into(&self, x: &[S], out: &mut [S]);

    fn gradient(&self, x: &[S]) -> Vec<S> {
        let mut g = vec![S::zero(); self.dim()];
        self.gradient_into(x, &mut g);
        g
    }

    /// `(f ∗ γ^t)(x)` and its gradient `(∇f ∗ γ^t)(x)`. The default averages
    /// over the rule's nodes.
    fn smooth(&self, t: S, rule: &QuadratureRule<S>, x: &[S]) -> Smoothed<S> {
        smooth_by_nodes(self, t, rule, x)
    }

    /// [`smooth`](Self::smooth) together with the smallest weight with which
    /// the smoothed gradient averages the extreme gradients, for potentials
    /// with finitely many gradient values. A positive weight certifies that
    /// the smoothed gradient is interior to their hull even where rounding
    /// puts it on the boundary.
    fn smooth_with_min_weight(&self, t: S, rule: &QuadratureRule<S>, x: &[S]) -> (Smoothed<S>, Option<S>) {
        (self.smooth(t, rule, x), None)
    }

    /// `E[⟨∇f(ζ + Z), Z⟩]` for `Z ∼ γ`.
    fn gaussian_cross_moment(&self, zeta: &[S], rule: &QuadratureRule<S>) -> S {
        let mut p = vec![S::zero(); self.dim()];
        let mut g = vec![S::zero(); self.dim()];
        rule.integrate(|z| {
            for k in 0..p.len() {
                p[k] = zeta[k] + z[k];
            }
            self.gradient_into(&p, &mut g);
            dot(&g, z)
        })
    }

    /// Closed-form conjugate `f*(y)`, if known (`+∞` outside its domain).
    fn conjugate(&self, _y: &[S]) -> Option<S> {
        None
    }

    /// Rejects targets that cannot lie in the range of the smoothed gradient.
    fn check_target(&self, _x: &[S]) -> Result<()> {
        Ok(())
    }
}

/// Node-average smoothing `Σ_k w_k f(x + √t z_k)`.
pub fn smooth_by_nodes<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    f: &P,
    t: S,
    rule: &QuadratureRule<S>,
    x: &[S],
) -> Smoothed<S> {
    let d = f.dim();
    let st = t.sqrt();
    let mut p = vec![S::zero(); d];
    let mut g = vec![S::zero(); d];
    let mut out = Smoothed {
        value: S::zero(),
        gradient: vec![S::zero(); d],
    };
    for (z, w) in rule.iter() {
        for k in 0..d {
            p[k] = x[k] + st * z[k];
        }
        out.value += w * f.value(&p);
        f.gradient_into(&p, &mut g);
        for k in 0..d {
            out.gradient[k] += w * g[k];
        }
    }
    out
}

/// Gaussian smoothing `(f ∗ γ^t)(x)` with gradient `(∇f ∗ γ^t)(x)`.
pub fn gaussian_smooth<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    f: &P,
    t: S,
    rule: &QuadratureRule<S>,
    x: &[S],
) -> Result<Smoothed<S>> {
    if !(t > S::zero()) {
        return Err(Error::Options(format!("smoothing variance must be positive, got {t}")));
    }
    rule.check_dim(f.dim())?;
    dim_check(f.dim(), x.len())?;
    Ok(f.smooth(t, rule, x))
}

/// `v(x) = max_j (⟨a_j, x⟩ − c_j)`.
///
/// Gradients use the lowest-index active piece. Gaussian integrals are exact
/// along one direction `u` (Φ differences over the envelope of the restricted
/// lines) and use the quadrature rule's tail on `u⊥`, so in dimension one they
/// are exact. In the plane with a deterministic rule, the `u⊥` integral is
/// instead split at the projected vertices of the cell complex and done by
/// Gauss–Legendre panels, which is accurate to near machine precision. `u` is picked so the slopes have well-separated projections;
/// otherwise the integrated gradient would jump across the tail nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAffine<S> {
    dim: usize,
    slopes: Vec<S>,
    intercepts: Vec<S>,
    /// exact integration direction and an orthonormal basis of its complement
    axis: Vec<S>,
    complement: Vec<Vec<S>>,
    /// `⟨a_j, u⟩`
    proj: Vec<S>,
    /// pieces ordered by projection, then index
    order: Vec<usize>,
    /// cell complex in the plane, computed on first use
    planar: OnceLock<Option<Planar<S>>>,
}

/// One interval of a restricted line on which a single piece is active.
#[derive(Debug, Clone, Copy)]
struct Cell<S> {
    piece: usize,
    lo: S,
    hi: S,
}

/// Gaussian integrals of a max-affine potential at one point.
#[derive(Debug, Clone)]
pub struct GaussianIntegrals<S> {
    /// `(v ∗ γ^t)(x)`
    pub value: S,
    /// `(∇v ∗ γ^t)(x)`
    pub gradient: Vec<S>,
    /// `γ^t(x + L_j)` for every piece `j`
    pub masses: Vec<S>,
    /// `E[⟨∇v(x + √t Z), Z⟩]`
    pub cross: S,
    /// Monte Carlo standard errors of `value` and `cross` (zero for
    /// deterministic rules).
    pub value_se: S,
    pub cross_se: S,
}

impl<S: Scalar> MaxAffine<S> {
    pub fn new(dim: usize, slopes: Vec<Vec<S>>, intercepts: Vec<S>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidFunction("dimension must be positive".into()));
        }
        if slopes.is_empty() {
            return Err(Error::InvalidFunction("need at least one affine piece".into()));
        }
        if slopes.len() != intercepts.len() {
            return Err(Error::InvalidFunction(format!(
                "{} slopes but {} intercepts",
                slopes.len(),
                intercepts.len()
            )));
        }
        let mut seen = HashSet::new();
        let mut flat = Vec::with_capacity(slopes.len() * dim);
        for a in &slopes {
            dim_check(dim, a.len())?;
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidFunction("non-finite slope".into()));
            }
            let key: Vec<u64> = a
                .iter()
                .map(|&v| (if v == S::zero() { S::zero() } else { v }).to_f64_lossy().to_bits())
                .collect();
            if !seen.insert(key) {
                return Err(Error::InvalidFunction(format!("duplicate slope {a:?}")));
            }
            flat.extend_from_slice(a);
        }
        if intercepts.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidFunction("non-finite intercept".into()));
        }
        let axis = integration_axis(dim, &flat);
        let mut frame = vec![axis.clone()];
        for k in 0..dim {
            let mut e = vec![S::zero(); dim];
            e[k] = S::one();
            frame.push(e);
        }
        let complement: Vec<Vec<S>> = orthonormal_basis(&frame, S::of(1e-6)).into_iter().skip(1).collect();
        let proj: Vec<S> = flat.chunks_exact(dim).map(|a| dot(a, &axis)).collect();
        let mut order: Vec<usize> = (0..slopes.len()).collect();
        order.sort_by(|&i, &j| proj[i].partial_cmp(&proj[j]).unwrap().then(i.cmp(&j)));
        Ok(Self {
            dim,
            slopes: flat,
            intercepts,
            axis,
            complement,
            proj,
            order,
            planar: OnceLock::new(),
        })
    }

    /// Direction along which Gaussian integrals are exact.
    pub fn integration_axis(&self) -> &[S] {
        &self.axis
    }

    pub fn from_1d(slopes: &[S], intercepts: &[S]) -> Result<Self> {
        Self::new(1, slopes.iter().map(|&a| vec![a]).collect(), intercepts.to_vec())
    }

    #[inline]
    pub fn n_pieces(&self) -> usize {
        self.intercepts.len()
    }

    #[inline]
    pub fn slope(&self, j: usize) -> &[S] {
        &self.slopes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn slopes(&self) -> impl ExactSizeIterator<Item = &[S]> + '_ {
        self.slopes.chunks_exact(self.dim)
    }

    #[inline]
    pub fn intercept(&self, j: usize) -> S {
        self.intercepts[j]
    }

    pub fn intercepts(&self) -> &[S] {
        &self.intercepts
    }

    /// Same slopes, new intercepts.
    pub fn with_intercepts(&self, intercepts: Vec<S>) -> Result<Self> {
        if intercepts.len() != self.n_pieces() {
            return Err(Error::InvalidFunction("intercept count changed".into()));
        }
        Ok(Self {
            intercepts,
            planar: OnceLock::new(),
            ..self.clone()
        })
    }

    /// Shifts intercepts so that `Σ_j w_j c_j = 0`.
    pub fn regauge(&mut self, weights: &[S]) {
        let s: S = weights.iter().zip(&self.intercepts).map(|(&w, &c)| w * c).sum();
        let tw: S = weights.iter().copied().sum();
        let shift = s / tw;
        for c in &mut self.intercepts {
            *c -= shift;
        }
    }

    /// `v(· − b)`: intercepts become `c_j + ⟨a_j, b⟩`.
    pub fn translate(&mut self, b: &[S]) {
        for j in 0..self.n_pieces() {
            let s = dot(self.slope(j), b);
            self.intercepts[j] += s;
        }
        self.planar = OnceLock::new();
    }

    /// Offsets `w` along `u⊥` where the line integrand is not smooth at unit
    /// scale: projected vertices, and points where an edge crosses a few
    /// levels of `s` (steep Φ transitions between nearly parallel lines).
    fn panel_breaks(&self, planar: &Planar<S>, st: S, x: &[S]) -> Vec<S> {
        let e = &self.complement[0];
        let mut out: Vec<S> = planar
            .vertices
            .iter()
            .map(|p| ((p[0] - x[0]) * e[0] + (p[1] - x[1]) * e[1]) / st)
            .collect();
        for &(i, j) in &planar.edges {
            let (ai, aj) = (self.slope(i), self.slope(j));
            let da = [ai[0] - aj[0], ai[1] - aj[1]];
            let dp = self.proj[i] - self.proj[j];
            let de = da[0] * e[0] + da[1] * e[1];
            if de.abs() <= dp.abs() * S::of(0.5) {
                continue;
            }
            // s·dp + w·de = r on the tie line
            let r = (self.intercepts[i] - self.intercepts[j] - da[0] * x[0] - da[1] * x[1]) / st;
            for &lvl in &EDGE_LEVELS {
                out.push((r - S::of(lvl) * dp) / de);
            }
        }
        out
    }

    /// Vertices and edges of the cell complex in the plane. `None` outside
    /// dimension two or above [`VERTEX_PIECE_LIMIT`] pieces.
    fn planar(&self) -> Option<&Planar<S>> {
        self.planar
            .get_or_init(|| {
                let n = self.n_pieces();
                if self.dim != 2 || n > VERTEX_PIECE_LIMIT {
                    return None;
                }
                let scale = self.slopes.iter().fold(S::one(), |m, v| m.max(v.abs()));
                let cmax = self.intercepts.iter().fold(S::one(), |m, v| m.max(v.abs()));
                let mut out = Planar {
                    vertices: Vec::new(),
                    edges: Vec::new(),
                };
                for i in 0..n {
                    for j in i + 1..n {
                        if self.adjacent(i, j, scale, cmax) {
                            out.edges.push((i, j));
                        }
                        for k in j + 1..n {
                            let (ai, aj, ak) = (self.slope(i), self.slope(j), self.slope(k));
                            let (m00, m01) = (ai[0] - aj[0], ai[1] - aj[1]);
                            let (m10, m11) = (ai[0] - ak[0], ai[1] - ak[1]);
                            let det = m00 * m11 - m01 * m10;
                            if det.abs() <= S::epsilon() * S::of(64.0) * scale * scale {
                                continue;
                            }
                            let r0 = self.intercepts[i] - self.intercepts[j];
                            let r1 = self.intercepts[i] - self.intercepts[k];
                            let p = [(r0 * m11 - m01 * r1) / det, (m00 * r1 - r0 * m10) / det];
                            let top = self.piece_value(i, &p);
                            let tol = S::of(1e-9) * (cmax + scale * (p[0].abs() + p[1].abs()));
                            if (0..n).all(|l| self.piece_value(l, &p) <= top + tol) {
                                out.vertices.push(p);
                            }
                        }
                    }
                }
                Some(out)
            })
            .as_ref()
    }

    /// Whether pieces `i` and `j` are both maximal somewhere on their tie line.
    fn adjacent(&self, i: usize, j: usize, scale: S, cmax: S) -> bool {
        let (ai, aj) = (self.slope(i), self.slope(j));
        let da = [ai[0] - aj[0], ai[1] - aj[1]];
        let nn = da[0] * da[0] + da[1] * da[1];
        let dc = self.intercepts[i] - self.intercepts[j];
        let p0 = [dc * da[0] / nn, dc * da[1] / nn];
        let dir = [-da[1], da[0]];
        let (mut lo, mut hi) = (S::neg_infinity(), S::infinity());
        let tol = S::of(1e-9) * (cmax + scale * (p0[0].abs() + p0[1].abs()));
        for k in 0..self.n_pieces() {
            if k == i || k == j {
                continue;
            }
            // piece i minus piece k along the line must stay ≥ 0
            let ak = self.slope(k);
            let g = (ai[0] - ak[0]) * dir[0] + (ai[1] - ak[1]) * dir[1];
            let h = self.piece_value(i, &p0) - self.piece_value(k, &p0) + tol;
            if g.abs() <= S::epsilon() * scale * scale {
                if h < S::zero() {
                    return false;
                }
            } else if g > S::zero() {
                lo = lo.max(-h / g);
            } else {
                hi = hi.min(-h / g);
            }
        }
        lo <= hi
    }

    #[inline]
    pub fn piece_value(&self, j: usize, x: &[S]) -> S {
        dot(self.slope(j), x) - self.intercepts[j]
    }

    /// Lowest-index maximizer of `⟨a_j, x⟩ − c_j`.
    pub fn active_piece(&self, x: &[S]) -> usize {
        let mut best = 0;
        let mut bv = self.piece_value(0, x);
        for j in 1..self.n_pieces() {
            let v = self.piece_value(j, x);
            if v > bv {
                best = j;
                bv = v;
            }
        }
        best
    }

    /// Dimension of the affine hull of the slopes.
    pub fn affine_rank(&self) -> usize {
        let a0 = self.slope(0);
        let diffs: Vec<Vec<S>> = self
            .slopes()
            .skip(1)
            .map(|a| a.iter().zip(a0).map(|(&x, &y)| x - y).collect())
            .collect();
        orthonormal_basis(&diffs, S::epsilon().sqrt()).len()
    }

    /// Envelope of the restricted lines `s ↦ v(base + scale·s·u)`.
    fn line_cells(&self, base: &[S], scale: S, q: &mut Vec<S>, cells: &mut Vec<Cell<S>>) {
        let n = self.n_pieces();
        q.clear();
        q.extend((0..n).map(|j| self.piece_value(j, base)));
        let p = |j: usize| scale * self.proj[j];
        let mut st: Vec<usize> = Vec::with_capacity(n);
        for &j in &self.order {
            if let Some(&top) = st.last() {
                if p(top) == p(j) {
                    if q[j] <= q[top] {
                        continue;
                    }
                    st.pop();
                }
            }
            while st.len() >= 2 {
                let l1 = st[st.len() - 2];
                let l2 = st[st.len() - 1];
                let x12 = (q[l1] - q[l2]) / (p(l2) - p(l1));
                let x1j = (q[l1] - q[j]) / (p(j) - p(l1));
                if x1j <= x12 {
                    st.pop();
                } else {
                    break;
                }
            }
            st.push(j);
        }
        cells.clear();
        let mut lo = S::neg_infinity();
        for k in 0..st.len() {
            let j = st[k];
            let hi = if k + 1 < st.len() {
                let j2 = st[k + 1];
                (q[j] - q[j2]) / (p(j2) - p(j))
            } else {
                S::infinity()
            };
            if hi > lo {
                cells.push(Cell { piece: j, lo, hi });
                lo = hi;
            }
        }
    }

    /// Value, gradient, cell masses and cross moment of `v` under `γ^t`
    /// centered at `x`.
    pub fn gaussian_integrals(&self, t: S, rule: &QuadratureRule<S>, x: &[S]) -> GaussianIntegrals<S> {
        let d = self.dim;
        let st = t.sqrt();
        let mut out = GaussianIntegrals {
            value: S::zero(),
            gradient: vec![S::zero(); d],
            masses: vec![S::zero(); self.n_pieces()],
            cross: S::zero(),
            value_se: S::zero(),
            cross_se: S::zero(),
        };
        let mut base = x.to_vec();
        let mut offset = vec![S::zero(); d];
        let mut q = Vec::with_capacity(self.n_pieces());
        let mut cells = Vec::with_capacity(self.n_pieces());
        let (mut v2, mut c2) = (S::zero(), S::zero());
        let mut node = |w: &[S], omega: S| {
            offset.iter_mut().for_each(|o| *o = S::zero());
            for (wk, e) in w.iter().zip(&self.complement) {
                for k in 0..d {
                    offset[k] += *wk * e[k];
                }
            }
            for k in 0..d {
                base[k] = x[k] + st * offset[k];
            }
            self.line_cells(&base, st, &mut q, &mut cells);
            let (mut hv, mut hc) = (S::zero(), S::zero());
            for c in &cells {
                let a = self.slope(c.piece);
                let pr = self.proj[c.piece];
                let mass = special::interval_mass(c.lo, c.hi);
                let first = special::pdf(c.lo) - special::pdf(c.hi);
                hv += q[c.piece] * mass + st * pr * first;
                hc += pr * first + dot(a, &offset) * mass;
                out.masses[c.piece] += omega * mass;
                for k in 0..d {
                    out.gradient[k] += omega * mass * a[k];
                }
            }
            out.value += omega * hv;
            out.cross += omega * hc;
            v2 += omega * hv * hv;
            c2 += omega * hc * hc;
        };
        match (d == 2 && !rule.is_monte_carlo(), self.planar()) {
            (true, Some(planar)) => {
                for (w, omega) in segmented_normal_nodes(self.panel_breaks(planar, st, x)) {
                    node(&[w], omega);
                }
            }
            _ => {
                for (w, omega) in rule.tail() {
                    node(w, omega);
                }
            }
        }
        if rule.is_monte_carlo() && d > 1 {
            let n = S::of_usize(rule.tail_len());
            out.value_se = ((v2 - out.value * out.value).max(S::zero()) / n).sqrt();
            out.cross_se = ((c2 - out.cross * out.cross).max(S::zero()) / n).sqrt();
        }
        out
    }
}

impl<S: Scalar> ConvexPotential<S> for MaxAffine<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[S]) -> S {
        (0..self.n_pieces())
            .map(|j| self.piece_value(j, x))
            .fold(S::neg_infinity(), S::max)
    }

    fn gradient_into(&self, x: &[S], out: &mut [S]) {
        out.copy_from_slice(self.slope(self.active_piece(x)));
    }

    fn smooth(&self, t: S, rule: &QuadratureRule<S>, x: &[S]) -> Smoothed<S> {
        self.smooth_with_min_weight(t, rule, x).0
    }

    fn smooth_with_min_weight(&self, t: S, rule: &QuadratureRule<S>, x: &[S]) -> (Smoothed<S>, Option<S>) {
        let g = self.gaussian_integrals(t, rule, x);
        let min = g.masses.iter().copied().fold(S::infinity(), S::min);
        let s = Smoothed {
            value: g.value,
            gradient: g.gradient,
        };
        (s, Some(min))
    }

    fn gaussian_cross_moment(&self, zeta: &[S], rule: &QuadratureRule<S>) -> S {
        self.gaussian_integrals(S::one(), rule, zeta).cross
    }

    fn conjugate(&self, y: &[S]) -> Option<S> {
        Some(conjugate_at(self, y))
    }

    fn check_target(&self, x: &[S]) -> Result<()> {
        dim_check(self.dim, x.len())?;
        let rank = self.affine_rank();
        if rank < self.dim {
            return Err(Error::Rank { dim: self.dim, rank });
        }
        if self.dim == 1 {
            let (lo, hi) = self
                .slopes
                .iter()
                .fold((S::infinity(), S::neg_infinity()), |(l, h), &a| (l.min(a), h.max(a)));
            if !(x[0] > lo && x[0] < hi) {
                return Err(Error::OutOfRange(vec![x[0].to_f64_lossy()]));
            }
        }
        Ok(())
    }
}

/// Pieces above which planar integrals fall back to the rule's tail.
pub const VERTEX_PIECE_LIMIT: usize = 64;
const SEGMENT_ORDER: usize = 10;
const EDGE_LEVELS: [f64; 9] = [-6.0, -3.0, -1.5, -0.5, 0.0, 0.5, 1.5, 3.0, 6.0];

/// Vertices and adjacent piece pairs of a planar max-affine cell complex.
#[derive(Debug, Clone, PartialEq)]
struct Planar<S> {
    vertices: Vec<[S; 2]>,
    edges: Vec<(usize, usize)>,
}
const FIXED_BREAKS: [f64; 13] = [-8.0, -6.0, -4.5, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.5, 6.0, 8.0];

fn legendre_nodes() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre_01(SEGMENT_ORDER))
}

/// Standard normal nodes and weights from Gauss–Legendre panels split at
/// `kinks`, so each panel sees a smooth integrand. The two unbounded panels
/// beyond ±8 use the probability scale.
fn segmented_normal_nodes<S: Scalar>(mut kinks: Vec<S>) -> Vec<(S, S)> {
    let edge = S::of(8.0);
    kinks.retain(|k| k.is_finite() && k.abs() < edge);
    kinks.extend(FIXED_BREAKS.iter().map(|&b| S::of(b)));
    kinks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    kinks.dedup_by(|a, b| (*a - *b).abs() <= S::epsilon() * S::of(16.0));
    let (gx, gw) = legendre_nodes();
    let mut out = Vec::with_capacity((kinks.len() + 1) * SEGMENT_ORDER);
    for (&x, &w) in gx.iter().zip(gw) {
        let m = special::cdf(-edge);
        let z = special::quantile(m * S::of(x));
        out.push((z, m * S::of(w)));
        out.push((-z, m * S::of(w)));
    }
    for p in kinks.windows(2) {
        let width = p[1] - p[0];
        for (&x, &w) in gx.iter().zip(gw) {
            let z = p[0] + width * S::of(x);
            out.push((z, width * S::of(w) * special::pdf(z)));
        }
    }
    out
}

/// Smallest gap between sorted projections of the slopes on `u`.
fn projection_gap<S: Scalar>(dim: usize, slopes: &[S], u: &[S]) -> S {
    let mut p: Vec<S> = slopes.chunks_exact(dim).map(|a| dot(a, u)).collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.windows(2).map(|w| w[1] - w[0]).fold(S::infinity(), S::min)
}

/// `e₁` unless some fixed generic direction separates the slope projections
/// clearly better.
fn integration_axis<S: Scalar>(dim: usize, slopes: &[S]) -> Vec<S> {
    let mut e1 = vec![S::zero(); dim];
    e1[0] = S::one();
    if dim == 1 {
        return e1;
    }
    let base_gap = projection_gap(dim, slopes, &e1);
    let mut best = (base_gap, e1);
    for &r in &[0.618_033_988_749_895, 0.414_213_562_373_095, 0.732_050_807_568_877, 0.302_775_637_731_995] {
        let mut u: Vec<S> = (0..dim).map(|k| S::of(f64::powi(r, k as i32))).collect();
        let n = norm(&u);
        u.iter_mut().for_each(|v| *v /= n);
        let gap = projection_gap(dim, slopes, &u);
        if gap > best.0 {
            best = (gap, u);
        }
    }
    if best.0 > S::of(2.0) * base_gap {
        best.1
    } else {
        let mut e1 = vec![S::zero(); dim];
        e1[0] = S::one();
        e1
    }
}

/// Subgradient of `v` at `x`: slope of the lowest-index active piece.
pub fn eval_subgradient<S: Scalar>(v: &MaxAffine<S>, x: &[S]) -> Vec<S> {
    v.slope(v.active_piece(x)).to_vec()
}

/// Lower convex envelope of the points `(a_j, c_j)` of a 1-D max-affine
/// function; its graph is the conjugate `v*`.
#[derive(Debug, Clone)]
pub struct ConjugateEnvelope1d<S> {
    hull: Vec<(S, S)>,
}

impl<S: Scalar> ConjugateEnvelope1d<S> {
    pub fn new(v: &MaxAffine<S>) -> Self {
        assert_eq!(v.dim, 1, "1-D envelope of a {}-D function", v.dim);
        let mut pts: Vec<(S, S)> = (0..v.n_pieces()).map(|j| (v.slopes[j], v.intercepts[j])).collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut hull: Vec<(S, S)> = Vec::with_capacity(pts.len());
        for p in pts {
            while hull.len() >= 2 {
                let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
                if cross <= S::zero() {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        Self { hull }
    }

    pub fn eval(&self, y: S) -> S {
        let h = &self.hull;
        if y < h[0].0 || y > h[h.len() - 1].0 {
            return S::infinity();
        }
        let k = h.partition_point(|p| p.0 < y);
        if k < h.len() && h[k].0 == y {
            return h[k].1;
        }
        let (l, r) = (h[k - 1], h[k]);
        let lam = (y - l.0) / (r.0 - l.0);
        l.1 + lam * (r.1 - l.1)
    }
}

/// `v*(y) = min{Σ λ_j c_j : Σ λ_j a_j = y, λ ∈ Δ}`, `+∞` off the slope hull.
pub fn conjugate_at<S: Scalar>(v: &MaxAffine<S>, y: &[S]) -> S {
    if v.dim == 1 {
        ConjugateEnvelope1d::new(v).eval(y[0])
    } else {
        conjugate_at_lp(v, y)
    }
}

/// Envelope-LP route for the conjugate, any dimension.
pub fn conjugate_at_lp<S: Scalar>(v: &MaxAffine<S>, y: &[S]) -> S {
    let n = v.n_pieces();
    let mut rows = Vec::with_capacity(v.dim + 1);
    let mut rhs = Vec::with_capacity(v.dim + 1);
    for k in 0..v.dim {
        rows.push((0..n).map(|j| v.slopes[j * v.dim + k] - y[k]).collect());
        rhs.push(S::zero());
    }
    rows.push(vec![S::one(); n]);
    rhs.push(S::one());
    let tol = S::of(1e-10).max(S::epsilon().sqrt());
    match phase_one(&rows, &rhs, n, tol) {
        Ok(PhaseOne::Feasible(t)) => {
            let c: Vec<S> = v.intercepts.iter().map(|&c| -c).collect();
            match t.maximize(&c) {
                Ok((val, _)) => -val,
                Err(_) => S::infinity(),
            }
        }
        _ => S::infinity(),
    }
}

type ScalarField<S> = Arc<dyn Fn(&[S]) -> S + Send + Sync>;
type VectorField<S> = Arc<dyn Fn(&[S], &mut [S]) + Send + Sync>;
type SmoothingFn<S> = Arc<dyn Fn(S, &[S]) -> Smoothed<S> + Send + Sync>;

/// Convex potential given by closed-form evaluation and gradient maps, with
/// optional closed-form conjugate and Gaussian smoothing.
#[derive(Clone)]
pub struct AnalyticConvex<S> {
    name: String,
    dim: usize,
    value: ScalarField<S>,
    gradient: VectorField<S>,
    conjugate: Option<ScalarField<S>>,
    smoothing: Option<SmoothingFn<S>>,
}

impl<S> fmt::Debug for AnalyticConvex<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticConvex")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("conjugate", &self.conjugate.is_some())
            .field("smoothing", &self.smoothing.is_some())
            .finish()
    }
}

impl<S: Scalar> AnalyticConvex<S> {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&[S]) -> S + Send + Sync + 'static,
        gradient: impl Fn(&[S], &mut [S]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            conjugate: None,
            smoothing: None,
        }
    }

    pub fn with_conjugate(mut self, f: impl Fn(&[S]) -> S + Send + Sync + 'static) -> Self {
        self.conjugate = Some(Arc::new(f));
        self
    }

    pub fn with_smoothing(mut self, f: impl Fn(S, &[S]) -> Smoothed<S> + Send + Sync + 'static) -> Self {
        self.smoothing = Some(Arc::new(f));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `|x|²/2`, self-conjugate; smoothing is `(|x|² + t·d)/2`.
    pub fn quadratic(dim: usize) -> Self {
        let half = S::of(0.5);
        Self::new(
            "quadratic",
            dim,
            move |x| half * dot(x, x),
            |x, g| g.copy_from_slice(x),
        )
        .with_conjugate(move |y| half * dot(y, y))
        .with_smoothing(move |t, x| Smoothed {
            value: half * (dot(x, x) + t * S::of_usize(x.len())),
            gradient: x.to_vec(),
        })
    }

    /// `z·arctan z − ½ log(1 + z²)` on R, with derivative `arctan` and
    /// conjugate `−log cos y` on `(−π/2, π/2)`.
    pub fn arctan() -> Self {
        let half = S::of(0.5);
        Self::new(
            "arctan",
            1,
            move |x| x[0] * x[0].atan() - half * (S::one() + x[0] * x[0]).ln(),
            |x, g| g[0] = x[0].atan(),
        )
        .with_conjugate(|y| {
            if y[0].abs() < S::of(std::f64::consts::FRAC_PI_2) {
                -y[0].cos().ln()
            } else {
                S::infinity()
            }
        })
    }

    /// Radial `h(|x|)` with `h(0) = 0`, slope `inner` on `[0, kink]` and
    /// `outer ≥ inner` beyond; the gradient is `h'(|x|)·x/|x|` (zero at the
    /// origin).
    pub fn radial_two_slope(dim: usize, inner: S, outer: S, kink: S) -> Self {
        Self::new(
            "radial-two-slope",
            dim,
            move |x| {
                let r = norm(x);
                if r <= kink {
                    inner * r
                } else {
                    inner * kink + outer * (r - kink)
                }
            },
            move |x, g| {
                let r = norm(x);
                if r == S::zero() {
                    g.iter_mut().for_each(|v| *v = S::zero());
                    return;
                }
                let s = if r < kink { inner } else { outer } / r;
                for (gk, &xk) in g.iter_mut().zip(x) {
                    *gk = s * xk;
                }
            },
        )
    }
}

impl<S: Scalar> ConvexPotential<S> for AnalyticConvex<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[S]) -> S {
        (self.value)(x)
    }

    fn gradient_into(&self, x: &[S], out: &mut [S]) {
        (self.gradient)(x, out)
    }

    fn smooth(&self, t: S, rule: &QuadratureRule<S>, x: &[S]) -> Smoothed<S> {
        match &self.smoothing {
            Some(f) => f(t, x),
            None => smooth_by_nodes(self, t, rule, x),
        }
    }

    fn conjugate(&self, y: &[S]) -> Option<S> {
        self.conjugate.as_ref().map(|f| f(y))
    }
}

/// Newton iteration limit of the inverse.
pub const INVERSE_MAX_ITER: usize = 60;
const ARMIJO: f64 = 1e-4;

fn divergence_bound<S: Scalar>(x: &[S]) -> S {
    S::of(50.0) * (S::one() + norm(x))
}

fn fd_step<S: Scalar>(z: S) -> S {
    S::epsilon().cbrt() * (S::one() + z.abs())
}

/// Solves `(∇v ∗ γ)(ζ) = x` for `ζ`, i.e. `ζ = ∇(v ∗ γ)*(x)`.
pub fn smoothed_grad_inverse<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    x: &[S],
    rule: &QuadratureRule<S>,
    tol: S,
) -> Result<Vec<S>> {
    smoothed_grad_inverse_from(v, x, rule, tol, None)
}

/// As [`smoothed_grad_inverse`], warm-started at `start` (defaults to `x`).
///
/// Maximizes the strictly concave `ζ ↦ ⟨ζ, x⟩ − (v ∗ γ)(ζ)`: bracketed
/// Newton in one dimension, damped Newton with finite-difference Hessian
/// and Armijo backtracking otherwise. Iterates leaving the ball of radius
/// `50·(1 + |x|)` signal a target outside the range.
pub fn smoothed_grad_inverse_from<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    x: &[S],
    rule: &QuadratureRule<S>,
    tol: S,
    start: Option<&[S]>,
) -> Result<Vec<S>> {
    dim_check(v.dim(), x.len())?;
    rule.check_dim(v.dim())?;
    v.check_target(x)?;
    let z0 = start.map(|s| s.to_vec()).unwrap_or_else(|| x.to_vec());
    dim_check(v.dim(), z0.len())?;
    if v.dim() == 1 {
        inverse_1d(v, x[0], rule, tol, z0[0]).map(|z| vec![z])
    } else {
        inverse_nd(v, x, rule, tol, z0)
    }
}

fn inverse_1d<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    x: S,
    rule: &QuadratureRule<S>,
    tol: S,
    z0: S,
) -> Result<S> {
    let g = |z: S| v.smooth(S::one(), rule, &[z]).gradient[0];
    let bound = divergence_bound(&[x]);
    let out = || Error::OutOfRange(vec![x.to_f64_lossy()]);
    let mut z = z0;
    let gz = g(z);
    if (gz - x).abs() <= tol {
        return Ok(z);
    }
    // bracket the root
    let (mut lo, mut hi);
    let mut step = S::one();
    if gz < x {
        lo = z;
        loop {
            hi = lo + step;
            if hi.abs() > bound {
                return Err(out());
            }
            if g(hi) >= x {
                break;
            }
            lo = hi;
            step = step + step;
        }
    } else {
        hi = z;
        loop {
            lo = hi - step;
            if lo.abs() > bound {
                return Err(out());
            }
            if g(lo) <= x {
                break;
            }
            hi = lo;
            step = step + step;
        }
    }
    z = S::of(0.5) * (lo + hi);
    let mut best = (S::infinity(), z);
    for _ in 0..200 {
        let r = g(z) - x;
        if r.abs() < best.0 {
            best = (r.abs(), z);
        }
        if r.abs() <= tol {
            return Ok(z);
        }
        if r < S::zero() {
            lo = z;
        } else {
            hi = z;
        }
        let h = fd_step(z);
        let d = (g(z + h) - g(z - h)) / (h + h);
        let newton = z - r / d;
        z = if d > S::zero() && newton > lo && newton < hi {
            newton
        } else {
            S::of(0.5) * (lo + hi)
        };
        if hi - lo <= S::epsilon() * S::of(4.0) * (S::one() + z.abs()) {
            break;
        }
    }
    Err(Error::MaxIterations {
        iterations: 200,
        marginal_residual: 0.0,
        barycenter_residual: best.0.to_f64_lossy(),
    })
}

fn inverse_nd<S: Scalar, P: ConvexPotential<S> + ?Sized>(
    v: &P,
    x: &[S],
    rule: &QuadratureRule<S>,
    tol: S,
    mut z: Vec<S>,
) -> Result<Vec<S>> {
    let d = x.len();
    let bound = divergence_bound(x);
    let objective = |s: &Smoothed<S>, z: &[S]| dot(z, x) - s.value;
    let mut cur = v.smooth(S::one(), rule, &z);
    let mut res = S::infinity();
    for _ in 0..INVERSE_MAX_ITER {
        let r: Vec<S> = x.iter().zip(&cur.gradient).map(|(&a, &b)| a - b).collect();
        res = r.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        if res <= tol {
            return Ok(z);
        }
        // finite-difference Hessian of the smoothed value
        let mut hess = vec![S::zero(); d * d];
        let mut zp = z.clone();
        for k in 0..d {
            let h = fd_step(z[k]);
            zp[k] = z[k] + h;
            let gp = v.smooth(S::one(), rule, &zp).gradient;
            zp[k] = z[k] - h;
            let gm = v.smooth(S::one(), rule, &zp).gradient;
            zp[k] = z[k];
            for i in 0..d {
                hess[i * d + k] = (gp[i] - gm[i]) / (h + h);
            }
        }
        for i in 0..d {
            for k in 0..i {
                let s = S::of(0.5) * (hess[i * d + k] + hess[k * d + i]);
                hess[i * d + k] = s;
                hess[k * d + i] = s;
            }
        }
        let trace = (0..d).map(|i| hess[i * d + i].abs()).fold(S::zero(), |a, b| a + b);
        let mut lambda = S::zero();
        let dir = loop {
            let mut m = hess.clone();
            for i in 0..d {
                m[i * d + i] += lambda;
            }
            if let Some(step) = solve_dense(m, r.clone()) {
                if dot(&step, &r) > S::zero() {
                    break step;
                }
            }
            lambda = if lambda == S::zero() {
                S::of(1e-10) * (trace + S::epsilon())
            } else {
                lambda * S::of(100.0)
            };
            if !lambda.is_finite() || lambda > S::of(1e30) {
                break r.clone();
            }
        };
        let f0 = objective(&cur, &z);
        let slope = dot(&dir, &r);
        let mut step = S::one();
        let mut accepted = false;
        for _ in 0..60 {
            let zn: Vec<S> = z.iter().zip(&dir).map(|(&a, &b)| a + step * b).collect();
            let sn = v.smooth(S::one(), rule, &zn);
            if objective(&sn, &zn) >= f0 + S::of(ARMIJO) * step * slope {
                z = zn;
                cur = sn;
                accepted = true;
                break;
            }
            step *= S::of(0.5);
        }
        if norm(&z) > bound {
            return Err(Error::OutOfRange(x.iter().map(|v| v.to_f64_lossy()).collect()));
        }
        if !accepted {
            break;
        }
    }
    if norm(&z) > bound {
        return Err(Error::OutOfRange(x.iter().map(|v| v.to_f64_lossy()).collect()));
    }
    Err(Error::MaxIterations {
        iterations: INVERSE_MAX_ITER,
        marginal_residual: 0.0,
        barycenter_residual: res.to_f64_lossy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn abs1() -> MaxAffine<f64> {
        MaxAffine::from_1d(&[-1.0, 1.0], &[0.0, 0.0]).unwrap()
    }

    fn square2() -> MaxAffine<f64> {
        MaxAffine::new(
            2,
            vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]],
            vec![0.0; 4],
        )
        .unwrap()
    }

    /// E|x + √t Z| in closed form.
    fn folded_mean(x: f64, t: f64) -> f64 {
        let s = t.sqrt();
        x * (2.0 * special::cdf_f64(x / s) - 1.0) + 2.0 * s * special::pdf_f64(x / s)
    }

    fn gh(dim: usize, n: usize) -> QuadratureRule<f64> {
        QuadratureRule::gauss_hermite(dim, n).unwrap()
    }

    #[test]
    fn construction_rules() {
        assert!(MaxAffine::<f64>::from_1d(&[], &[]).is_err());
        assert!(MaxAffine::from_1d(&[1.0, 1.0], &[0.0, 2.0]).is_err());
        assert!(MaxAffine::from_1d(&[1.0], &[0.0, 2.0]).is_err());
        assert!(MaxAffine::new(2, vec![vec![1.0]], vec![0.0]).is_err());
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(conjugate_at(&abs1(), &[0.3]), 0.0);
        let v = MaxAffine::<f64>::from_1d(&[1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert!((conjugate_at(&v, &[0.5]) - 1.0).abs() < 1e-12);
        assert!((conjugate_at_lp(&v, &[0.5]) - 1.0).abs() < 1e-12);
        assert!(conjugate_at(&v, &[1.5]).is_infinite());
        assert!(conjugate_at_lp(&v, &[1.5]).is_infinite());
        assert!(conjugate_at(&square2(), &[0.0, 0.0]).abs() < 1e-12);
        assert!(conjugate_at(&square2(), &[1.0, 1.5]).is_infinite());
    }

    #[test]
    fn conjugate_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..8);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = MaxAffine::from_1d(&a, &c).unwrap();
            let y = rng.random_range(-3.5..3.5);
            let (e, l) = (conjugate_at(&v, &[y]), conjugate_at_lp(&v, &[y]));
            assert!(e == l || (e - l).abs() < 1e-9, "{e} vs {l}");
        }
    }

    #[test]
    fn smoothing_examples() {
        let q = AnalyticConvex::<f64>::quadratic(1);
        let nodes = gh(1, 8);
        for &(x, t) in &[(0.3, 1.0), (-2.0, 0.25)] {
            let s = gaussian_smooth(&q, t, &nodes, &[x]).unwrap();
            assert!((s.value - (x * x + t) / 2.0).abs() < 1e-12);
            assert!((s.gradient[0] - x).abs() < 1e-12);
            let s = smooth_by_nodes(&q, t, &nodes, &[x]);
            assert!((s.value - (x * x + t) / 2.0).abs() < 1e-12);
        }
        let r = gh(1, 64);
        let s = gaussian_smooth(&abs1(), 1.0, &r, &[0.0]).unwrap();
        assert!((s.value - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!(s.gradient[0].abs() < 1e-12);
        let s = gaussian_smooth(&abs1(), 1.0, &r, &[10.0]).unwrap();
        assert!((s.value - folded_mean(10.0, 1.0)).abs() < 1e-12);
        assert!((s.value - 10.0).abs() < 1e-12 && (s.gradient[0] - 1.0).abs() < 1e-12);
        assert!(gaussian_smooth(&abs1(), 0.0, &r, &[0.0]).is_err());
        assert!(matches!(gaussian_smooth(&abs1(), 1.0, &gh(2, 3), &[0.0]), Err(Error::Quadrature(_))));
    }

    #[test]
    fn exact_line_integrals_match_folded_normal() {
        let v = abs1();
        let r = gh(1, 2);
        for &x in &[-3.0, -0.4, 0.0, 0.77, 5.0] {
            for &t in &[0.25, 1.0, 4.0] {
                let s = v.smooth(t, &r, &[x]);
                assert!((s.value - folded_mean(x, t)).abs() < 1e-12);
                let g = 2.0 * special::cdf_f64(x / t.sqrt()) - 1.0;
                assert!((s.gradient[0] - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_dimensional_smoothing_matches_product_formula() {
        // v(x) = |x1| + |x2| factorizes across axes
        let v = square2();
        let r = gh(2, 40);
        let x = [0.3, -0.8];
        let s = v.smooth(1.0, &r, &x);
        let want = folded_mean(0.3, 1.0) + folded_mean(-0.8, 1.0);
        assert!((s.value - want).abs() < 1e-10, "{} vs {want}", s.value);
        let g1 = 2.0 * special::cdf_f64(0.3) - 1.0;
        let g2 = 2.0 * special::cdf_f64(-0.8) - 1.0;
        assert!((s.gradient[0] - g1).abs() < 1e-10 && (s.gradient[1] - g2).abs() < 1e-10);
        assert!(v.integration_axis()[1] != 0.0);
        assert_eq!(abs1().integration_axis(), &[1.0]);
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(eval_subgradient(&abs1(), &[2.0]), vec![1.0]);
        assert_eq!(eval_subgradient(&abs1(), &[0.0]), vec![-1.0]);
        assert_eq!(eval_subgradient(&square2(), &[2.0, -3.0]), vec![1.0, -1.0]);
    }

    #[test]
    fn inverse_examples() {
        let r = gh(1, 64);
        let q = AnalyticConvex::<f64>::quadratic(1);
        let z = smoothed_grad_inverse(&q, &[0.7], &r, 1e-10).unwrap();
        assert!((z[0] - 0.7).abs() < 1e-9);
        let z = smoothed_grad_inverse(&abs1(), &[0.5], &r, 1e-12).unwrap();
        assert!((z[0] - 0.674_489_750_196_081_7).abs() < 1e-10);
        assert!(matches!(
            smoothed_grad_inverse(&abs1(), &[1.5], &r, 1e-8),
            Err(Error::OutOfRange(_))
        ));
        let flat = MaxAffine::from_1d(&[2.0], &[0.0]).unwrap();
        assert!(matches!(smoothed_grad_inverse(&flat, &[2.0], &r, 1e-8), Err(Error::Rank { .. })));
    }

    #[test]
    fn inverse_2d_and_divergence() {
        let v = square2();
        let r = gh(2, 20);
        let x = [0.3, -0.5];
        let z = smoothed_grad_inverse(&v, &x, &r, 1e-9).unwrap();
        let g = v.smooth(1.0, &r, &z).gradient;
        assert!((g[0] - x[0]).abs() < 1e-9 && (g[1] - x[1]).abs() < 1e-9);
        // separable potential: ζ₁ = Φ⁻¹((1 + x₁)/2)
        assert!((z[0] - special::quantile_f64(0.65)).abs() < 1e-8);
        assert!(matches!(
            smoothed_grad_inverse(&v, &[1.2, 0.0], &r, 1e-8),
            Err(Error::OutOfRange(_))
        ));
        let collinear = MaxAffine::new(2, vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            smoothed_grad_inverse(&collinear, &[0.5, 0.5], &r, 1e-8),
            Err(Error::Rank { rank: 1, .. })
        ));
    }

    #[test]
    fn arctan_potential_gradient_and_conjugate() {
        let f = AnalyticConvex::<f64>::arctan();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = rng.random_range(-6.0..6.0);
            let h = 1e-5;
            let fd = (f.value(&[x + h]) - f.value(&[x - h])) / (2.0 * h);
            let g = f.gradient(&[x])[0];
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3), "{x}: {fd} vs {g}");
            // Fenchel equality at y = f'(x)
            assert!((f.value(&[x]) + f.conjugate(&[g]).unwrap() - x * g).abs() < 1e-9);
        }
        assert!(f.conjugate(&[2.0]).unwrap().is_infinite());
    }

    #[test]
    fn radial_potential_gradient() {
        let f = AnalyticConvex::<f64>::radial_two_slope(2, 0.5, 1.6, 3.17);
        let g = f.gradient(&[3.0, 4.0]);
        assert!((g[0] - 0.96).abs() < 1e-12 && (g[1] - 1.28).abs() < 1e-12);
        let g = f.gradient(&[0.0, 1.0]);
        assert_eq!(g, vec![0.0, 0.5]);
        assert_eq!(f.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert!((f.value(&[0.0, 5.0]) - (0.5 * 3.17 + 1.6 * (5.0 - 3.17))).abs() < 1e-12);
    }

    #[test]
    fn regauge_and_translate() {
        let mut v = MaxAffine::<f64>::from_1d(&[-1.0, 2.0], &[1.0, 3.0]).unwrap();
        v.regauge(&[0.5, 0.5]);
        assert!((v.intercept(0) + v.intercept(1)).abs() < 1e-15);
        let before = v.value(&[0.3]);
        v.translate(&[0.7]);
        assert!((v.value(&[1.0]) - before).abs() < 1e-12);
    }

    #[test]
    fn f32_instantiation() {
        let v = MaxAffine::<f32>::from_1d(&[-1.0, 1.0], &[0.0, 0.0]).unwrap();
        let r = QuadratureRule::<f32>::gauss_hermite(1, 16).unwrap();
        let z = smoothed_grad_inverse(&v, &[0.5], &r, 1e-5).unwrap();
        assert!((z[0] - 0.674_49).abs() < 1e-4);
        assert_eq!(conjugate_at(&v, &[0.2]), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pieces_1d() -> impl Strategy<Value = MaxAffine<f64>> {
            prop::collection::vec((-4.0..4.0f64, -3.0..3.0f64), 2..9).prop_filter_map("distinct slopes", |p| {
                let (a, c): (Vec<f64>, Vec<f64>) = p.into_iter().unzip();
                MaxAffine::from_1d(&a, &c).ok()
            })
        }

        fn pieces_2d() -> impl Strategy<Value = MaxAffine<f64>> {
            prop::collection::vec(((-3.0..3.0f64, -3.0..3.0f64), -2.0..2.0f64), 3..7).prop_filter_map(
                "spanning slopes",
                |p| {
                    let v = MaxAffine::new(2, p.iter().map(|((a, b), _)| vec![*a, *b]).collect(), p.iter().map(|x| x.1).collect()).ok()?;
                    (v.affine_rank() == 2).then_some(v)
                },
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn biconjugate_recovers_max_affine(v in pieces_1d(), x in -5.0..5.0f64) {
                let best = v.slopes().map(|a| a[0] * x - conjugate_at(&v, a)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((best - v.value(&[x])).abs() < 1e-9);
            }

            #[test]
            fn fenchel_young(v in pieces_2d(), x in (-3.0..3.0f64, -3.0..3.0f64), lam in prop::collection::vec(0.01..1.0f64, 6)) {
                let n = v.n_pieces();
                let tot: f64 = lam[..n.min(6)].iter().sum();
                let mut y = [0.0, 0.0];
                for (j, l) in lam[..n.min(6)].iter().enumerate() {
                    y[0] += l / tot * v.slope(j)[0];
                    y[1] += l / tot * v.slope(j)[1];
                }
                let c = conjugate_at(&v, &y);
                prop_assert!(v.value(&[x.0, x.1]) + c >= x.0 * y[0] + x.1 * y[1] - 1e-9);
                let g = eval_subgradient(&v, &[x.0, x.1]);
                let eq = v.value(&[x.0, x.1]) + conjugate_at(&v, &g) - dot(&g, &[x.0, x.1]);
                prop_assert!(eq.abs() < 1e-8);
            }

            #[test]
            fn smoothed_gradient_matches_difference_quotient(v in pieces_2d(), x in (-2.0..2.0f64, -2.0..2.0f64)) {
                let r = QuadratureRule::gauss_hermite(2, 12).unwrap();
                let p = [x.0, x.1];
                let s = v.smooth(1.0, &r, &p);
                for k in 0..2 {
                    let h = 1e-5;
                    let (mut a, mut b) = (p, p);
                    a[k] += h;
                    b[k] -= h;
                    let fd = (v.smooth(1.0, &r, &a).value - v.smooth(1.0, &r, &b).value) / (2.0 * h);
                    prop_assert!((fd - s.gradient[k]).abs() < 1e-6, "{} vs {}", fd, s.gradient[k]);
                }
                let total: f64 = v.gaussian_integrals(1.0, &r, &p).masses.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }

            #[test]
            fn inverse_round_trip_1d(v in pieces_1d(), u in 0.05..0.95f64) {
                let (lo, hi) = v.slopes().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| (l.min(a[0]), h.max(a[0])));
                let x = lo + u * (hi - lo);
                let r = QuadratureRule::gauss_hermite(1, 4).unwrap();
                let z = smoothed_grad_inverse(&v, &[x], &r, 1e-10).unwrap();
                prop_assert!((v.smooth(1.0, &r, &z).gradient[0] - x).abs() <= 1e-10);
            }

            #[test]
            fn smoothed_gradient_stays_in_slope_hull(v in pieces_1d(), z in -30.0..30.0f64) {
                let r = QuadratureRule::gauss_hermite(1, 4).unwrap();
                let g = v.smooth(1.0, &r, &[z]).gradient[0];
                let (lo, hi) = v.slopes().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| (l.min(a[0]), h.max(a[0])));
                prop_assert!(g >= lo - 1e-12 && g <= hi + 1e-12);
            }

            #[test]
            fn midpoint_convexity(v in pieces_2d(), a in (-4.0..4.0f64, -4.0..4.0f64), b in (-4.0..4.0f64, -4.0..4.0f64)) {
                let m = [(a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0];
                prop_assert!(v.value(&m) <= (v.value(&[a.0, a.1]) + v.value(&[b.0, b.1])) / 2.0 + 1e-12);
            }
        }
    }
}
