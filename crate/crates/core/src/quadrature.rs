//! Integration rules against the standard Gaussian `γ` on R^d.
//!
//! Tensor Gauss–Hermite (probabilists' normalization) or plain Monte Carlo
//! with a fixed seed. Every rule also carries its projection onto axes
//! `2..d`. The max-of-affine routines integrate exactly along one direction
//! and use these nodes as coordinates in its orthogonal complement, which
//! is valid because `γ` is rotation invariant.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nodes per axis for tensor rules in dimensions 2 and 3.
pub const DEFAULT_TENSOR_NODES: usize = 20;
/// Nodes for one-dimensional rules.
pub const DEFAULT_1D_NODES: usize = 64;
/// Monte Carlo sample count used above dimension 3.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// How a rule is built; parsed from `gh:<n>` or `mc:<samples>:<seed>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadratureSpec {
    GaussHermite { per_axis: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl serde::Serialize for QuadratureSpec {
    fn serialize<Se: serde::Serializer>(&self, s: Se) -> std::result::Result<Se::Ok, Se::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for QuadratureSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl QuadratureSpec {
    /// Default rule for a problem of dimension `dim` whose potential has
    /// `pieces` affine pieces.
    pub fn default_for(dim: usize, pieces: usize, seed: u64) -> Self {
        if dim == 1 {
            QuadratureSpec::GaussHermite {
                per_axis: DEFAULT_1D_NODES,
            }
        } else if dim <= 3 && pieces <= 50 {
            QuadratureSpec::GaussHermite {
                per_axis: DEFAULT_TENSOR_NODES,
            }
        } else {
            QuadratureSpec::MonteCarlo {
                samples: DEFAULT_MC_SAMPLES,
                seed,
            }
        }
    }

    pub fn build<S: Scalar>(&self, dim: usize) -> Result<QuadratureRule<S>> {
        match *self {
            QuadratureSpec::GaussHermite { per_axis } => QuadratureRule::gauss_hermite(dim, per_axis),
            QuadratureSpec::MonteCarlo { samples, seed } => QuadratureRule::monte_carlo(dim, samples, seed),
        }
    }
}

impl fmt::Display for QuadratureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadratureSpec::GaussHermite { per_axis } => write!(f, "gh:{per_axis}"),
            QuadratureSpec::MonteCarlo { samples, seed } => write!(f, "mc:{samples}:{seed}"),
        }
    }
}

impl FromStr for QuadratureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| -> Result<u64> {
            p.trim()
                .parse::<u64>()
                .map_err(|_| Error::Parse(format!("bad number {p:?} in quadrature spec {s:?}")))
        };
        match parts.as_slice() {
            ["gh", n] => {
                let n = num(n)? as usize;
                if n == 0 {
                    return Err(Error::Parse("gh rule needs at least one node".into()));
                }
                Ok(QuadratureSpec::GaussHermite { per_axis: n })
            }
            ["mc", n, seed] => {
                let n = num(n)? as usize;
                if n == 0 {
                    return Err(Error::Parse("mc rule needs at least one sample".into()));
                }
                Ok(QuadratureSpec::MonteCarlo {
                    samples: n,
                    seed: num(seed)?,
                })
            }
            _ => Err(Error::Parse(format!(
                "quadrature spec {s:?} is not gh:<n> or mc:<samples>:<seed>"
            ))),
        }
    }
}

/// Nodes and probability weights approximating integrals against `γ`.
#[derive(Debug, Clone)]
pub struct QuadratureRule<S> {
    spec: QuadratureSpec,
    dim: usize,
    nodes: Vec<S>,
    weights: Vec<S>,
    tail_nodes: Vec<S>,
    tail_weights: Vec<S>,
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the weight
/// `e^{-z²/2}/√(2π)`, in ascending order.
pub fn gauss_hermite_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on physicists' Hermite polynomials, orthonormalized
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut nodes: Vec<f64> = x.iter().map(|&v| v * std::f64::consts::SQRT_2).collect();
    let mut weights: Vec<f64> = w.iter().map(|&v| v / sqrt_pi).collect();
    nodes.reverse();
    weights.reverse();
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= total);
    (nodes, weights)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 1.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn tensor<S: Scalar>(dim: usize, nodes: &[f64], weights: &[f64]) -> (Vec<S>, Vec<S>) {
    let n = nodes.len();
    let count = n.pow(dim as u32);
    let mut flat = Vec::with_capacity(count * dim);
    let mut ws = Vec::with_capacity(count);
    let mut idx = vec![0usize; dim];
    for _ in 0..count {
        let mut w = 1.0;
        for &k in &idx {
            flat.push(S::of(nodes[k]));
            w *= weights[k];
        }
        ws.push(S::of(w));
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    (flat, ws)
}

impl<S: Scalar> QuadratureRule<S> {
    /// Tensor Gauss–Hermite rule with `per_axis` nodes on each axis.
    pub fn gauss_hermite(dim: usize, per_axis: usize) -> Result<Self> {
        if dim == 0 || per_axis == 0 {
            return Err(Error::Quadrature("dimension and node count must be positive".into()));
        }
        let size = (per_axis as f64).powi(dim as i32);
        if size > 5e6 {
            return Err(Error::Quadrature(format!(
                "tensor rule with {per_axis}^{dim} nodes is too large; use mc:<samples>:<seed>"
            )));
        }
        let (z, w) = gauss_hermite_1d(per_axis);
        let (nodes, weights) = tensor(dim, &z, &w);
        let (tail_nodes, tail_weights) = tensor(dim - 1, &z, &w);
        Ok(Self {
            spec: QuadratureSpec::GaussHermite { per_axis },
            dim,
            nodes,
            weights,
            tail_nodes,
            tail_weights,
        })
    }

    /// `samples` standard normal draws from a ChaCha8 stream seeded by `seed`.
    pub fn monte_carlo(dim: usize, samples: usize, seed: u64) -> Result<Self> {
        if dim == 0 || samples == 0 {
            return Err(Error::Quadrature("dimension and sample count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<S> = (0..samples * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                S::of(z)
            })
            .collect();
        let w = S::one() / S::of_usize(samples);
        let tail_nodes = if dim == 1 {
            Vec::new()
        } else {
            nodes.chunks_exact(dim).flat_map(|c| c[1..].iter().copied()).collect()
        };
        let tail_weights = if dim == 1 { vec![S::one()] } else { vec![w; samples] };
        Ok(Self {
            spec: QuadratureSpec::MonteCarlo { samples, seed },
            dim,
            nodes,
            weights: vec![w; samples],
            tail_nodes,
            tail_weights,
        })
    }

    pub fn spec(&self) -> QuadratureSpec {
        self.spec
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

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.spec, QuadratureSpec::MonteCarlo { .. })
    }

    #[inline]
    pub fn node(&self, k: usize) -> &[S] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[S], S)> + '_ {
        self.nodes.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// Projection of the rule onto axes `2..d` (a single empty node when
    /// `d = 1`).
    pub fn tail(&self) -> impl ExactSizeIterator<Item = (&[S], S)> + '_ {
        let td = self.dim - 1;
        let n = self.tail_weights.len();
        (0..n).map(move |k| (&self.tail_nodes[k * td..(k + 1) * td], self.tail_weights[k]))
    }

    pub fn tail_len(&self) -> usize {
        self.tail_weights.len()
    }

    /// `Σ_k w_k f(z_k)`.
    pub fn integrate(&self, mut f: impl FnMut(&[S]) -> S) -> S {
        self.iter().map(|(z, w)| w * f(z)).sum()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            Err(Error::Quadrature(format!(
                "rule has dimension {}, integrand has dimension {}",
                self.dim, dim
            )))
        } else {
            Ok(())
        }
    }
}
