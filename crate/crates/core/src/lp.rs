//! Dense two-phase simplex for small equality-form linear programs
//!
//! ```text
//! maximize cᵀx  subject to  A x = b,  x ≥ 0
//! ```
//!
//! Sized for the coupling and envelope problems in this crate (a few hundred
//! columns). Dantzig pricing, with Bland's rule taking over after a run of
//! degenerate pivots so the method cannot cycle.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_PIVOTS: usize = 200_000;
const DEGENERATE_SWITCH: usize = 64;

/// Outcome of phase one.
#[derive(Debug, Clone)]
pub enum PhaseOne<S> {
    Feasible(FeasibleTableau<S>),
    /// Rows whose artificial variable could not be driven to zero.
    Infeasible { rows: Vec<usize>, infeasibility: S },
}

/// Tableau holding a basic feasible solution of `A x = b, x ≥ 0`; further
/// objectives can be optimized from it without repeating phase one.
#[derive(Debug, Clone)]
pub struct FeasibleTableau<S> {
    n_vars: usize,
    n_rows: usize,
    width: usize,
    tab: Vec<S>,
    basis: Vec<usize>,
    piv_tol: S,
}

fn default_piv_tol<S: Scalar>() -> S {
    S::epsilon().sqrt() * S::of(1e-3)
}

/// Runs phase one on `rows` (each of length `n_vars`) and `rhs`.
///
/// `feas_tol` bounds the total artificial mass accepted as feasible.
pub fn phase_one<S: Scalar>(rows: &[Vec<S>], rhs: &[S], n_vars: usize, feas_tol: S) -> Result<PhaseOne<S>> {
    let m = rows.len();
    if rhs.len() != m {
        return Err(Error::Lp(format!("{} rows but {} right-hand sides", m, rhs.len())));
    }
    let width = n_vars + m + 1;
    let mut tab = vec![S::zero(); (m + 1) * width];
    for (i, (row, &b)) in rows.iter().zip(rhs).enumerate() {
        if row.len() != n_vars {
            return Err(Error::Lp(format!("row {} has {} entries, expected {}", i, row.len(), n_vars)));
        }
        let flip = if b < S::zero() { -S::one() } else { S::one() };
        let base = i * width;
        for (j, &a) in row.iter().enumerate() {
            tab[base + j] = flip * a;
        }
        tab[base + n_vars + i] = S::one();
        tab[base + width - 1] = flip * b;
    }
    // objective row: maximize −Σ artificials, stored as z_j − c_j
    let obj = m * width;
    for i in 0..m {
        for j in 0..n_vars {
            let v = tab[i * width + j];
            tab[obj + j] -= v;
        }
        let v = tab[i * width + width - 1];
        tab[obj + width - 1] -= v;
    }
    let mut t = FeasibleTableau {
        n_vars,
        n_rows: m,
        width,
        tab,
        basis: (n_vars..n_vars + m).collect(),
        piv_tol: default_piv_tol(),
    };
    t.run(n_vars + m)?;
    let infeasibility = -t.tab[obj + width - 1];
    if infeasibility > feas_tol {
        let rows = (0..m)
            .filter(|&r| t.basis[r] >= n_vars && t.tab[r * width + width - 1] > feas_tol)
            .map(|r| t.basis[r] - n_vars)
            .collect();
        return Ok(PhaseOne::Infeasible { rows, infeasibility });
    }
    // drive remaining artificials out of the basis where possible
    for r in 0..m {
        if t.basis[r] < n_vars {
            continue;
        }
        let pick = (0..n_vars)
            .filter(|&j| t.tab[r * width + j].abs() > t.piv_tol)
            .max_by(|&a, &b| {
                t.tab[r * width + a]
                    .abs()
                    .partial_cmp(&t.tab[r * width + b].abs())
                    .unwrap()
            });
        if let Some(j) = pick {
            t.pivot(r, j);
        }
    }
    Ok(PhaseOne::Feasible(t))
}

impl<S: Scalar> FeasibleTableau<S> {
    /// Current basic solution restricted to the structural variables.
    pub fn solution(&self) -> Vec<S> {
        let mut x = vec![S::zero(); self.n_vars];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n_vars {
                x[b] = self.tab[r * self.width + self.width - 1].max(S::zero());
            }
        }
        x
    }

    /// Maximizes `cᵀx` over the feasible set, starting from this basis.
    /// Returns the optimal value and an optimal vertex.
    pub fn maximize(&self, c: &[S]) -> Result<(S, Vec<S>)> {
        if c.len() != self.n_vars {
            return Err(Error::Lp(format!("objective has {} entries, expected {}", c.len(), self.n_vars)));
        }
        let mut t = self.clone();
        let w = t.width;
        let obj = t.n_rows * w;
        for j in 0..w {
            t.tab[obj + j] = S::zero();
        }
        for j in 0..t.n_vars {
            t.tab[obj + j] = -c[j];
        }
        for r in 0..t.n_rows {
            let b = t.basis[r];
            if b < t.n_vars && c[b] != S::zero() {
                let cb = c[b];
                for j in 0..w {
                    let v = t.tab[r * w + j];
                    t.tab[obj + j] += cb * v;
                }
            }
        }
        t.run(t.n_vars)?;
        let x = t.solution();
        let value = c.iter().zip(&x).fold(S::zero(), |acc, (&ci, &xi)| acc + ci * xi);
        Ok((value, x))
    }

    /// Simplex iterations; only columns `< n_enter` may enter.
    fn run(&mut self, n_enter: usize) -> Result<()> {
        let w = self.width;
        let obj = self.n_rows * w;
        let scale = (0..n_enter)
            .map(|j| self.tab[obj + j].abs())
            .fold(S::one(), S::max);
        let cost_tol = self.piv_tol * scale;
        let mut degenerate = 0usize;
        for _ in 0..MAX_PIVOTS {
            let bland = degenerate >= DEGENERATE_SWITCH;
            let mut enter = None;
            let mut best = -cost_tol;
            for j in 0..n_enter {
                let rc = self.tab[obj + j];
                if rc < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };
            let mut leave: Option<usize> = None;
            let mut ratio = S::infinity();
            for r in 0..self.n_rows {
                let a = self.tab[r * w + col];
                if a > self.piv_tol {
                    let q = self.tab[r * w + w - 1] / a;
                    let better = match leave {
                        None => true,
                        Some(l) => q < ratio || (q == ratio && self.basis[r] < self.basis[l]),
                    };
                    if better {
                        ratio = q;
                        leave = Some(r);
                    }
                }
            }
            let Some(row) = leave else {
                return Err(Error::Lp("objective is unbounded".into()));
            };
            if ratio <= self.piv_tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
        }
        Err(Error::Lp(format!("no optimum after {MAX_PIVOTS} pivots")))
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.tab[row * w + col];
        for j in 0..w {
            self.tab[row * w + j] /= p;
        }
        for r in 0..=self.n_rows {
            if r == row {
                continue;
            }
            let f = self.tab[r * w + col];
            if f == S::zero() {
                continue;
            }
            for j in 0..w {
                let v = self.tab[row * w + j];
                self.tab[r * w + j] -= f * v;
            }
            self.tab[r * w + col] = S::zero();
        }
        self.basis[row] = col;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feasible(rows: &[Vec<f64>], rhs: &[f64], n: usize) -> FeasibleTableau<f64> {
        match phase_one(rows, rhs, n, 1e-9).unwrap() {
            PhaseOne::Feasible(t) => t,
            PhaseOne::Infeasible { .. } => panic!("expected feasible"),
        }
    }

    #[test]
    fn small_maximization() {
        // max 3x + 2y s.t. x + y + s1 = 4, x + 3y + s2 = 6
        let rows = vec![vec![1.0, 1.0, 1.0, 0.0], vec![1.0, 3.0, 0.0, 1.0]];
        let t = feasible(&rows, &[4.0, 6.0], 4);
        let (v, x) = t.maximize(&[3.0, 2.0, 0.0, 0.0]).unwrap();
        assert!((v - 12.0).abs() < 1e-12);
        assert!((x[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        // x + y = 1, x + y = 2
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        match phase_one(&rows, &[1.0, 2.0], 2, 1e-9).unwrap() {
            PhaseOne::Infeasible { infeasibility, rows } => {
                assert!((infeasibility - 1.0).abs() < 1e-12);
                assert!(!rows.is_empty());
            }
            PhaseOne::Feasible(_) => panic!("expected infeasible"),
        }
    }

    #[test]
    fn redundant_rows_and_negative_rhs() {
        // 2x2 transportation with one redundant constraint, one row negated
        let rows = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, -1.0, -1.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        ];
        let t = feasible(&rows, &[0.5, -0.5, 0.3, 0.7], 4);
        let (v, x) = t.maximize(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((v - 0.8).abs() < 1e-12, "{v} {x:?}");
        let (v, _) = t.maximize(&[-1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!((v + 0.2).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        let rows = vec![vec![1.0, -1.0]];
        let t = feasible(&rows, &[1.0], 2);
        assert!(t.maximize(&[1.0, 0.0]).is_err());
    }
}
