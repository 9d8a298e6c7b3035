use std::path::PathBuf;

use bassmt::{QuadratureSpec, SolverOptions};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Example, SolverArgs};

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Task {
    Solve { mu: PathBuf, nu: PathBuf },
    Sample { solution: PathBuf, paths: usize, steps: usize },
    Reproduce { name: String, paths: usize, steps: usize },
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub task: Task,
    pub quadrature: Option<String>,
    pub tol_marginal: f64,
    pub tol_barycenter: f64,
    pub damping: Option<f64>,
    pub max_iter: Option<usize>,
    pub grid_size: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    fn base(task: Task, seed: u64, out: PathBuf) -> Self {
        let d = SolverOptions::default();
        Self {
            task,
            quadrature: None,
            tol_marginal: d.tol_marginal,
            tol_barycenter: d.tol_barycenter,
            damping: None,
            max_iter: None,
            grid_size: d.grid_size,
            seed,
            out,
        }
    }

    pub fn solve(mu: PathBuf, nu: PathBuf, s: SolverArgs, seed: u64, out: PathBuf) -> Self {
        Self {
            quadrature: s.quad,
            tol_marginal: s.tol_marginal,
            tol_barycenter: s.tol_barycenter,
            damping: s.damping,
            max_iter: s.max_iter,
            grid_size: s.grid_size,
            ..Self::base(Task::Solve { mu, nu }, seed, out)
        }
    }

    pub fn sample(solution: PathBuf, paths: usize, steps: usize, seed: u64, out: PathBuf) -> Self {
        Self::base(Task::Sample { solution, paths, steps }, seed, out)
    }

    pub fn reproduce(name: Example, paths: usize, steps: usize, seed: u64, out: PathBuf) -> Self {
        let task = Task::Reproduce {
            name: name.name().into(),
            paths,
            steps,
        };
        Self::base(task, seed, out)
    }

    pub fn solver_options(&self) -> bassmt::Result<SolverOptions> {
        let quadrature = self
            .quadrature
            .as_deref()
            .map(str::parse::<QuadratureSpec>)
            .transpose()?;
        let opts = SolverOptions {
            quadrature,
            max_iter: self.max_iter,
            tol_marginal: self.tol_marginal,
            tol_barycenter: self.tol_barycenter,
            damping: self.damping,
            grid_size: self.grid_size,
            seed: self.seed,
            initial_intercepts: None,
        };
        opts.validate()?;
        Ok(opts)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Comment lines embedded in every CSV output.
    pub fn comments(&self) -> Vec<String> {
        vec![format!("config_hash: {}", self.hash()), format!("seed: {}", self.seed)]
    }
}
