//! File formats: measures and paths as CSV, potentials and solutions as
//! JSON. Lines starting with `#` in CSV input are comments.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::convexfn::{ConvexPotential, MaxAffine};
use crate::error::{Error, Result};
use crate::martingale::PathEnsemble;
use crate::measures::DiscreteMeasure;
use crate::quadrature::QuadratureSpec;
use crate::solver::{AffineReduction, BassSolution, IterationRecord, Residuals, GAUGE};

/// Reads a measure from CSV rows `x_1,…,x_d,weight`. A header row is
/// optional; weights are normalized.
pub fn read_measure_csv<R: Read>(reader: R) -> Result<DiscreteMeasure<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut dim = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let Ok(vals) = parsed else {
            if line == 0 {
                continue; // header
            }
            return Err(Error::Parse(format!("row {}: non-numeric field", line + 1)));
        };
        if vals.len() < 2 {
            return Err(Error::Parse(format!("row {}: need coordinates and a weight", line + 1)));
        }
        let d = vals.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(Error::Parse(format!("row {}: {} coordinates, expected {}", line + 1, d, dim.unwrap())));
        }
        weights.push(vals[d]);
        atoms.push(vals[..d].to_vec());
    }
    let dim = dim.ok_or_else(|| Error::Parse("no rows".into()))?;
    Ok(DiscreteMeasure::normalized(dim, atoms, weights)?.0)
}

/// Writes a measure as CSV with a header, preceded by `# ` comment lines.
pub fn write_measure_csv<W: Write>(mut w: W, m: &DiscreteMeasure<f64>, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=m.dim()).map(|k| format!("x_{k}")).collect();
    header.push("weight".into());
    wtr.write_record(&header)?;
    for (a, wt) in m.iter() {
        let mut row: Vec<String> = a.iter().map(|x| x.to_string()).collect();
        row.push(wt.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// JSON form of a max-affine potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxAffineFile {
    pub dim: usize,
    pub slopes: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl From<&MaxAffine<f64>> for MaxAffineFile {
    fn from(v: &MaxAffine<f64>) -> Self {
        Self {
            dim: ConvexPotential::dim(v),
            slopes: v.slopes().map(|s| s.to_vec()).collect(),
            intercepts: v.intercepts().to_vec(),
        }
    }
}

impl MaxAffineFile {
    pub fn to_potential(&self) -> Result<MaxAffine<f64>> {
        MaxAffine::new(self.dim, self.slopes.clone(), self.intercepts.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl From<&DiscreteMeasure<f64>> for MeasureFile {
    fn from(m: &DiscreteMeasure<f64>) -> Self {
        Self {
            atoms: m.atoms().map(|a| a.to_vec()).collect(),
            weights: m.weights().to_vec(),
        }
    }
}

/// JSON form of a [`BassSolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub dim: usize,
    pub nu_atoms: Vec<Vec<f64>>,
    pub nu_weights: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub mu: MeasureFile,
    pub alpha: MeasureFile,
    pub gauge: String,
    pub residuals: Residuals,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default)]
    pub history: Vec<IterationRecord>,
    #[serde(default)]
    pub reduction: Option<AffineReduction>,
    pub quadrature: QuadratureSpec,
    pub seed: u64,
    /// hash of the run configuration that produced the file
    #[serde(default)]
    pub config_hash: Option<String>,
}

impl SolutionFile {
    pub fn new(sol: &BassSolution<f64>, config_hash: Option<String>) -> Self {
        Self {
            dim: sol.dim(),
            nu_atoms: sol.nu.atoms().map(|a| a.to_vec()).collect(),
            nu_weights: sol.nu.weights().to_vec(),
            intercepts: sol.v.intercepts().to_vec(),
            mu: (&sol.mu).into(),
            alpha: (&sol.alpha).into(),
            gauge: GAUGE.into(),
            residuals: sol.residuals,
            iterations: sol.iterations,
            converged: sol.converged,
            history: sol.history.clone(),
            reduction: sol.reduction.clone(),
            quadrature: sol.quadrature,
            seed: sol.seed,
            config_hash,
        }
    }

    /// Rebuilds the solution, validating shapes and the gauge label.
    pub fn into_solution(self) -> Result<BassSolution<f64>> {
        if self.gauge != GAUGE {
            return Err(Error::Parse(format!("unknown gauge {:?}", self.gauge)));
        }
        if self.alpha.atoms.len() != self.mu.atoms.len() {
            return Err(Error::Parse("alpha and mu have different numbers of atoms".into()));
        }
        let v = MaxAffine::new(self.dim, self.nu_atoms.clone(), self.intercepts)?;
        let nu = DiscreteMeasure::new(self.dim, self.nu_atoms, self.nu_weights)?;
        let mu = DiscreteMeasure::new(self.dim, self.mu.atoms, self.mu.weights)?;
        let alpha = DiscreteMeasure::new(self.dim, self.alpha.atoms, self.alpha.weights)?;
        if nu.len() != v.n_pieces() || alpha.len() != mu.len() {
            return Err(Error::Parse("repeated atoms in solution file".into()));
        }
        Ok(BassSolution {
            v,
            mu,
            nu,
            alpha,
            residuals: self.residuals,
            iterations: self.iterations,
            converged: self.converged,
            history: self.history,
            reduction: self.reduction,
            quadrature: self.quadrature,
            seed: self.seed,
        })
    }
}

/// Writes paths in long format `path_id,t,b_1..b_d,m_1..m_d`, preceded by
/// `# ` comment lines.
pub fn write_paths_csv<W: Write>(mut w: W, ens: &PathEnsemble<f64>, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut wtr = csv::Writer::from_writer(w);
    let d = ens.dim;
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=d).map(|k| format!("b_{k}")));
    header.extend((1..=d).map(|k| format!("m_{k}")));
    wtr.write_record(&header)?;
    for p in 0..ens.n_paths {
        for (k, t) in ens.times.iter().enumerate() {
            let mut row = vec![p.to_string(), t.to_string()];
            row.extend(ens.b_at(p, k).iter().map(|x| x.to_string()));
            row.extend(ens.m_at(p, k).iter().map(|x| x.to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_bass_1d, SolverOptions};

    #[test]
    fn measure_csv_roundtrip() {
        let text = "# comment\nx_1,x_2,weight\n0,1,1\n2,3,3\n";
        let m = read_measure_csv(text.as_bytes()).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.weights(), &[0.25, 0.75]);
        let mut out = Vec::new();
        write_measure_csv(&mut out, &m, &["seed: 1".into()]).unwrap();
        let back = read_measure_csv(out.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(String::from_utf8(out).unwrap().starts_with("# seed: 1\n"));
    }

    #[test]
    fn bad_csv_is_rejected() {
        assert!(read_measure_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(read_measure_csv("1,2\nx,1\n".as_bytes()).is_err());
        assert!(read_measure_csv("".as_bytes()).is_err());
        assert!(read_measure_csv("1,-1\n".as_bytes()).is_err());
    }

    #[test]
    fn solution_json_roundtrip() {
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = DiscreteMeasure::from_1d(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        let sol = solve_bass_1d(mu, nu, &SolverOptions::default()).unwrap();
        let file = SolutionFile::new(&sol, Some("abc".into()));
        let json = serde_json::to_string(&file).unwrap();
        let back: SolutionFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, file);
        let rebuilt = back.into_solution().unwrap();
        assert_eq!(rebuilt.v.intercepts(), sol.v.intercepts());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["gauge"], "nu-weighted-intercepts-zero");
        assert_eq!(v["quadrature"], "gh:64");
    }

    #[test]
    fn max_affine_json_roundtrip() {
        let v = MaxAffine::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, -0.5]).unwrap();
        let f = MaxAffineFile::from(&v);
        let back: MaxAffineFile = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back.to_potential().unwrap().intercepts(), v.intercepts());
    }
}
