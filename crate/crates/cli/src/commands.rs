use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use bassmt::io::{read_measure_csv, write_paths_csv, SolutionFile};
use bassmt::martingale::{
    check_boundary, check_marginals, check_martingale, estimate_functionals, forward_construct,
    forward_construct_quantiles, sample_paths, BassModel, MIN_DRIFT_PATHS,
};
use bassmt::{
    duality_gap_report, solve_bass_1d, solve_bass_nd, AnalyticConvex, BassSolution, DiscreteMeasure, DualCertificate,
    Error, QuadratureRule, SolverOptions,
};
use serde::Serialize;

use crate::config::{RunConfig, Task};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_NOT_IRREDUCIBLE: u8 = 2;
pub const EXIT_NOT_CONVEX_ORDER: u8 = 3;
pub const EXIT_MAX_ITERATIONS: u8 = 4;
pub const EXIT_BAD_SOLUTION: u8 = 5;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

#[derive(Debug, thiserror::Error)]
enum CmdError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{0}: {1}")]
    File(String, std::io::Error),
    #[error("invalid solution file {0}: {1}")]
    BadSolution(String, String),
    #[error("{0}")]
    Failed(String),
}

impl CmdError {
    fn exit_code(&self) -> u8 {
        match self {
            CmdError::Lib(Error::NotIrreducible { .. }) => EXIT_NOT_IRREDUCIBLE,
            CmdError::Lib(Error::NotConvexOrder) => EXIT_NOT_CONVEX_ORDER,
            CmdError::Lib(Error::MaxIterations { .. }) => EXIT_MAX_ITERATIONS,
            CmdError::BadSolution(..) => EXIT_BAD_SOLUTION,
            _ => EXIT_FAILURE,
        }
    }
}

type CmdResult<T> = std::result::Result<T, CmdError>;

pub fn run(cfg: &RunConfig) -> u8 {
    let res = match &cfg.task {
        Task::Solve { mu, nu } => solve(cfg, mu, nu),
        Task::Sample { solution, paths, steps } => sample(cfg, solution, *paths, *steps),
        Task::Reproduce { name, paths, steps } => reproduce(cfg, name, *paths, *steps),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if let CmdError::Lib(Error::NotIrreducible { x, y }) = &e {
                eprintln!("witness: x = {x:?}, y = {y:?}");
            }
            e.exit_code()
        }
    }
}

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CmdError::File(path.display().to_string(), e))
}

fn out_dir(cfg: &RunConfig) -> CmdResult<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| CmdError::File(cfg.out.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CmdError::File(path.display().to_string(), e))
}

fn read_measure(path: &Path) -> CmdResult<DiscreteMeasure> {
    let f = File::open(path).map_err(|e| CmdError::File(path.display().to_string(), e))?;
    Ok(read_measure_csv(BufReader::new(f))?)
}

/// A JSON artifact stamped with the run's config hash and seed.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: String,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

fn stamped<'a, T: Serialize>(cfg: &RunConfig, body: &'a T) -> Stamped<'a, T> {
    Stamped {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        body,
    }
}

fn solve_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure, opts: &SolverOptions) -> bassmt::Result<BassSolution> {
    if mu.dim() == 1 && nu.dim() == 1 {
        solve_bass_1d(mu.clone(), nu.clone(), opts)
    } else {
        solve_bass_nd(mu, nu, opts)
    }
}

fn solve(cfg: &RunConfig, mu: &Path, nu: &Path) -> CmdResult<()> {
    let opts = cfg.solver_options()?;
    let (mu, nu) = (read_measure(mu)?, read_measure(nu)?);
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension {
            expected: mu.dim(),
            found: nu.dim(),
        }
        .into());
    }
    let sol = solve_pair(&mu, &nu, &opts)?;
    let cert = duality_gap_report(&sol, &mu, &nu, &sol.rule()?)?;
    out_dir(cfg)?;
    write_json(&cfg.out.join("solution.json"), &SolutionFile::new(&sol, Some(cfg.hash())))?;
    write_json(&cfg.out.join("certificate.json"), &stamped(cfg, &cert))?;
    println!(
        "converged after {} iterations: marginal residual {:.3e}, barycenter residual {:.3e}",
        sol.iterations, sol.residuals.marginal, sol.residuals.barycenter
    );
    println!(
        "primal {:.7} dual {} gap {:.3e}",
        cert.primal_value,
        cert.dual_value.map_or("inf".to_string(), |d| format!("{d:.7}")),
        cert.gap
    );
    Ok(())
}

#[derive(Serialize)]
struct SampleReport {
    n_paths: usize,
    n_steps: usize,
    functionals: bassmt::martingale::Functionals,
    martingale: Option<bassmt::martingale::MartingaleReport>,
    boundary: bassmt::martingale::BoundaryReport,
    marginals: bassmt::martingale::MarginalReport,
}

fn load_solution(path: &Path) -> CmdResult<BassSolution> {
    let bad = |m: String| CmdError::BadSolution(path.display().to_string(), m);
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let file: SolutionFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    file.into_solution().map_err(|e| bad(e.to_string()))
}

fn sample(cfg: &RunConfig, solution: &Path, paths: usize, steps: usize) -> CmdResult<()> {
    let sol = load_solution(solution)?;
    let model = BassModel::from_solution(&sol)?;
    let ens = sample_paths(&model, paths, steps, cfg.seed)?;
    let report = SampleReport {
        n_paths: paths,
        n_steps: steps,
        functionals: estimate_functionals(&ens, &sol.mu, &sol.nu)?,
        martingale: if paths >= MIN_DRIFT_PATHS {
            Some(check_martingale(&ens)?)
        } else {
            None
        },
        boundary: check_boundary(&ens, &sol.nu)?,
        marginals: check_marginals(&ens, &sol.mu, &sol.nu)?,
    };
    out_dir(cfg)?;
    let p = cfg.out.join("paths.csv");
    write_paths_csv(create(&p)?, &ens, &cfg.comments())?;
    write_json(&cfg.out.join("report.json"), &stamped(cfg, &report))?;
    let f = &report.functionals;
    println!("P_hat {:.5} ± {:.5}, MT_hat {:.5} ± {:.5}", f.p_hat, f.p_se, f.mt_hat, f.mt_se);
    println!(
        "martingale {}, boundary {}",
        report
            .martingale
            .as_ref()
            .map_or("skipped (too few paths)", |m| if m.pass { "pass" } else { "FAIL" }),
        if report.boundary.pass { "pass" } else { "FAIL" }
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct Row {
    quantity: String,
    target: f64,
    achieved: f64,
    tolerance: f64,
    pass: bool,
}

fn row(quantity: &str, target: f64, achieved: f64, tolerance: f64) -> Row {
    Row {
        quantity: quantity.into(),
        target,
        achieved,
        tolerance,
        pass: (achieved - target).abs() <= tolerance,
    }
}

fn reproduce(cfg: &RunConfig, name: &str, paths: usize, steps: usize) -> CmdResult<()> {
    let rows = match name {
        "binary" => binary(cfg, paths, steps)?,
        "arctan" => arctan(cfg)?,
        "circles" => circles(cfg)?,
        other => return Err(CmdError::Failed(format!("unknown example {other}"))),
    };
    out_dir(cfg)?;
    let p = cfg.out.join("summary.csv");
    let mut w = create(&p)?;
    let io_err = |e: std::io::Error| CmdError::File(p.display().to_string(), e);
    for c in cfg.comments() {
        writeln!(w, "# {c}").map_err(io_err)?;
    }
    writeln!(w, "quantity,target,achieved,tolerance,pass").map_err(io_err)?;
    for r in &rows {
        writeln!(w, "{},{},{},{},{}", r.quantity, r.target, r.achieved, r.tolerance, r.pass).map_err(io_err)?;
        println!(
            "{:<28} target {:>10.6} achieved {:>10.6} tol {:.1e} {}",
            r.quantity,
            r.target,
            r.achieved,
            r.tolerance,
            if r.pass { "ok" } else { "FAIL" }
        );
    }
    w.flush().map_err(io_err)?;
    match rows.iter().find(|r| !r.pass) {
        Some(r) => Err(CmdError::Failed(format!("{name}: row {} failed", r.quantity))),
        None => Ok(()),
    }
}

fn binary(cfg: &RunConfig, paths: usize, steps: usize) -> CmdResult<Vec<Row>> {
    let mu = DiscreteMeasure::dirac(vec![0.0]);
    let nu = DiscreteMeasure::from_1d(&[-1.0, 1.0], &[0.5, 0.5])?;
    let opts = SolverOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    let sol = solve_bass_1d(mu.clone(), nu.clone(), &opts)?;
    let rule = QuadratureRule::gauss_hermite(1, 64)?;
    let k = sol.kernel_masses(0, &rule)?;
    let cert: DualCertificate = duality_gap_report(&sol, &mu, &nu, &rule)?;
    let model = BassModel::from_solution(&sol)?;
    let ens = sample_paths(&model, paths, steps, cfg.seed)?;
    let f = estimate_functionals(&ens, &mu, &nu)?;
    let mt = 2.0 - 2.0 * SQRT_2_OVER_PI;
    Ok(vec![
        row("kernel mass at -1", 0.5, k[0], 1e-6),
        row("kernel mass at +1", 0.5, k[1], 1e-6),
        row("primal value", SQRT_2_OVER_PI, cert.primal_value, 1e-3),
        row("dual value", SQRT_2_OVER_PI, cert.dual_value.unwrap_or(f64::INFINITY), 1e-3),
        row("path MT estimate", mt, f.mt_hat, 3.0 * f.mt_se),
    ])
}

fn arctan(cfg: &RunConfig) -> CmdResult<Vec<Row>> {
    let v = AnalyticConvex::arctan();
    let rule = QuadratureRule::gauss_hermite(1, 64)?;
    let alpha = DiscreteMeasure::from_1d(&[-1.0, 1.0], &[0.5, 0.5])?;
    let (mu, nu) = forward_construct_quantiles(&v, &alpha, &rule, cfg.grid_size)?;
    let opts = SolverOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    let sol = solve_bass_1d(mu.clone(), nu.clone(), &opts)?;
    let err = sol
        .quantile_grid()?
        .iter()
        .map(|&(z, y)| (z.atan() - y).abs())
        .fold(0.0, f64::max);
    // tighter tolerances leave enough iterations to read off the rate
    let tight = SolverOptions {
        tol_marginal: 1e-9,
        tol_barycenter: 1e-10,
        ..opts
    };
    let long = solve_bass_1d(mu, nu, &tight)?;
    let h = &long.history;
    let tail = &h[h.len().saturating_sub(11)..];
    let ratio = tail
        .windows(2)
        .map(|w| w[1].step / w[0].step)
        .fold(0.0, f64::max);
    Ok(vec![
        row("sup error of v' on grid", 0.0, err, 0.02),
        Row {
            quantity: "max W2 step ratio (last 10)".into(),
            target: 0.0,
            achieved: ratio,
            tolerance: 0.95,
            pass: tail.len() == 11 && ratio < 0.95,
        },
    ])
}

fn circles(cfg: &RunConfig) -> CmdResult<Vec<Row>> {
    let v = AnalyticConvex::radial_two_slope(2, 0.5, 1.6, 3.17);
    let n = 256;
    let atoms: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            vec![3.0 * th.cos(), 3.0 * th.sin()]
        })
        .collect();
    let alpha = DiscreteMeasure::uniform(2, atoms)?;
    let rule = QuadratureRule::monte_carlo(2, 100_000, cfg.seed)?;
    let (mu, nu) = forward_construct(&v, &alpha, &rule)?;
    let radius: f64 = mu.iter().map(|(x, w)| w * x[0].hypot(x[1])).sum();
    let inner: f64 = nu.iter().filter(|(y, _)| y[0].hypot(y[1]) < 1.0).map(|(_, w)| w).sum();
    Ok(vec![
        row("initial radius", 1.0, radius, 0.02),
        row("terminal mass at radius 1/2", 0.5, inner, 0.02),
        row("terminal mass at radius 8/5", 0.5, 1.0 - inner, 0.02),
    ])
}
