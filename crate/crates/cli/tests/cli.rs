use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bassmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bassmt"))
        .args(args)
        .env_remove("BASSMT_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_binary_instance() {
    let dir = tempfile::tempdir().unwrap();
    let mu = write(dir.path(), "mu.csv", "# source\n0,1\n");
    let nu = write(dir.path(), "nu.csv", "x_1,weight\n-1,0.5\n1,0.5\n");
    let out = dir.path().join("out");
    let o = bassmt(&["solve", "--mu", &mu, "--nu", &nu, "--quad", "gh:64", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cert = json(&out.join("certificate.json"));
    assert!(cert["gap"].as_f64().unwrap().abs() < 1e-3);
    assert!((cert["primal_value"].as_f64().unwrap() - 0.797_884_6).abs() < 1e-3);
    assert_eq!(cert["seed"], 0);
    let sol = json(&out.join("solution.json"));
    assert_eq!(sol["gauge"], "nu-weighted-intercepts-zero");
    assert_eq!(sol["dim"], 1);
    assert_eq!(sol["config_hash"], cert["config_hash"]);
}

#[test]
fn exit_codes_for_rejected_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let mu = write(dir.path(), "mu.csv", "-1,1\n1,1\n");
    let nu = write(dir.path(), "nu.csv", "0,1\n");
    let o = bassmt(&["solve", "--mu", &mu, "--nu", &nu, "-o", out]);
    assert_eq!(o.status.code(), Some(3));

    let mu = write(dir.path(), "rmu.csv", "-2,1\n2,1\n");
    let nu = write(dir.path(), "rnu.csv", "-3,1\n-1,1\n1,1\n3,1\n");
    let o = bassmt(&["solve", "--mu", &mu, "--nu", &nu, "-o", out]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("x = [2.0], y = [-3.0]"), "{err}");

    let o = bassmt(&["solve", "--mu", &mu, "--nu", &nu, "--max-iter", "1", "-o", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn max_iterations_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mu = write(dir.path(), "mu.csv", "-0.5,1\n0.5,1\n");
    let nu = write(dir.path(), "nu.csv", "-2,1\n0,2\n2,1\n");
    let out = dir.path().join("out");
    let o = bassmt(&["solve", "--mu", &mu, "--nu", &nu, "--max-iter", "1", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sample_from_solution() {
    let dir = tempfile::tempdir().unwrap();
    let mu = write(dir.path(), "mu.csv", "0,1\n");
    let nu = write(dir.path(), "nu.csv", "-1,1\n1,1\n");
    let sol_dir = dir.path().join("sol");
    let o = bassmt(&["solve", "--mu", &mu, "--nu", &nu, "-o", sol_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let solution = sol_dir.join("solution.json");
    let run = |out: &Path, threads: &str| {
        let o = bassmt(&[
            "--threads",
            threads,
            "sample",
            "--solution",
            solution.to_str().unwrap(),
            "--paths",
            "10000",
            "--seed",
            "4",
            "-o",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a, "1");
    run(&b, "3");
    let report = json(&a.join("report.json"));
    let p = report["functionals"]["p_hat"].as_f64().unwrap();
    let se = report["functionals"]["p_se"].as_f64().unwrap();
    assert!((p - 0.797_884_6).abs() < 3.0 * se, "{p} ± {se}");
    assert_eq!(report["martingale"]["pass"], true);
    assert_eq!(report["boundary"]["pass"], true);
    assert_eq!(report["seed"], 4);
    // byte-identical across thread counts and reruns
    for f in ["paths.csv", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("paths.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash: "));
    assert_eq!(lines.next().unwrap(), "# seed: 4");
    assert_eq!(lines.next().unwrap(), "path_id,t,b_1,m_1");
}

#[test]
fn brownian_solution_has_no_stretch() {
    let dir = tempfile::tempdir().unwrap();
    let mu = write(dir.path(), "mu.csv", "0,1\n");
    // 2001 midpoint quantiles of the standard normal
    let n = 2001;
    let body: String = (0..n)
        .map(|k| format!("{},1\n", bassmt::special::quantile((k as f64 + 0.5) / n as f64)))
        .collect();
    let nu = write(dir.path(), "nu.csv", &body);
    let sol = dir.path().join("sol");
    let o = bassmt(&["solve", "--mu", &mu, "--nu", &nu, "-o", sol.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("paths");
    let o = bassmt(&[
        "sample",
        "--solution",
        sol.join("solution.json").to_str().unwrap(),
        "--paths",
        "2000",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let report = json(&out.join("report.json"));
    let mt = report["functionals"]["mt_hat"].as_f64().unwrap();
    assert!(mt < 1e-3, "{mt}");
}

#[test]
fn bad_solution_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"dim\": 1");
    let out = dir.path().join("out");
    let o = bassmt(&["sample", "--solution", &bad, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    let missing = dir.path().join("missing.json");
    let o = bassmt(&["sample", "--solution", missing.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn reproduce_examples() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["binary", "arctan", "circles"] {
        let out = dir.path().join(name);
        let o = bassmt(&["reproduce", name, "-o", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stdout));
        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        assert!(summary.contains("quantity,target,achieved,tolerance,pass"));
        assert!(!summary.contains(",false"));
    }
}

#[test]
fn threads_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_bassmt"))
        .args(["reproduce", "arctan", "-o", out.to_str().unwrap()])
        .env("BASSMT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_bassmt"))
        .args(["reproduce", "arctan", "-o", out.to_str().unwrap()])
        .env("BASSMT_THREADS", "many")
        .output()
        .unwrap();
    assert_ne!(o.status.code(), Some(0));
}
