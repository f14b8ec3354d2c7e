use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gtspec_core::SigmaProfile;
use tempfile::TempDir;

fn gtspec(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gtspec"));
    for (k, _) in std::env::vars() {
        if k.starts_with("GTSPEC_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args);
    cmd
}

fn run(args: &[&str]) -> Output {
    gtspec(args).output().expect("spawn gtspec")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value of `key = value` in a summary.
fn field(summary: &str, key: &str) -> String {
    summary
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("no key {key} in\n{summary}"))
        .to_string()
}

fn num(summary: &str, key: &str) -> f64 {
    field(summary, key).parse().unwrap()
}

fn write_profile(dir: &Path, name: &str, p: &SigmaProfile) -> String {
    let path = dir.join(name);
    fs::write(&path, p.to_text()).unwrap();
    path.display().to_string()
}

#[test]
fn gap_of_constant_two() {
    let o = run(&["gap", "--sigma-const", "2"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(field(&s, "gap").starts_with("1.000000"));
    assert_eq!(field(&s, "cluster_multiplicity"), "2");
    assert_eq!(field(&s, "accumulation_line"), "-1.000000000");
    assert_eq!(field(&s, "kinetic_bound"), "1.000000000");
    assert_eq!(field(&s, "diffusive_bound"), "n/a");
    assert_eq!(field(&s, "tol"), "1e-10");
    assert_eq!(field(&s, "cluster_tol"), "1e-6");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["gap", "--sigma-const", "2", "--sigma-file", "p.txt"]).status.code(), Some(1));
    assert_eq!(run(&["gap", "--sigma-const", "2", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["gap", "--sigma-const", "2", "--tol=-1e-8"]).status.code(), Some(1));
    assert_eq!(run(&["gap"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let half = SigmaProfile::new(vec![0.0, PI, TAU], vec![0.0, 3.0]).unwrap();
    assert!(half.l1_norm() <= 4.0 * PI);
    let path = write_profile(dir.path(), "halfwave.txt", &half);
    let o = run(&["schrodinger", "--sigma-file", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["gap", "--sigma-const=-1"]).status.code(), Some(2));

    let garbled = dir.path().join("bad.txt");
    fs::write(&garbled, "0 1\n1 x\n2π —\n").unwrap();
    let o = run(&["gap", "--sigma-file", garbled.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flag_beats_environment_beats_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# shared settings\ntol = 1e-8\nsigma_const = 1\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let s = stdout(&run(&["gap", "--config", cfg]));
    assert_eq!(field(&s, "tol"), "1e-8");
    assert_eq!(field(&s, "gap"), "0.500000000");

    let s = stdout(&gtspec(&["gap", "--config", cfg]).env("GTSPEC_TOL", "1e-9").output().unwrap());
    assert_eq!(field(&s, "tol"), "1e-9");

    let o = gtspec(&["gap", "--config", cfg, "--tol", "1e-10"]).env("GTSPEC_TOL", "1e-9").output().unwrap();
    assert_eq!(field(&stdout(&o), "tol"), "1e-10");

    // a sigma flag overrides the other source's variable
    let o = gtspec(&["gap", "--sigma-const", "2"]).env("GTSPEC_SIGMA_FILE", "missing.txt").output().unwrap();
    assert!(o.status.success());
    assert!(field(&stdout(&o), "gap").starts_with("1.000000"));
}

#[test]
fn config_files_are_strict() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "tolerance = 1e-8\n").unwrap();
    let o = run(&["gap", "--sigma-const", "1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));

    fs::write(&cfg, "sigma-const = 1\nsigma-file = p.txt\n").unwrap();
    assert_eq!(run(&["gap", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn sweep_reproduces_the_constant_curve() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&["sweep", "--const-range", "0.1:6:60", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(&out).unwrap();
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 60);
    for (s, g) in rows {
        let closed = if s <= 2.0 { s / 2.0 } else { s / 2.0 - (s * s / 4.0 - 1.0).sqrt() };
        assert!((g - closed).abs() < 1e-11, "σ = {s}: {g} vs {closed}");
    }
    let s = stdout(&o);
    assert!(num(&s, "max_check_error") < 1e-8);
    assert_eq!(field(&s, "best_gap"), "1.000000000");
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let p = SigmaProfile::new(vec![0.0, 1.0, 3.5, TAU], vec![0.5, 4.0, 1.5]).unwrap();
    let path = write_profile(dir.path(), "p.txt", &p);
    let a = run(&["spectrum", "--sigma-file", &path, "--format", "csv"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(&["spectrum", "--sigma-file", &path, "--format", "csv"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("re,im,multiplicity,kernel_dim,residual,converged\n"));
    let c = run(&["spectrum", "--sigma-file", &path, "--threads", "1"]);
    let d = run(&["spectrum", "--sigma-file", &path, "--threads", "2"]);
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn profile_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let p = SigmaProfile::new(vec![0.0, 0.7, 2.9, 4.4, TAU], vec![1.25, 0.0, 6.5, 2.0]).unwrap();
    let path = write_profile(dir.path(), "p.txt", &p);
    let back = SigmaProfile::from_text(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(p, back);
    let s = stdout(&run(&["gap", "--sigma-file", &path]));
    assert_eq!(field(&s, "cells"), "4");
    assert_eq!(field(&s, "l1_norm"), format!("{:.9}", p.l1_norm()));
}

#[test]
fn summary_respects_both_bounds() {
    let dir = TempDir::new().unwrap();
    let p = SigmaProfile::new(vec![0.0, PI, TAU], vec![0.0, 8.0]).unwrap();
    let path = write_profile(dir.path(), "p.txt", &p);
    let s = stdout(&run(&["gap", "--sigma-file", &path]));
    let gap = num(&s, "gap");
    assert!(gap <= num(&s, "kinetic_bound") + 1e-6);
    assert!(gap <= num(&s, "diffusive_bound") + 1e-6);
    assert_eq!(field(&s, "diffusive_bound_holds"), "true");

    let o = run(&["schrodinger", "--sigma-file", &path]);
    assert!(o.status.success());
    let s = stdout(&o);
    let slow = num(&s, "slow_eigenvalue");
    assert!(slow >= num(&s, "lambda_s") - 1e-9 && slow < 0.0);
}

#[test]
fn simulate_and_optimize_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("trace.csv");
    let o = run(&["simulate", "--sigma-const", "1", "--t-end", "30", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!((num(&s, "rate") - 0.5).abs() < 0.02);
    assert!(fs::read_to_string(&out).unwrap().starts_with("t,norm,mass\n"));

    let out = dir.path().join("traj.csv");
    let o = run(&["optimize", "--k", "2", "--init", "const:1", "--max-iters", "30", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!((num(&s, "final_gap") - 1.0).abs() < 1e-6);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("iter,gap,cluster_size,sigma_0,sigma_1\n"));

    let o = run(&["optimize", "--sigma-const", "2", "--k", "4"]);
    assert_eq!(field(&stdout(&o), "stop_reason"), "degenerate-leading-cluster");
    assert_eq!(field(&stdout(&o), "iterations"), "0");
}

#[test]
fn selftest_passes() {
    let o = run(&["--selftest"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn failed_diffusive_bound_is_reported() {
    // ‖σ‖₁ > 4π, yet the nearest real eigenvalue sits just left of λ_s
    let dir = TempDir::new().unwrap();
    let p = SigmaProfile::new(vec![0.0, 1.0, 3.5, TAU], vec![0.5, 4.0, 1.5]).unwrap();
    let path = write_profile(dir.path(), "p.txt", &p);
    let o = run(&["gap", "--sigma-file", &path]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(field(&s, "diffusive_bound_holds"), "false");
    assert!(num(&s, "gap") <= num(&s, "kinetic_bound"));
    assert_eq!(run(&["schrodinger", "--sigma-file", &path]).status.code(), Some(4));
}
